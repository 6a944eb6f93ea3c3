import pytest

from gazegoal.corpus.types import Fixation, Paragraph, Question, QuestionSet, Trial, Word
from gazegoal.synth import synth_corpus


def make_paragraph(words, article_id="a1", paragraph_id="p1", difficulty="original"):
    return Paragraph(
        article_id, paragraph_id, difficulty,
        tuple(Word(index=i, text=w) for i, w in enumerate(words)),
    )


def make_question_set(paragraph, span1=None, span2=None):
    n = paragraph.n_words
    span1 = span1 or (0, max(1, n // 2))
    span2 = span2 or (max(1, n // 2), n)
    qs = (
        Question("q1", "What is said about the start?", 1, span1),
        Question("q2", "Why does the end matter?", 2, span2),
        Question("q3", "How does the end work?", 3, span2),
    )
    return QuestionSet(paragraph.key, qs)


def make_trial(paragraph, question, word_seq, durations=None, participant="s1"):
    durations = durations or [100.0] * len(word_seq)
    fixations = tuple(
        Fixation(fix_index=i + 1, word_index=w, duration_ms=d)
        for i, (w, d) in enumerate(zip(word_seq, durations))
    )
    return Trial(
        participant_id=participant,
        paragraph=paragraph,
        question=question,
        fixations=fixations,
        paragraph_rt_ms=sum(durations) * 1.2,
    )


@pytest.fixture
def paragraph():
    return make_paragraph(["The", "quick", "brown", "fox", "jumps", "over"])


@pytest.fixture
def question_set(paragraph):
    return make_question_set(paragraph)


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(n_articles=4, paragraphs_per_article=2, n_participants=6,
                        words_per_paragraph=16, fixations_per_trial=14, seed=11)


@pytest.fixture(scope="session")
def split_corpus():
    # the acceptance-grade split corpus: 20 articles x 40 participants
    return synth_corpus(n_articles=20, paragraphs_per_article=3, n_participants=40,
                        words_per_paragraph=12, fixations_per_trial=6, seed=3)


def random_trial(rng, n_words=None, n_fix=None, off_text=True):
    n_words = n_words or int(rng.integers(2, 30))
    n_fix = n_fix if n_fix is not None else int(rng.integers(1, 60))
    paragraph = make_paragraph([f"w{i}" for i in range(n_words)],
                               paragraph_id=f"p{rng.integers(1e6)}")
    qs = make_question_set(paragraph)
    seq = []
    for _ in range(n_fix):
        if off_text and rng.random() < 0.08:
            seq.append(-1)
        else:
            seq.append(int(rng.integers(0, n_words)))
    durs = [float(rng.integers(40, 500)) for _ in range(n_fix)]
    trial = make_trial(paragraph, qs.by_type(1), seq, durs)
    return trial, qs
