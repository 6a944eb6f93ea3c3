"""Synthetic corpora with controllable gaze behavior.

Used by the test suite and the kernel benchmark. Question types are
assigned to (participant, paragraph) pairs by a Latin-square phase so the
corpus is counterbalanced: any participant block containing at least one
of each phase sees a near-balanced distribution of question types for
every paragraph.
"""

from __future__ import annotations

import numpy as np

from .corpus.types import (
    OFF_TEXT,
    Corpus,
    Fixation,
    Paragraph,
    Question,
    QuestionSet,
    Trial,
    Word,
)

_VOCAB = (
    "the a an of to in on for with from about over under between young "
    "wolf island sea tax bottle paw print snow winter city village reader "
    "school market train paper number people group story event season "
    "road bridge garden river mountain forest doctor farmer sailor letter "
    "music answer question student teacher window morning evening history "
    "science nature animal money health police report reason result "
    "problem moment minute century journey project plan idea voice light "
    "water stone glass metal wood field house boat plane wheel engine "
    "walks runs stands falls grows opens closes brings carries follows "
    "finds keeps leaves makes means moves plays puts reads says sees "
    "shows takes tells thinks turns wants works old new large small local "
    "early late public private common rare simple hard warm cold green "
    "blue quick brown fox jumps lazy dog"
).split()

_FUNCTION_WORDS = frozenset(
    "the a an of to in on for with from about over under between and or".split()
)

_Q_TEMPLATES = {
    1: "What is said about {}?",
    2: "Why does the passage mention {}?",
    3: "How does the text describe {}?",
}


def _make_paragraph(rng: np.random.Generator, article_id: str, paragraph_id: str,
                    difficulty: str, n_words: int) -> Paragraph:
    tokens = rng.choice(len(_VOCAB), size=n_words)
    words = []
    line_len = 12
    for i, t in enumerate(tokens):
        text = _VOCAB[int(t)]
        words.append(
            Word(
                index=i,
                text=text,
                top=float(20 + 30 * (i // line_len)),
                left=float(10 + 55 * (i % line_len)),
                start_of_line=(i % line_len == 0),
                end_of_line=(i % line_len == line_len - 1),
                frequency=float(rng.uniform(1.0, 7.0)),
                surprisal=float(rng.uniform(0.5, 20.0)),
                is_content_word=text not in _FUNCTION_WORDS,
                left_dependents_count=int(rng.integers(0, 3)),
                right_dependents_count=int(rng.integers(0, 3)),
                distance_to_head=int(rng.integers(-4, 5)),
            )
        )
    return Paragraph(article_id, paragraph_id, difficulty, tuple(words))


def _question_text(rng: np.random.Generator, paragraph: Paragraph,
                   span: tuple[int, int], type_index: int) -> str:
    content = [w.text for w in paragraph.words[span[0]:span[1]] if w.is_content_word]
    if not content:
        content = [w.text for w in paragraph.words[span[0]:span[1]]]
    k = min(len(content), 3)
    picks = " ".join(content[i] for i in sorted(rng.choice(len(content), size=k, replace=False)))
    return _Q_TEMPLATES[type_index].format(picks)


def _make_question_set(rng: np.random.Generator, paragraph: Paragraph) -> QuestionSet:
    n = paragraph.n_words
    third = max(n // 3, 2)
    span1 = (0, third)
    span2 = (n - third, n)
    if rng.random() < 0.5:
        span1, span2 = span2, span1
    questions = []
    for t, span in ((1, span1), (2, span2), (3, span2)):
        text = _question_text(rng, paragraph, span, t)
        answers = tuple(f"option {c} for {paragraph.paragraph_id} t{t}" for c in "abcd")
        questions.append(
            Question(
                question_id=f"{paragraph.article_id}_{paragraph.paragraph_id}_"
                            f"{paragraph.difficulty_level}_q{t}",
                text=text,
                type_index=t,
                critical_span=span,
                answers=answers,
                correct_answer=int(rng.integers(0, 4)),
            )
        )
    return QuestionSet(paragraph.key, tuple(questions))


def _scanpath(rng: np.random.Generator, n_words: int, span: tuple[int, int],
              n_fix: int, span_focus: float, off_text_rate: float) -> list[Fixation]:
    fixations = []
    for i in range(n_fix):
        if rng.random() < off_text_rate:
            w = OFF_TEXT
        elif rng.random() < span_focus:
            w = int(rng.integers(span[0], span[1]))
        else:
            w = int(rng.integers(0, n_words))
        dur = float(rng.integers(60, 400))
        fixations.append(
            Fixation(
                fix_index=i + 1,
                word_index=w,
                duration_ms=dur,
                pupil=float(rng.uniform(600, 1200)),
                x=float(rng.uniform(0, 800)),
                y=float(rng.uniform(0, 600)),
                next_sac_duration_ms=float(rng.uniform(15, 80)),
                next_sac_amplitude=float(rng.uniform(0.5, 8.0)),
                next_sac_angle=float(rng.uniform(-180, 180)),
                next_sac_avg_velocity=float(rng.uniform(30, 300)),
                next_sac_peak_velocity=float(rng.uniform(60, 600)),
                next_fix_distance=float(rng.uniform(10, 400)),
                prev_fix_distance=float(rng.uniform(10, 400)),
                next_fix_angle=float(rng.uniform(-180, 180)),
                prev_fix_angle=float(rng.uniform(-180, 180)),
            )
        )
    return fixations


def synth_corpus(
    n_articles: int = 4,
    paragraphs_per_article: int = 2,
    n_participants: int = 6,
    words_per_paragraph: int = 24,
    fixations_per_trial: int = 30,
    span_focus: float = 0.0,
    off_text_rate: float = 0.05,
    seed: int = 0,
) -> Corpus:
    """Build a counterbalanced synthetic corpus.

    ``span_focus`` is the probability that a fixation lands inside the
    assigned question's critical span (0 means uniform over the text);
    use values near 1 to plant a strong gaze-goal signal.
    """
    rng = np.random.default_rng(seed)
    paragraphs = {}
    question_sets = {}
    ordered_paragraphs = []
    for a in range(n_articles):
        for p in range(paragraphs_per_article):
            difficulty = "original" if (a + p) % 2 == 0 else "simplified"
            jitter = max(1, words_per_paragraph // 4)
            n_words = int(rng.integers(words_per_paragraph - jitter,
                                       words_per_paragraph + jitter + 1))
            par = _make_paragraph(
                rng, f"a{a:03d}", f"p{p:02d}", difficulty, n_words
            )
            paragraphs[par.key] = par
            question_sets[par.key] = _make_question_set(rng, par)
            ordered_paragraphs.append(par)

    trials = []
    for pi in range(n_participants):
        participant = f"s{pi:03d}"
        phase = pi % 3
        for rank, par in enumerate(ordered_paragraphs):
            qtype = (phase + rank) % 3 + 1
            question = question_sets[par.key].by_type(qtype)
            n_fix = int(rng.integers(max(fixations_per_trial // 2, 2),
                                     fixations_per_trial + 1))
            fixations = _scanpath(
                rng, par.n_words, question.critical_span, n_fix,
                span_focus, off_text_rate,
            )
            total = sum(f.duration_ms for f in fixations)
            trials.append(
                Trial(
                    participant_id=participant,
                    paragraph=par,
                    question=question,
                    fixations=tuple(fixations),
                    paragraph_rt_ms=total * 1.15,
                    position_in_experiment=rank % 54 + 1,
                    comprehension_correct=bool(rng.random() < 0.8),
                )
            )
    return Corpus(paragraphs=paragraphs, question_sets=question_sets, trials=trials)
