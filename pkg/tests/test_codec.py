import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazegoal import codec
from gazegoal.codec import (
    CodecError,
    build_fewshot_prompt,
    build_prompt,
    eligible_fewshot_pool,
    encode_scanpath,
    parse_generated_question,
    parse_scanpath,
    saccade_direction,
)
from gazegoal.corpus.types import Fixation
from gazegoal.splits import make_folds
from gazegoal.synth import synth_corpus

from conftest import make_paragraph, make_question_set, make_trial, random_trial


def fix(i, w, d=100.0):
    return Fixation(fix_index=i, word_index=w, duration_ms=d)


def test_saccade_direction_trivials():
    assert saccade_direction(fix(1, 4), fix(2, 3)) == "backward"
    assert saccade_direction(fix(1, 4), fix(2, 4)) == "within"
    assert saccade_direction(fix(1, 4), fix(2, 5)) == "forward"
    with pytest.raises(CodecError):
        saccade_direction(fix(1, -1), fix(2, 3))


def fox_paragraph():
    return make_paragraph(["The", "quick", "brown", "over", "fox", "jumps", "lazy"])


def test_fixation_level_literal_example():
    # fixation on word 4 "fox" for 220 ms, next saccade back to word 3
    p = fox_paragraph()
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [4, 3], [220, 150])
    body = encode_scanpath(trial, "fixation_level").body
    assert body.startswith('[[4, "fox", 220, backward], ')
    assert body == '[[4, "fox", 220, backward], [3, "over", 150]]'


def test_word_level_literal_example():
    # word 4 "fox": total 320 ms, 2 incoming forward, 1 incoming backward,
    # 3 outgoing forward, 0 outgoing backward
    p = fox_paragraph()
    qs = make_question_set(p)
    seq = [3, 4, 5, 4, 6, 2, 4, 5]
    durs = [90, 100, 80, 120, 70, 60, 100, 50]
    trial = make_trial(p, qs.by_type(1), seq, durs)
    body = encode_scanpath(trial, "word_level").body
    assert '[4, "fox", 320, 2, 1, 3, 0]' in body


def test_single_fixation_has_no_direction():
    p = fox_paragraph()
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [0], [150])
    assert encode_scanpath(trial, "fixation_level").body == '[[0, "The", 150]]'


def test_empty_scanpath():
    p = fox_paragraph()
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [-1], [100])
    assert encode_scanpath(trial, "fixation_level").body == "[]"
    assert encode_scanpath(trial, "word_level").body == "[]"


def test_duration_rounds_half_up():
    p = fox_paragraph()
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [0], [219.5])
    assert '"The", 220]' in encode_scanpath(trial, "fixation_level").body


def test_direction_skips_off_text():
    p = fox_paragraph()
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [4, -1, 3], [100, 50, 80])
    body = encode_scanpath(trial, "fixation_level").body
    # off-text fixation dropped; direction computed against next on-text
    assert body == '[[4, "fox", 100, backward], [3, "over", 80]]'


def test_word_escaping_round_trip():
    p = make_paragraph(['say', '"hi"', "back\\slash"])
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [0, 1, 2], [100, 110, 120])
    body = encode_scanpath(trial, "fixation_level").body
    records = parse_scanpath(body, "fixation_level")
    assert [r[1] for r in records] == ['say', '"hi"', "back\\slash"]


def _round(x):
    import math

    return int(math.floor(x + 0.5))


def _check_round_trip(trial):
    on = [f for f in trial.fixations if f.on_text]
    for fmt in codec.FORMATS:
        sp = encode_scanpath(trial, fmt)
        parsed = parse_scanpath(sp.body, fmt)
        fix_records = word_records = None
        if fmt == "fixation_level":
            fix_records = parsed
        elif fmt == "word_level":
            word_records = parsed
        else:
            fix_records, word_records = parsed
        if fix_records is not None:
            assert len(fix_records) == len(on)
            for i, (rec, f) in enumerate(zip(fix_records, on)):
                assert rec[0] == f.word_index
                assert rec[1] == trial.paragraph.words[f.word_index].text
                assert rec[2] == _round(f.duration_ms)
                if i + 1 < len(on):
                    assert rec[3] == saccade_direction(f, on[i + 1])
                else:
                    assert len(rec) == 3
        if word_records is not None:
            # independent recomputation of totals and transition counts
            totals, in_f, in_b, out_f, out_b = {}, {}, {}, {}, {}
            for f in on:
                totals[f.word_index] = totals.get(f.word_index, 0.0) + f.duration_ms
            for a, b in zip(on, on[1:]):
                if b.word_index > a.word_index:
                    out_f[a.word_index] = out_f.get(a.word_index, 0) + 1
                    in_f[b.word_index] = in_f.get(b.word_index, 0) + 1
                elif b.word_index < a.word_index:
                    out_b[a.word_index] = out_b.get(a.word_index, 0) + 1
                    in_b[b.word_index] = in_b.get(b.word_index, 0) + 1
            assert [r[0] for r in word_records] == sorted(totals)
            for rec in word_records:
                w = rec[0]
                assert rec[2] == _round(totals[w])
                assert rec[3:] == [in_f.get(w, 0), in_b.get(w, 0),
                                   out_f.get(w, 0), out_b.get(w, 0)]
            # arrival/departure conservation inside the trial
            assert sum(r[3] for r in word_records) == sum(r[5] for r in word_records)
            assert sum(r[4] for r in word_records) == sum(r[6] for r in word_records)


def test_round_trip_random_trials():
    rng = np.random.default_rng(123)
    for _ in range(300):
        trial, _ = random_trial(rng)
        _check_round_trip(trial)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.floats(1, 1000)), min_size=0, max_size=40),
       st.booleans())
def test_round_trip_property(path, trailing_off_text):
    p = make_paragraph([f"w{i}" for i in range(10)])
    qs = make_question_set(p)
    seq = [w for w, _ in path]
    durs = [d for _, d in path]
    if trailing_off_text:
        seq, durs = seq + [-1], durs + [50.0]
    if not seq:
        seq, durs = [-1], [50.0]
    trial = make_trial(p, qs.by_type(1), seq, durs)
    _check_round_trip(trial)


def test_prompt_main_template(small_corpus):
    trial = small_corpus.trials[0]
    b = build_prompt(trial, "main", "fixation_level")
    assert "Eye Movements Representation:" in b.prompt
    assert "Output only the original question presented to the reader" in b.prompt
    assert trial.paragraph.text in b.prompt
    assert b.scanpath.body in b.prompt
    assert b.target is None
    # byte stability
    assert build_prompt(trial, "main", "fixation_level").prompt == b.prompt


def test_prompt_format_descriptions(small_corpus):
    trial = small_corpus.trials[0]
    fx = build_prompt(trial, "main", "fixation_level").prompt
    assert "direction of next saccade (backward to earlier word" in fx
    wd = build_prompt(trial, "main", "word_level").prompt
    assert "incoming forward saccades (from earlier word)" in wd
    both = build_prompt(trial, "main", "combined").prompt
    assert "two lists of word-level and fixation-level features" in both


def test_prompt_text_only(small_corpus):
    trial = small_corpus.trials[0]
    b = build_prompt(trial, "text_only")
    assert "generate a question a reader had in mind" in b.prompt
    assert b.scanpath is None
    assert trial.paragraph.text in b.prompt
    arb = build_prompt(trial, "arbitrary")
    assert arb.prompt == b.prompt  # same template, different downstream use


def test_prompt_alternative(small_corpus):
    trial = small_corpus.trials[0]
    b = build_prompt(trial, "alternative", "word_level")
    assert "Your output must precisely match the original question" in b.prompt
    assert "a time series composed of word-level features" in b.prompt


def test_prompt_target_only_for_training(small_corpus):
    trial = small_corpus.trials[0]
    assert build_prompt(trial, "main", include_target=True).target == \
        trial.question.text


def test_prompt_empty_paragraph_guard():
    # whitespace-only stimulus words
    p = make_paragraph([" ", " "])
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [0], [100])
    with pytest.raises(CodecError, match="empty stimulus"):
        build_prompt(trial, "main")


@pytest.fixture(scope="module")
def fewshot_world():
    corpus = synth_corpus(n_articles=8, paragraphs_per_article=2,
                          n_participants=16, words_per_paragraph=10,
                          fixations_per_trial=6, seed=21)
    folds = make_folds(corpus, seed=5)
    fold = folds[0]
    pool = [corpus.trial(k) for k in fold.trials_in("train")]
    return corpus, fold, pool


def _trials_in_regime(corpus, fold, regime):
    return [corpus.trial(k) for k, v in fold.assignment.items()
            if v == "test" and fold.regime[k] == regime]


@pytest.mark.parametrize("regime,check", [
    ("new_text", lambda t, ex: ex.participant_id == t.participant_id
        and ex.paragraph.article_id != t.paragraph.article_id),
    ("new_participant", lambda t, ex: ex.paragraph.key == t.paragraph.key
        and ex.participant_id != t.participant_id),
    ("new_text_and_participant", lambda t, ex:
        ex.participant_id != t.participant_id
        and ex.paragraph.article_id != t.paragraph.article_id),
])
def test_fewshot_leakage_rules(fewshot_world, regime, check):
    corpus, fold, pool = fewshot_world
    trials = _trials_in_regime(corpus, fold, regime)
    assert trials, f"no {regime} test trials in fixture corpus"
    trial = trials[0]
    bundle = build_fewshot_prompt(trial, regime, pool, seed=3)
    assert len(bundle.examples) == 10
    by_key = {"|".join(t.key): t for t in pool}
    for key, _, question in bundle.examples:
        ex = by_key[key]
        assert check(trial, ex)
        assert question == ex.question.text  # output is the pool trial's truth


def test_fewshot_deterministic(fewshot_world):
    corpus, fold, pool = fewshot_world
    trial = _trials_in_regime(corpus, fold, "new_text")[0]
    a = build_fewshot_prompt(trial, "new_text", pool, seed=9)
    b = build_fewshot_prompt(trial, "new_text", pool, seed=9)
    assert a.prompt == b.prompt
    c = build_fewshot_prompt(trial, "new_text", pool, seed=10)
    assert c.prompt != a.prompt


def test_fewshot_scaffold(fewshot_world):
    corpus, fold, pool = fewshot_world
    trial = _trials_in_regime(corpus, fold, "new_participant")[0]
    bundle = build_fewshot_prompt(trial, "new_participant", pool, seed=0)
    assert bundle.prompt.count("<Example>") == 10
    assert bundle.prompt.count("</OUTPUT>") == 10
    assert "Fixations_data:" in bundle.prompt
    # the evaluated trial itself is never among the examples (its question
    # text may legitimately recur: same-paragraph examples share the set)
    assert "|".join(trial.key) not in {k for k, _, _ in bundle.examples}


def test_fewshot_shortfall_error(fewshot_world):
    corpus, fold, pool = fewshot_world
    trial = _trials_in_regime(corpus, fold, "new_text")[0]
    tiny_pool = eligible_fewshot_pool(trial, "new_text", pool)[:4]
    with pytest.raises(CodecError, match="new_text.*short by 6"):
        build_fewshot_prompt(trial, "new_text", tiny_pool, seed=0)


def test_parse_generated_question():
    q = '"What is among the primary attractions of Lemnos?"'
    assert parse_generated_question(q) == \
        ("What is among the primary attractions of Lemnos?", False)
    multi = "Answer: Why do horseshoes bring luck?\nExplanation: because."
    assert parse_generated_question(multi) == ("Why do horseshoes bring luck?", False)
    assert parse_generated_question("") == ("", True)
    fenced = "```\nHow was the bridge built?\n```"
    assert parse_generated_question(fenced) == ("How was the bridge built?", False)
    statement = "The reader wanted to know about wolves"
    out, flagged = parse_generated_question(statement)
    assert out == statement and not flagged
