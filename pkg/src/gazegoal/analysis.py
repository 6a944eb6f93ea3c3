"""Corpus-level question/text n-gram overlap and the trial-feature export.

The overlap report measures, per question, the unigram and bigram overlap
(precision against the question length, recall against the context length,
and their harmonic mean) with the full paragraph, the critical span, and
the out-of-span remainder, plus content-word-restricted variants. The
trial-feature table exports, per trial, the reading-time partition around
the critical span together with item/participant covariates and a model's
probability of the true question, ready for external mixed-effects
fitting; predictors are emitted raw and z-normalized.
"""

from __future__ import annotations

import re
from collections import Counter

import numpy as np
import pandas as pd

from .corpus.measures import aggregate_word_measures
from .corpus.types import Corpus

_WORD_RE = re.compile(r"\w+")

# function-word list used to content-filter question tokens (paragraph
# tokens carry explicit content-word flags)
_FUNCTION_WORDS = frozenset("""
a an the and or but if then else of to in on at by for with from into onto
over under between among about as is are was were be been being am do does
did done have has had having will would shall should can could may might
must not no nor this that these those it its he she they them his her their
we you i me my your our us what which who whom whose when where why how
""".split())

TEXT_PARTS = ("paragraph", "critical_span", "out_of_critical_span")
MEASURES = ("rouge1", "rouge2", "rouge1_content", "rouge2_content")


def _tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(question_tokens: list[str], context_tokens: list[str], n: int):
    """(precision, recall, f1) of clipped n-gram overlap; precision
    normalizes by question n-grams, recall by context n-grams."""
    qn = _ngrams(question_tokens, n)
    cn = _ngrams(context_tokens, n)
    total_q = sum(qn.values())
    total_c = sum(cn.values())
    overlap = sum(min(c, cn[g]) for g, c in qn.items())
    p = overlap / total_q if total_q else 0.0
    r = overlap / total_c if total_c else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f1


def question_overlap(question_text: str, context_words, measure: str):
    """Overlap of one question against a word list under one measure.

    ``context_words`` is a list of (token, is_content_word) pairs.
    """
    q_tokens = _tokens(question_text)
    c_tokens = [w for w, _ in context_words]
    if measure.endswith("_content"):
        q_tokens = [t for t in q_tokens if t not in _FUNCTION_WORDS]
        c_tokens = [w for w, content in context_words if content]
        n = 1 if measure == "rouge1_content" else 2
    else:
        n = 1 if measure == "rouge1" else 2
    return rouge_n(q_tokens, c_tokens, n)


def _context_words(paragraph, span=None, invert=False):
    if span is None:
        chosen = paragraph.words
    elif invert:
        chosen = [w for w in paragraph.words if not (span[0] <= w.index < span[1])]
    else:
        chosen = [w for w in paragraph.words if span[0] <= w.index < span[1]]
    result = []
    for w in chosen:
        for tok in _tokens(w.text):
            result.append((tok, w.is_content_word))
    return result


def ngram_overlap_report(corpus: Corpus) -> pd.DataFrame:
    """Mean overlap per (text part, measure) across all corpus questions.

    The content-word bigram variant is included for completeness alongside
    the standard unigram/bigram rows.
    """
    acc: dict[tuple[str, str], list[tuple[float, float, float]]] = {
        (part, m): [] for part in TEXT_PARTS for m in MEASURES
    }
    for qs in corpus.question_sets.values():
        paragraph = corpus.paragraphs[qs.paragraph_key]
        ctx = {
            "paragraph": _context_words(paragraph),
            "critical_span": None,
            "out_of_critical_span": None,
        }
        for q in qs.questions:
            ctx["critical_span"] = _context_words(paragraph, q.critical_span)
            ctx["out_of_critical_span"] = _context_words(
                paragraph, q.critical_span, invert=True
            )
            for part in TEXT_PARTS:
                for m in MEASURES:
                    acc[(part, m)].append(question_overlap(q.text, ctx[part], m))
    rows = []
    for part in TEXT_PARTS:
        for m in MEASURES:
            vals = np.array(acc[(part, m)], dtype=float)
            p, r, f1 = (vals.mean(axis=0) if vals.size else (np.nan,) * 3)
            rows.append({"text_part": part, "measure": m, "n_questions": len(vals),
                         "precision": float(p), "recall": float(r), "f1": float(f1)})
    return pd.DataFrame(rows)


# --- trial feature table ---

RAW_PREDICTORS = (
    "tfd_before_span", "tfd_within_span", "tfd_after_span",
    "position_in_experiment", "comprehension_score", "paragraph_length",
    "span_length", "span_location", "is_simplified",
    "question_span_rouge1_precision",
)


def trial_feature_table(
    corpus: Corpus,
    selection_probabilities: dict[tuple, float],
) -> pd.DataFrame:
    """Per-trial covariates plus the model's probability of the true question.

    Reading time partitions are per-word total fixation durations before,
    within, and after the critical span (0 with an emptiness flag when the
    span touches a paragraph edge). All predictors also appear z-normalized
    (columns prefixed ``z_``); the weighted recombination of the three
    partitions equals the paragraph's per-word total fixation duration.
    """
    comp: dict[str, list[bool]] = {}
    for t in corpus.trials:
        comp.setdefault(t.participant_id, []).append(t.comprehension_correct)
    comp_score = {p: float(np.mean(v)) for p, v in comp.items()}

    rows = []
    for t in corpus.trials:
        m = aggregate_word_measures(t)
        start, end = t.question.critical_span
        n = t.paragraph.n_words
        dwell = m.dwell_time_ms
        len_before, len_within, len_after = start, end - start, n - end
        tfd_before = dwell[:start].sum() / len_before if len_before else 0.0
        tfd_within = dwell[start:end].sum() / len_within
        tfd_after = dwell[end:].sum() / len_after if len_after else 0.0
        ctx = _context_words(t.paragraph, t.question.critical_span)
        p_rouge, _, _ = question_overlap(t.question.text, ctx, "rouge1")
        rows.append({
            "trial_key": "|".join(t.key),
            "participant_id": t.participant_id,
            "paragraph_key": "|".join(t.paragraph.key),
            "tfd_before_span": float(tfd_before),
            "tfd_within_span": float(tfd_within),
            "tfd_after_span": float(tfd_after),
            "before_empty": int(len_before == 0),
            "after_empty": int(len_after == 0),
            "position_in_experiment": t.position_in_experiment,
            "comprehension_score": comp_score[t.participant_id],
            "paragraph_length": n,
            "span_length": len_within,
            "span_location": start / n,
            "difficulty_level": t.paragraph.difficulty_level,
            "is_simplified": int(t.paragraph.difficulty_level == "simplified"),
            "question_span_rouge1_precision": float(p_rouge),
            "p_correct": float(selection_probabilities.get(t.key, np.nan)),
        })
    df = pd.DataFrame(rows)
    for col in RAW_PREDICTORS:
        v = df[col].to_numpy(dtype=float)
        sd = v.std()
        df[f"z_{col}"] = (v - v.mean()) / sd if sd > 0 else np.zeros(len(v))
    return df


def validate_feature_table(df: pd.DataFrame) -> None:
    """Schema check for the mixed-effects export: grouping columns, raw and
    z-normalized predictors, and a finite outcome column must be present."""
    required = (
        {"trial_key", "participant_id", "paragraph_key", "p_correct",
         "difficulty_level"}
        | set(RAW_PREDICTORS)
        | {f"z_{c}" for c in RAW_PREDICTORS}
    )
    missing = required - set(df.columns)
    if missing:
        raise ValueError(f"feature table missing columns: {sorted(missing)}")
    numeric = df[[c for c in df.columns
                  if c.startswith("z_") or c in RAW_PREDICTORS]]
    bad = ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        raise ValueError("feature table contains non-finite predictor values")
