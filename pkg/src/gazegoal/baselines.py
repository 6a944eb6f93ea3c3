"""Reading-time informed embedding-similarity selection baselines.

Two zero-training selection models over a trial's three candidate
questions:

* ``rt_weighted``: embed the passage as the reading-time weighted average
  of its word embeddings and pick the question whose aggregate vector is
  most cosine-similar to it;
* ``rt_profile``: for each question build the per-word vector of
  question-word cosine similarities and pick the question whose profile
  is most cosine-similar to the per-word reading-time vector.

Both use total fixation duration per word normalized by the text's total
reading time. Ties break toward the lowest question type index; cosine
against a zero vector scores -inf so degenerate candidates are never
selected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus.measures import aggregate_word_measures
from .corpus.types import Question, QuestionSet, Trial
from .embeddings import EmbeddingProvider

# reading-time normalization variant; only total-RT normalization is
# implemented, the flag is recorded with baseline outputs for future variants
RT_NORM = "total_rt"


@dataclass
class SelectionScores:
    trial_key: tuple[str, ...]
    predicted: Question
    scores: dict[int, float]  # type_index -> score
    degenerate_rt: bool = False


def normalized_rt_vector(trial: Trial) -> np.ndarray:
    """Per-word dwell times normalized to sum to 1 (all-zero when the trial
    has no on-text dwell; callers fall back to uniform weights)."""
    dwell = aggregate_word_measures(trial).dwell_time_ms
    total = dwell.sum()
    if total <= 0:
        warnings.warn(f"trial {trial.key}: zero on-text dwell, degenerate RT vector")
        return np.zeros_like(dwell)
    return dwell / total


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return -np.inf
    return float(np.dot(a, b) / (na * nb))


def _pick(question_set: QuestionSet, scores: dict[int, float]) -> Question:
    best = max(sorted(scores), key=lambda t: (scores[t], -t))
    return question_set.by_type(best)


def _rt_or_uniform(trial: Trial) -> tuple[np.ndarray, bool]:
    rt = normalized_rt_vector(trial)
    if rt.sum() <= 0:
        warnings.warn(f"trial {trial.key}: falling back to uniform RT weights")
        return np.full(trial.paragraph.n_words, 1.0 / trial.paragraph.n_words), True
    return rt, False


def select_rt_weighted_passage(
    trial: Trial, question_set: QuestionSet, provider: EmbeddingProvider
) -> SelectionScores:
    rt, degenerate = _rt_or_uniform(trial)
    word_vecs = np.asarray(provider.word_vectors(trial.paragraph), dtype=np.float64)
    passage = rt @ word_vecs
    scores = {
        q.type_index: _cosine(passage, np.asarray(provider.question_vector(q), dtype=np.float64))
        for q in question_set.questions
    }
    return SelectionScores(trial.key, _pick(question_set, scores), scores, degenerate)


def select_rt_profile(
    trial: Trial, question_set: QuestionSet, provider: EmbeddingProvider
) -> SelectionScores:
    rt, degenerate = _rt_or_uniform(trial)
    word_vecs = np.asarray(provider.word_vectors(trial.paragraph), dtype=np.float64)
    word_norms = np.linalg.norm(word_vecs, axis=1)
    safe = np.where(word_norms > 0, word_norms, 1.0)
    scores = {}
    for q in question_set.questions:
        qv = np.asarray(provider.question_vector(q), dtype=np.float64)
        qn = np.linalg.norm(qv)
        if qn == 0:
            scores[q.type_index] = -np.inf
            continue
        sims = word_vecs @ qv / (safe * qn)
        sims[word_norms == 0] = 0.0
        scores[q.type_index] = _cosine(sims, rt)
    return SelectionScores(trial.key, _pick(question_set, scores), scores, degenerate)


BASELINES = {
    "rt-weighted": select_rt_weighted_passage,
    "rt-profile": select_rt_profile,
}


def run_baseline(
    which: str,
    trials: list[Trial],
    question_sets,
    provider: EmbeddingProvider,
) -> list[SelectionScores]:
    """Run one baseline over a list of trials (stateless, order-preserving)."""
    if which not in BASELINES:
        raise ValueError(f"unknown baseline {which!r}; want one of {sorted(BASELINES)}")
    fn = BASELINES[which]
    return [fn(t, question_sets[t.paragraph.key], provider) for t in trials]
