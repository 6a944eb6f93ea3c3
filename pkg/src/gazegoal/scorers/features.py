"""Candidate-input assembly and feature standardization for the scorers.

Each trial yields three candidate inputs (one per question of the
paragraph's set) sharing the same gaze features. Per-fixation rows combine
the enabled feature groups:

* ``fixation_level``: fixation index, duration, pupil, x, y;
* ``saccade``      : neighbour-fixation angles/distances, outgoing-saccade
  amplitude/angle/velocities/duration, and the next fixated word index;
* ``word_level``   : the word-measure vector of the fixated word
  (repeated for every fixation on that word);
* ``linguistic``   : lexical properties of the fixated word;
* ``paragraph_rt`` : total paragraph reading time (one scalar per trial).

Standardization statistics are fit on a fold's training split only and
carry the fold id; applying them to another fold is refused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus.measures import WordMeasures, aggregate_word_measures
from ..corpus.types import OFF_TEXT, Question, QuestionSet, Trial

FEATURE_GROUPS = ("fixation_level", "saccade", "word_level", "linguistic", "paragraph_rt")

FIXATION_FEATURES = ("fix_index", "duration_ms", "pupil", "x", "y")
SACCADE_FEATURES = (
    "next_fix_angle", "prev_fix_angle", "next_fix_distance", "prev_fix_distance",
    "next_sac_amplitude", "next_sac_angle", "next_sac_avg_velocity",
    "next_sac_duration_ms", "next_sac_peak_velocity", "next_fixated_word_index",
)
LINGUISTIC_FEATURES = (
    "word_length", "frequency", "surprisal", "is_content_word", "start_of_line",
    "end_of_line", "left_dependents_count", "right_dependents_count",
    "distance_to_head",
)


class FeatureConfigError(ValueError):
    pass


def validate_feature_config(groups) -> frozenset[str]:
    groups = frozenset(groups)
    unknown = groups - set(FEATURE_GROUPS)
    if unknown:
        raise FeatureConfigError(
            f"unknown feature group(s) {sorted(unknown)}; "
            f"valid groups: {FEATURE_GROUPS}"
        )
    return groups


@dataclass
class CandidateInput:
    """Gaze + text features for one (trial, candidate question) pair."""

    trial_key: tuple[str, ...]
    question: Question
    word_indices: np.ndarray        # fixated word per feature row
    features: np.ndarray            # (n_on_text_fixations, n_features)
    feature_names: tuple[str, ...]
    n_words: int
    paragraph_key: tuple[str, str, str]
    paragraph_rt: float | None
    degenerate: bool = False        # no on-text fixations


def _per_fixation_matrix(
    trial: Trial, groups: frozenset[str], measures: WordMeasures
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    on = [f for f in trial.fixations if f.on_text]
    widx = np.array([f.word_index for f in on], dtype=np.int64)
    cols: list[np.ndarray] = []
    names: list[str] = []

    if "fixation_level" in groups:
        for name in FIXATION_FEATURES:
            cols.append(np.array([getattr(f, name) for f in on], dtype=np.float64))
            names.append(name)
    if "saccade" in groups:
        for name in SACCADE_FEATURES[:-1]:
            cols.append(np.array([getattr(f, name) for f in on], dtype=np.float64))
            names.append(name)
        if widx.size:
            nxt = np.append(widx[1:], OFF_TEXT).astype(np.float64)
        else:
            nxt = np.zeros(0, dtype=np.float64)
        cols.append(nxt)
        names.append("next_fixated_word_index")
    if "word_level" in groups:
        mat = measures.as_matrix()  # (n_words, n_measures)
        sub = mat[widx] if widx.size else np.zeros((0, mat.shape[1]))
        for j, mname in enumerate(WordMeasures.FIELD_NAMES):
            cols.append(sub[:, j])
            names.append(f"word_{mname}")
    if "linguistic" in groups:
        words = trial.paragraph.words
        attr = {
            "word_length": lambda w: w.length,
            "frequency": lambda w: w.frequency,
            "surprisal": lambda w: w.surprisal,
            "is_content_word": lambda w: float(w.is_content_word),
            "start_of_line": lambda w: float(w.start_of_line),
            "end_of_line": lambda w: float(w.end_of_line),
            "left_dependents_count": lambda w: w.left_dependents_count,
            "right_dependents_count": lambda w: w.right_dependents_count,
            "distance_to_head": lambda w: w.distance_to_head,
        }
        for name in LINGUISTIC_FEATURES:
            fn = attr[name]
            cols.append(np.array([fn(words[w]) for w in widx], dtype=np.float64))
            names.append(f"ling_{name}")

    feats = np.column_stack(cols) if cols else np.zeros((widx.size, 0))
    if widx.size == 0:
        feats = np.zeros((0, len(names)))
    return widx, feats, tuple(names)


def assemble_candidate_inputs(
    trial: Trial,
    question_set: QuestionSet,
    feature_config=FEATURE_GROUPS,
) -> list[CandidateInput]:
    """One input per candidate question, ordered by type index."""
    groups = validate_feature_config(feature_config)
    measures = aggregate_word_measures(trial)
    widx, feats, names = _per_fixation_matrix(trial, groups, measures)
    rt = trial.paragraph_rt_ms if "paragraph_rt" in groups else None
    return [
        CandidateInput(
            trial_key=trial.key,
            question=q,
            word_indices=widx,
            features=feats,
            feature_names=names,
            n_words=trial.paragraph.n_words,
            paragraph_key=trial.paragraph.key,
            paragraph_rt=rt,
            degenerate=widx.size == 0,
        )
        for q in question_set.questions
    ]


@dataclass
class FeatureStats:
    """Train-split standardization statistics, pinned to one fold."""

    fold_id: int
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    rt_mean: float = 0.0
    rt_std: float = 0.0

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(str(self.fold_id).encode())
        h.update(",".join(self.feature_names).encode())
        h.update(self.mean.tobytes())
        h.update(self.std.tobytes())
        h.update(np.float64(self.rt_mean).tobytes())
        h.update(np.float64(self.rt_std).tobytes())
        return h.hexdigest()[:16]


class StatsFoldMismatch(ValueError):
    pass


def fit_feature_stats(fold_id: int, train_inputs: list[CandidateInput]) -> FeatureStats:
    """Population mean/std per feature column over the training split."""
    mats = [ci.features for ci in train_inputs if ci.features.size]
    if not mats:
        raise ValueError("no training feature rows to fit statistics on")
    names = train_inputs[0].feature_names
    stacked = np.vstack(mats)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)  # population (ddof=0)
    rts = np.array([ci.paragraph_rt for ci in train_inputs
                    if ci.paragraph_rt is not None], dtype=np.float64)
    rt_mean = float(rts.mean()) if rts.size else 0.0
    rt_std = float(rts.std()) if rts.size else 0.0
    return FeatureStats(fold_id, names, mean, std, rt_mean, rt_std)


def apply_feature_stats(
    stats: FeatureStats, ci: CandidateInput, fold_id: int
) -> CandidateInput:
    """Standardize one input with a fold's train statistics.

    Constant features (zero train variance) map to zero everywhere.
    """
    if fold_id != stats.fold_id:
        raise StatsFoldMismatch(
            f"stats were fit on fold {stats.fold_id}, refusing to apply to "
            f"fold {fold_id}"
        )
    if ci.feature_names != stats.feature_names:
        raise FeatureConfigError("feature layout differs from fitted statistics")
    safe = np.where(stats.std > 0, stats.std, 1.0)
    z = (ci.features - stats.mean) / safe
    z[:, stats.std == 0] = 0.0
    rt = ci.paragraph_rt
    if rt is not None:
        rt = (rt - stats.rt_mean) / stats.rt_std if stats.rt_std > 0 else 0.0
    return CandidateInput(
        trial_key=ci.trial_key, question=ci.question, word_indices=ci.word_indices,
        features=z, feature_names=ci.feature_names, n_words=ci.n_words,
        paragraph_key=ci.paragraph_key, paragraph_rt=rt, degenerate=ci.degenerate,
    )
