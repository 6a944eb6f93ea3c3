"""Ingestion of stimulus and gaze tables into an immutable corpus.

Interchange format is delimited UTF-8 tables with named-column headers:

* ``stimuli/paragraphs.tsv``: one word per row with geometry and
  linguistic features;
* ``stimuli/questions.tsv``: one question per row with its critical span
  and optional answers;
* ``gaze/fixations.tsv``: one fixation per row;
* ``gaze/trials.tsv``: per-trial metadata (paragraph RT, position in the
  experiment, comprehension outcome).

A trial with out-of-bounds word indices or non-monotone fixation order is
rejected with a diagnostic; a trial referencing unknown stimuli is a fatal
error. The binary cache (``corpus.bin``) carries a versioned magic header.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .types import (
    OFF_TEXT,
    Corpus,
    CorpusError,
    Fixation,
    Paragraph,
    Question,
    QuestionSet,
    Trial,
    Word,
)

CACHE_MAGIC = b"GZGL"
CACHE_VERSION = 1

_SACCADE_COLS = (
    "next_sac_duration_ms", "next_sac_amplitude", "next_sac_angle",
    "next_sac_avg_velocity", "next_sac_peak_velocity", "next_fix_distance",
    "prev_fix_distance", "next_fix_angle", "prev_fix_angle",
)


@dataclass
class IngestReport:
    """Diagnostics from one ingestion run."""

    n_trials: int = 0
    rejected: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def reject(self, trial_key, reason: str):
        self.rejected.append(f"{'|'.join(map(str, trial_key))}: {reason}")


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes")
    return bool(v)


def load_paragraphs(path: str | Path) -> dict[tuple[str, str, str], Paragraph]:
    df = pd.read_csv(path, sep="\t", dtype={"article_id": str, "paragraph_id": str})
    required = {"article_id", "paragraph_id", "difficulty_level", "word_index", "word"}
    missing = required - set(df.columns)
    if missing:
        raise CorpusError(f"{path}: missing columns {sorted(missing)}")

    paragraphs = {}
    for key, group in df.groupby(
        ["article_id", "paragraph_id", "difficulty_level"], sort=True
    ):
        group = group.sort_values("word_index")
        words = []
        for row in group.itertuples(index=False):
            words.append(
                Word(
                    index=int(row.word_index),
                    text=str(row.word),
                    top=float(getattr(row, "top", 0.0) or 0.0),
                    left=float(getattr(row, "left", 0.0) or 0.0),
                    start_of_line=_as_bool(getattr(row, "start_of_line", False)),
                    end_of_line=_as_bool(getattr(row, "end_of_line", False)),
                    frequency=float(getattr(row, "frequency", 0.0) or 0.0),
                    surprisal=float(getattr(row, "surprisal", 0.0) or 0.0),
                    is_content_word=_as_bool(getattr(row, "is_content_word", True)),
                    left_dependents_count=int(getattr(row, "left_dependents_count", 0) or 0),
                    right_dependents_count=int(getattr(row, "right_dependents_count", 0) or 0),
                    distance_to_head=int(getattr(row, "distance_to_head", 0) or 0),
                )
            )
        key = tuple(map(str, key))
        if key in paragraphs:
            raise CorpusError(f"duplicate paragraph {key}")
        paragraphs[key] = Paragraph(key[0], key[1], key[2], tuple(words))
    return paragraphs


def load_questions(
    path: str | Path, paragraphs: dict
) -> dict[tuple[str, str, str], QuestionSet]:
    df = pd.read_csv(path, sep="\t", dtype={"article_id": str, "paragraph_id": str,
                                            "question_id": str})
    seen_ids: dict[str, tuple[int, int]] = {}
    by_paragraph: dict[tuple[str, str, str], list[Question]] = {}
    for row in df.itertuples(index=False):
        key = (str(row.article_id), str(row.paragraph_id), str(row.difficulty_level))
        if key not in paragraphs:
            raise CorpusError(f"question {row.question_id}: unknown paragraph {key}")
        span = (int(row.span_start), int(row.span_end))
        qid = str(row.question_id)
        if qid in seen_ids:
            if seen_ids[qid] != span:
                raise CorpusError(
                    f"question {qid}: multiple span segments; critical spans "
                    "must be a single contiguous interval"
                )
            raise CorpusError(f"duplicate question row {qid}")
        seen_ids[qid] = span
        n = paragraphs[key].n_words
        if not (0 <= span[0] < span[1] <= n):
            raise CorpusError(
                f"question {qid}: span [{span[0]}, {span[1]}) outside paragraph "
                f"of {n} words"
            )
        answers = None
        correct = None
        if "answer_a" in df.columns and isinstance(row.answer_a, str):
            answers = (str(row.answer_a), str(row.answer_b),
                       str(row.answer_c), str(row.answer_d))
            label = str(getattr(row, "correct_label", "A")).strip().upper()
            correct = "ABCD".index(label)
        by_paragraph.setdefault(key, []).append(
            Question(
                question_id=qid,
                text=str(row.text),
                type_index=int(row.type_index),
                critical_span=span,
                answers=answers,
                correct_answer=correct,
            )
        )

    question_sets = {}
    for key, qs in by_paragraph.items():
        if len(qs) != 3:
            raise CorpusError(f"paragraph {key}: expected 3 questions, got {len(qs)}")
        qs.sort(key=lambda q: q.type_index)
        question_sets[key] = QuestionSet(key, tuple(qs))
    return question_sets


def ingest_trials(
    fixations_path: str | Path,
    paragraphs: dict,
    question_sets: dict,
    trials_path: str | Path | None = None,
) -> tuple[list[Trial], IngestReport]:
    """Build trials from a fixation report, validating against the stimuli."""
    report = IngestReport()
    df = pd.read_csv(
        fixations_path, sep="\t",
        dtype={"participant_id": str, "article_id": str,
               "paragraph_id": str, "question_id": str},
    )
    df["_row"] = np.arange(2, len(df) + 2)  # 1-based + header line

    meta = {}
    if trials_path is not None:
        tdf = pd.read_csv(
            trials_path, sep="\t",
            dtype={"participant_id": str, "article_id": str,
                   "paragraph_id": str, "question_id": str},
        )
        for row in tdf.itertuples(index=False):
            k = (str(row.participant_id), str(row.article_id), str(row.paragraph_id),
                 str(row.difficulty_level), str(row.question_id))
            meta[k] = (
                float(getattr(row, "paragraph_rt_ms", 0.0) or 0.0),
                int(getattr(row, "position_in_experiment", 1) or 1),
                _as_bool(getattr(row, "comprehension_correct", True)),
            )

    trials = []
    group_cols = ["participant_id", "article_id", "paragraph_id",
                  "difficulty_level", "question_id"]
    for key, group in df.groupby(group_cols, sort=True):
        key = tuple(map(str, key))
        participant_id, article_id, paragraph_id, difficulty, question_id = key
        pkey = (article_id, paragraph_id, difficulty)
        if pkey not in paragraphs:
            raise CorpusError(f"trial {key}: no stimulus paragraph {pkey}")
        if pkey not in question_sets:
            raise CorpusError(f"trial {key}: no question set for paragraph {pkey}")
        qs = question_sets[pkey]
        matched = [q for q in qs.questions if q.question_id == question_id]
        if not matched:
            raise CorpusError(
                f"trial {key}: question {question_id} not in the paragraph's set"
            )
        paragraph = paragraphs[pkey]

        fix_order = group["fix_index"].to_numpy()
        if np.any(np.diff(fix_order) <= 0):
            bad = group["_row"].to_numpy()[np.argmax(np.diff(fix_order) <= 0) + 1]
            report.reject(key, f"non-monotone fix_index at file row {bad}")
            continue
        widx = group["word_index"].to_numpy(dtype=np.int64)
        oob = (widx != OFF_TEXT) & ((widx < 0) | (widx >= paragraph.n_words))
        if oob.any():
            rows = group["_row"].to_numpy()[oob]
            report.reject(
                key,
                f"word_index out of bounds at file row(s) {', '.join(map(str, rows))}",
            )
            continue

        fixations = []
        for row in group.itertuples(index=False):
            kwargs = {c: float(getattr(row, c, 0.0) or 0.0)
                      for c in _SACCADE_COLS if c in df.columns}
            fixations.append(
                Fixation(
                    fix_index=int(row.fix_index),
                    word_index=int(row.word_index),
                    duration_ms=float(row.duration_ms),
                    pupil=float(getattr(row, "pupil", 0.0) or 0.0),
                    x=float(getattr(row, "x", 0.0) or 0.0),
                    y=float(getattr(row, "y", 0.0) or 0.0),
                    **kwargs,
                )
            )
        rt, pos, comp = meta.get(key, (0.0, 1, True))
        trials.append(
            Trial(
                participant_id=participant_id,
                paragraph=paragraph,
                question=matched[0],
                fixations=tuple(fixations),
                paragraph_rt_ms=rt,
                position_in_experiment=pos,
                comprehension_correct=comp,
            )
        )
    report.n_trials = len(trials)
    return trials, report


def load_corpus(
    stimuli_dir: str | Path,
    gaze_dir: str | Path,
    surprisal_units: str = "bits",
) -> tuple[Corpus, IngestReport]:
    """Ingest a corpus from a stimuli directory and a gaze directory."""
    stimuli_dir = Path(stimuli_dir)
    gaze_dir = Path(gaze_dir)
    paragraphs = load_paragraphs(stimuli_dir / "paragraphs.tsv")
    question_sets = load_questions(stimuli_dir / "questions.tsv", paragraphs)
    trials_path = gaze_dir / "trials.tsv"
    trials, report = ingest_trials(
        gaze_dir / "fixations.tsv",
        paragraphs,
        question_sets,
        trials_path if trials_path.exists() else None,
    )
    corpus = Corpus(
        paragraphs=paragraphs,
        question_sets=question_sets,
        trials=trials,
        metadata={"surprisal_units": surprisal_units},
    )
    return corpus, report


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the binary corpus cache (magic header + version + payload)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    payload = {
        "paragraphs": corpus.paragraphs,
        "question_sets": corpus.question_sets,
        "trials": corpus.trials,
        "metadata": corpus.metadata,
    }
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(CACHE_VERSION.to_bytes(2, "little"))
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)


def load_corpus_cache(path: str | Path) -> Corpus:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise CorpusError(f"{path}: not a corpus cache (bad magic)")
        version = int.from_bytes(fh.read(2), "little")
        if version != CACHE_VERSION:
            raise CorpusError(f"{path}: unsupported cache version {version}")
        payload = pickle.load(fh)
    return Corpus(
        paragraphs=payload["paragraphs"],
        question_sets=payload["question_sets"],
        trials=payload["trials"],
        metadata=payload["metadata"],
    )


def write_corpus_tsv(corpus: Corpus, stimuli_dir: str | Path, gaze_dir: str | Path):
    """Export a corpus back to the TSV interchange layout (testing aid)."""
    stimuli_dir = Path(stimuli_dir)
    gaze_dir = Path(gaze_dir)
    stimuli_dir.mkdir(parents=True, exist_ok=True)
    gaze_dir.mkdir(parents=True, exist_ok=True)

    wrows = []
    for p in corpus.paragraphs.values():
        for w in p.words:
            wrows.append({
                "article_id": p.article_id, "paragraph_id": p.paragraph_id,
                "difficulty_level": p.difficulty_level, "word_index": w.index,
                "word": w.text, "top": w.top, "left": w.left,
                "start_of_line": int(w.start_of_line),
                "end_of_line": int(w.end_of_line),
                "frequency": w.frequency, "surprisal": w.surprisal,
                "is_content_word": int(w.is_content_word),
                "left_dependents_count": w.left_dependents_count,
                "right_dependents_count": w.right_dependents_count,
                "distance_to_head": w.distance_to_head,
            })
    pd.DataFrame(wrows).to_csv(stimuli_dir / "paragraphs.tsv", sep="\t", index=False)

    qrows = []
    for qs in corpus.question_sets.values():
        a, pid, diff = qs.paragraph_key
        for q in qs.questions:
            row = {
                "question_id": q.question_id, "article_id": a, "paragraph_id": pid,
                "difficulty_level": diff, "type_index": q.type_index,
                "text": q.text, "span_start": q.critical_span[0],
                "span_end": q.critical_span[1],
            }
            if q.answers is not None:
                row.update({
                    "answer_a": q.answers[0], "answer_b": q.answers[1],
                    "answer_c": q.answers[2], "answer_d": q.answers[3],
                    "correct_label": "ABCD"[q.correct_answer],
                })
            qrows.append(row)
    pd.DataFrame(qrows).to_csv(stimuli_dir / "questions.tsv", sep="\t", index=False)

    frows, trows = [], []
    for t in corpus.trials:
        base = {
            "participant_id": t.participant_id,
            "article_id": t.paragraph.article_id,
            "paragraph_id": t.paragraph.paragraph_id,
            "difficulty_level": t.paragraph.difficulty_level,
            "question_id": t.question.question_id,
        }
        trows.append({
            **base, "paragraph_rt_ms": t.paragraph_rt_ms,
            "position_in_experiment": t.position_in_experiment,
            "comprehension_correct": int(t.comprehension_correct),
        })
        for f in t.fixations:
            frows.append({
                **base, "fix_index": f.fix_index, "word_index": f.word_index,
                "duration_ms": f.duration_ms, "pupil": f.pupil, "x": f.x, "y": f.y,
                "next_sac_duration_ms": f.next_sac_duration_ms,
                "next_sac_amplitude": f.next_sac_amplitude,
                "next_sac_angle": f.next_sac_angle,
                "next_sac_avg_velocity": f.next_sac_avg_velocity,
                "next_sac_peak_velocity": f.next_sac_peak_velocity,
                "next_fix_distance": f.next_fix_distance,
                "prev_fix_distance": f.prev_fix_distance,
                "next_fix_angle": f.next_fix_angle,
                "prev_fix_angle": f.prev_fix_angle,
            })
    pd.DataFrame(frows).to_csv(gaze_dir / "fixations.tsv", sep="\t", index=False)
    pd.DataFrame(trows).to_csv(gaze_dir / "trials.tsv", sep="\t", index=False)
