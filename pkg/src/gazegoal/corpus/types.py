"""Core data model: paragraphs, question triples, fixations, trials.

All objects are treated as immutable after ingestion; they can be shared
freely across worker processes. Word indices are 0-based and contiguous
within a paragraph. Off-text fixations (blinks, margins) carry the
sentinel word index ``OFF_TEXT`` and are excluded from word-level
aggregation but kept in the scanpath.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

OFF_TEXT = -1

DIFFICULTY_LEVELS = ("original", "simplified")

PartitionName = str  # "train" | "val" | "test"

REGIME_NEW_PARTICIPANT = "new_participant"
REGIME_NEW_TEXT = "new_text"
REGIME_NEW_BOTH = "new_text_and_participant"
REGIMES = (REGIME_NEW_PARTICIPANT, REGIME_NEW_TEXT, REGIME_NEW_BOTH)


class CorpusError(ValueError):
    """Raised on malformed stimuli or gaze records at ingestion time."""


@dataclass(frozen=True)
class Word:
    """One paragraph word with screen geometry and linguistic features."""

    index: int
    text: str
    top: float = 0.0
    left: float = 0.0
    start_of_line: bool = False
    end_of_line: bool = False
    frequency: float = 0.0
    surprisal: float = 0.0
    is_content_word: bool = True
    left_dependents_count: int = 0
    right_dependents_count: int = 0
    distance_to_head: int = 0

    @property
    def length(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class Paragraph:
    article_id: str
    paragraph_id: str
    difficulty_level: str
    words: tuple[Word, ...]

    def __post_init__(self):
        if not self.words:
            raise CorpusError(f"paragraph {self.key} has no words")
        if self.difficulty_level not in DIFFICULTY_LEVELS:
            raise CorpusError(
                f"paragraph {self.article_id}/{self.paragraph_id}: unknown "
                f"difficulty level {self.difficulty_level!r}"
            )
        for i, w in enumerate(self.words):
            if w.index != i:
                raise CorpusError(
                    f"paragraph {self.key}: word indices not contiguous at {i}"
                )

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.article_id, self.paragraph_id, self.difficulty_level)

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    def span_text(self, span: tuple[int, int]) -> str:
        start, end = span
        return " ".join(w.text for w in self.words[start:end])


@dataclass(frozen=True)
class Question:
    """A reading goal; ``critical_span`` is a half-open [start, end) word interval."""

    question_id: str
    text: str
    type_index: int
    critical_span: tuple[int, int]
    answers: tuple[str, str, str, str] | None = None
    correct_answer: int | None = None

    def __post_init__(self):
        if self.type_index not in (1, 2, 3):
            raise CorpusError(f"question {self.question_id}: type_index must be 1..3")
        start, end = self.critical_span
        if not (0 <= start < end):
            raise CorpusError(
                f"question {self.question_id}: bad critical span [{start}, {end})"
            )
        if self.answers is not None and len(self.answers) != 4:
            raise CorpusError(f"question {self.question_id}: need exactly 4 answers")


@dataclass(frozen=True)
class QuestionSet:
    """The three questions over one paragraph: q1 has its own critical span,
    q2 and q3 share a second span."""

    paragraph_key: tuple[str, str, str]
    questions: tuple[Question, Question, Question]

    def __post_init__(self):
        types = tuple(q.type_index for q in self.questions)
        if types != (1, 2, 3):
            raise CorpusError(
                f"question set for {self.paragraph_key}: want type order (1,2,3), got {types}"
            )
        q1, q2, q3 = self.questions
        if q2.critical_span != q3.critical_span:
            raise CorpusError(
                f"question set for {self.paragraph_key}: q2/q3 spans differ"
            )
        if q1.critical_span == q2.critical_span:
            raise CorpusError(
                f"question set for {self.paragraph_key}: q1 span equals shared span"
            )

    def by_type(self, type_index: int) -> Question:
        return self.questions[type_index - 1]

    def question_ids(self) -> tuple[str, str, str]:
        return tuple(q.question_id for q in self.questions)


@dataclass(frozen=True)
class Fixation:
    """One fixation with its outgoing-saccade and neighbour-fixation features."""

    fix_index: int
    word_index: int
    duration_ms: float
    pupil: float = 0.0
    x: float = 0.0
    y: float = 0.0
    next_sac_duration_ms: float = 0.0
    next_sac_amplitude: float = 0.0
    next_sac_angle: float = 0.0
    next_sac_avg_velocity: float = 0.0
    next_sac_peak_velocity: float = 0.0
    next_fix_distance: float = 0.0
    prev_fix_distance: float = 0.0
    next_fix_angle: float = 0.0
    prev_fix_angle: float = 0.0

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise CorpusError(f"fixation {self.fix_index}: duration must be > 0")

    @property
    def on_text(self) -> bool:
        return self.word_index != OFF_TEXT


@dataclass(eq=False)
class Trial:
    """One participant reading one paragraph under one assigned question."""

    participant_id: str
    paragraph: Paragraph
    question: Question
    fixations: tuple[Fixation, ...]
    paragraph_rt_ms: float = 0.0
    position_in_experiment: int = 1
    comprehension_correct: bool = True

    def __post_init__(self):
        prev = 0
        for f in self.fixations:
            if f.fix_index <= prev:
                raise CorpusError(
                    f"trial {self.key}: fix_index not strictly increasing at {f.fix_index}"
                )
            prev = f.fix_index
            if f.on_text and not (0 <= f.word_index < self.paragraph.n_words):
                raise CorpusError(
                    f"trial {self.key}: word_index {f.word_index} out of bounds"
                )

    @property
    def key(self) -> tuple[str, str, str, str, str]:
        return (self.participant_id, *self.paragraph.key, self.question.question_id)

    @cached_property
    def word_indices(self) -> np.ndarray:
        return np.array([f.word_index for f in self.fixations], dtype=np.int64)

    @cached_property
    def durations(self) -> np.ndarray:
        return np.array([f.duration_ms for f in self.fixations], dtype=np.float64)

    @property
    def n_fixations(self) -> int:
        return len(self.fixations)


def trial_key_str(key: tuple[str, ...]) -> str:
    return "|".join(key)


@dataclass
class Corpus:
    """Ingested corpus: paragraphs, their question sets, and all trials."""

    paragraphs: dict[tuple[str, str, str], Paragraph]
    question_sets: dict[tuple[str, str, str], QuestionSet]
    trials: list[Trial]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_key = {t.key: t for t in self.trials}
        self._questions = {}
        for qs in self.question_sets.values():
            for q in qs.questions:
                self._questions[q.question_id] = (qs.paragraph_key, q)

    @property
    def articles(self) -> list[str]:
        return sorted({p.article_id for p in self.paragraphs.values()})

    @property
    def participants(self) -> list[str]:
        return sorted({t.participant_id for t in self.trials})

    def question_set_for(self, trial: Trial) -> QuestionSet:
        return self.question_sets[trial.paragraph.key]

    def trial(self, key: tuple[str, ...]) -> Trial:
        return self._by_key[key]

    def has_trial(self, key: tuple[str, ...]) -> bool:
        return key in self._by_key

    def word_token_count(self) -> int:
        """Paragraph word tokens covered across trials (one count per trial word)."""
        return sum(t.paragraph.n_words for t in self.trials)
