from .types import (
    OFF_TEXT,
    REGIME_NEW_BOTH,
    REGIME_NEW_PARTICIPANT,
    REGIME_NEW_TEXT,
    REGIMES,
    Corpus,
    CorpusError,
    Fixation,
    Paragraph,
    Question,
    QuestionSet,
    Trial,
    Word,
    trial_key_str,
)
from .measures import WordMeasures, aggregate_word_measures
from .ingest import (
    IngestReport,
    ingest_trials,
    load_corpus,
    load_corpus_cache,
    save_corpus,
    write_corpus_tsv,
)

__all__ = [
    "OFF_TEXT", "REGIME_NEW_BOTH", "REGIME_NEW_PARTICIPANT", "REGIME_NEW_TEXT",
    "REGIMES", "Corpus", "CorpusError", "Fixation", "IngestReport", "Paragraph",
    "Question", "QuestionSet", "Trial", "Word", "WordMeasures",
    "aggregate_word_measures", "ingest_trials", "load_corpus",
    "load_corpus_cache", "save_corpus", "trial_key_str", "write_corpus_tsv",
]
