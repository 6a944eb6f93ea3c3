"""Embedding provider contract, token pooling, fixture provider, and cache.

Baselines and scorers consume contextual word embeddings (one vector per
paragraph word, token pieces sum-pooled) and a single sentence-aggregate
vector per question. Any masked-LM encoder exposing those surfaces can sit
behind :class:`EmbeddingProvider`; the toolkit itself ships a deterministic
fixture provider (unit vectors derived from content hashes, with optional
planted question vectors) and a binary cache so precomputed embeddings can
be consumed without any ML runtime.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .corpus.types import Paragraph, Question


class EmbeddingError(ValueError):
    pass


def pool_tokens_to_words(
    token_vectors: np.ndarray,
    token_to_word: list[int | None],
    n_words: int | None = None,
) -> np.ndarray:
    """Sum-pool token-piece vectors to word vectors.

    ``token_to_word[t]`` names the word owning token ``t`` (None for
    special tokens). Every word must own at least one token.
    """
    token_vectors = np.asarray(token_vectors, dtype=np.float64)
    if token_vectors.ndim != 2 or len(token_to_word) != token_vectors.shape[0]:
        raise EmbeddingError("token map length must match token vector rows")
    owned = [w for w in token_to_word if w is not None]
    if n_words is None:
        n_words = max(owned) + 1 if owned else 0
    out = np.zeros((n_words, token_vectors.shape[1]), dtype=np.float64)
    counts = np.zeros(n_words, dtype=np.int64)
    for t, w in enumerate(token_to_word):
        if w is None:
            continue
        if not (0 <= w < n_words):
            raise EmbeddingError(f"token {t} maps to out-of-range word {w}")
        out[w] += token_vectors[t]
        counts[w] += 1
    if (counts == 0).any():
        missing = int(np.nonzero(counts == 0)[0][0])
        raise EmbeddingError(f"word {missing} has no tokens (tokenization mismatch)")
    return out


class EmbeddingProvider:
    """Interface: word vectors per paragraph, one aggregate vector per question,
    token vectors for free text (used by the semantic similarity metric)."""

    name = "abstract"
    version = "0"
    dim = 0

    def word_vectors(self, paragraph: Paragraph) -> np.ndarray:
        raise NotImplementedError

    def question_vector(self, question: Question) -> np.ndarray:
        raise NotImplementedError

    def token_vectors(self, text: str) -> np.ndarray:
        raise NotImplementedError


def _hash_rng(seed: int, *key_parts: str) -> np.random.Generator:
    digest = hashlib.blake2b(
        "\x1f".join(key_parts).encode("utf-8"), digest_size=8
    ).digest()
    return np.random.default_rng((seed, int.from_bytes(digest, "little")))


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


class FixtureEmbeddingProvider(EmbeddingProvider):
    """Deterministic unit-norm embeddings keyed by text content.

    Same seed -> identical vectors, byte for byte. ``plant_question`` pins a
    question's vector to the mean of a chosen span's word vectors, which
    makes the question maximally cosine-similar to that span.
    """

    name = "fixture"

    def __init__(self, dim: int = 32, seed: int = 0):
        if dim < 2:
            raise EmbeddingError("fixture dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self.version = f"seed={seed}"
        self._planted: dict[str, np.ndarray] = {}
        # vectors depend only on text content: caching preserves purity
        self._word_cache: dict[str, np.ndarray] = {}
        self._sentence_cache: dict[str, np.ndarray] = {}

    def word_vectors(self, paragraph: Paragraph) -> np.ndarray:
        base = paragraph.text
        if base not in self._word_cache:
            rows = [
                _unit(_hash_rng(self.seed, "word", base, str(w.index), w.text)
                      .standard_normal(self.dim))
                for w in paragraph.words
            ]
            self._word_cache[base] = np.vstack(rows).astype(np.float32)
        return self._word_cache[base]

    def question_vector(self, question: Question) -> np.ndarray:
        if question.text in self._planted:
            return self._planted[question.text].copy()
        if question.text not in self._sentence_cache:
            self._sentence_cache[question.text] = self._text_vector(question.text)
        return self._sentence_cache[question.text]

    def token_vectors(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            return np.zeros((0, self.dim), dtype=np.float32)
        rows = [
            _unit(_hash_rng(self.seed, "token", tok.lower()).standard_normal(self.dim))
            for tok in tokens
        ]
        return np.vstack(rows).astype(np.float32)

    def _text_vector(self, text: str) -> np.ndarray:
        return _unit(
            _hash_rng(self.seed, "sentence", text).standard_normal(self.dim)
        ).astype(np.float32)

    def plant_question(
        self, question: Question, paragraph: Paragraph,
        span: tuple[int, int] | None = None,
    ) -> None:
        span = span or question.critical_span
        vecs = self.word_vectors(paragraph)[span[0]:span[1]]
        self._planted[question.text] = vecs.mean(axis=0).astype(np.float32)


def fixture_embeddings(corpus, dim: int = 32, seed: int = 0) -> FixtureEmbeddingProvider:
    """Fixture provider for a corpus (the corpus argument fixes the API shape;
    vectors depend only on text content and the seed)."""
    del corpus
    return FixtureEmbeddingProvider(dim=dim, seed=seed)


CACHE_MAGIC = b"GZEC"
CACHE_VERSION = 1


def _write_str(fh, s: str):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def save_embedding_cache(
    path: str | Path,
    provider: EmbeddingProvider,
    paragraphs: list[Paragraph],
    questions: list[Question],
    layer: str = "final",
) -> None:
    """Precompute and store embeddings as little-endian float32 rows.

    Single-writer: the file is written to a temp path and atomically
    replaced.
    """
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<H", CACHE_VERSION))
        fh.write(struct.pack("<I", provider.dim))
        _write_str(fh, provider.name)
        _write_str(fh, provider.version)
        _write_str(fh, layer)
        fh.write(struct.pack("<I", len(paragraphs)))
        for p in paragraphs:
            vecs = np.asarray(provider.word_vectors(p), dtype="<f4")
            _write_str(fh, "|".join(p.key))
            fh.write(struct.pack("<I", vecs.shape[0]))
            fh.write(vecs.tobytes())
        fh.write(struct.pack("<I", len(questions)))
        for q in questions:
            vec = np.asarray(provider.question_vector(q), dtype="<f4")
            _write_str(fh, q.question_id)
            fh.write(vec.tobytes())
    tmp.replace(path)


class CachedEmbeddingProvider(EmbeddingProvider):
    """Read-only provider over a cache file; safe for concurrent readers."""

    def __init__(self, path: str | Path):
        path = Path(path)
        with open(path, "rb") as fh:
            if fh.read(4) != CACHE_MAGIC:
                raise EmbeddingError(f"{path}: not an embedding cache")
            (version,) = struct.unpack("<H", fh.read(2))
            if version != CACHE_VERSION:
                raise EmbeddingError(f"{path}: unsupported cache version {version}")
            (self.dim,) = struct.unpack("<I", fh.read(4))
            self.name = _read_str(fh)
            self.version = _read_str(fh)
            self.layer = _read_str(fh)
            (n_par,) = struct.unpack("<I", fh.read(4))
            self._words: dict[str, np.ndarray] = {}
            for _ in range(n_par):
                key = _read_str(fh)
                (rows,) = struct.unpack("<I", fh.read(4))
                buf = fh.read(rows * self.dim * 4)
                self._words[key] = np.frombuffer(buf, dtype="<f4").reshape(rows, self.dim)
            (n_q,) = struct.unpack("<I", fh.read(4))
            self._questions: dict[str, np.ndarray] = {}
            for _ in range(n_q):
                key = _read_str(fh)
                buf = fh.read(self.dim * 4)
                self._questions[key] = np.frombuffer(buf, dtype="<f4")

    def word_vectors(self, paragraph: Paragraph) -> np.ndarray:
        key = "|".join(paragraph.key)
        if key not in self._words:
            raise EmbeddingError(f"paragraph {key} not in cache")
        return self._words[key]

    def question_vector(self, question: Question) -> np.ndarray:
        if question.question_id not in self._questions:
            raise EmbeddingError(f"question {question.question_id} not in cache")
        return self._questions[question.question_id]
