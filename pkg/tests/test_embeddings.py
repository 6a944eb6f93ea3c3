import numpy as np
import pytest

from gazegoal.embeddings import (
    CachedEmbeddingProvider,
    EmbeddingError,
    FixtureEmbeddingProvider,
    fixture_embeddings,
    pool_tokens_to_words,
    save_embedding_cache,
)

from conftest import make_paragraph, make_question_set


def test_pool_sum():
    tv = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = pool_tokens_to_words(tv, [0, 0])
    np.testing.assert_allclose(out, [[1.0, 1.0]])


def test_pool_identity():
    tv = np.arange(12.0).reshape(4, 3)
    out = pool_tokens_to_words(tv, [0, 1, 2, 3])
    np.testing.assert_allclose(out, tv)


def test_pool_specials_and_mismatch():
    tv = np.ones((3, 2))
    out = pool_tokens_to_words(tv, [None, 0, None], n_words=1)
    np.testing.assert_allclose(out, [[1.0, 1.0]])
    with pytest.raises(EmbeddingError, match="no tokens"):
        pool_tokens_to_words(tv, [None, 0, None], n_words=2)


def test_pool_matches_naive_summation():
    rng = np.random.default_rng(0)
    tv = rng.standard_normal((5, 4))
    token_map = [0, 1, 0, None, 1]
    out = pool_tokens_to_words(tv, token_map, n_words=2)
    want = np.zeros((2, 4))
    for t, w in enumerate(token_map):
        if w is not None:
            for d in range(4):
                want[w][d] += tv[t][d]
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_fixture_determinism(small_corpus):
    a = fixture_embeddings(small_corpus, dim=16, seed=5)
    b = fixture_embeddings(small_corpus, dim=16, seed=5)
    p = next(iter(small_corpus.paragraphs.values()))
    assert a.word_vectors(p).tobytes() == b.word_vectors(p).tobytes()
    q = small_corpus.question_sets[p.key].by_type(2)
    assert a.question_vector(q).tobytes() == b.question_vector(q).tobytes()


def test_fixture_depends_on_text_only():
    p1 = make_paragraph(["same", "words", "here"], article_id="x")
    p2 = make_paragraph(["same", "words", "here"], article_id="y", paragraph_id="zz")
    prov = FixtureEmbeddingProvider(dim=8, seed=0)
    assert prov.word_vectors(p1).tobytes() == prov.word_vectors(p2).tobytes()


def test_planted_question_max_similarity():
    p = make_paragraph([f"w{i}" for i in range(10)])
    qs = make_question_set(p, span1=(0, 4), span2=(4, 10))
    prov = FixtureEmbeddingProvider(dim=16, seed=1)
    q1 = qs.by_type(1)
    prov.plant_question(q1, p)
    span_mean = prov.word_vectors(p)[0:4].mean(axis=0)
    qv = prov.question_vector(q1)
    cos = span_mean @ qv / (np.linalg.norm(span_mean) * np.linalg.norm(qv))
    assert cos == pytest.approx(1.0, abs=1e-6)


def test_unseeded_pairs_near_orthogonal():
    # |mean cosine| < 0.1 at dim=256 over 1000 independent pairs
    a = FixtureEmbeddingProvider(dim=256, seed=1)
    b = FixtureEmbeddingProvider(dim=256, seed=2)
    cosines = []
    for i in range(1000):
        va = a.token_vectors(f"tok{i}")[0]
        vb = b.token_vectors(f"tok{i}")[0]
        cosines.append(float(va @ vb))
    assert abs(np.mean(cosines)) < 0.1


def test_dim_guard():
    with pytest.raises(EmbeddingError):
        FixtureEmbeddingProvider(dim=1)


def test_cache_round_trip_bit_exact(tmp_path, small_corpus):
    prov = FixtureEmbeddingProvider(dim=12, seed=3)
    questions = [q for qs in small_corpus.question_sets.values() for q in qs.questions]
    paragraphs = list(small_corpus.paragraphs.values())
    path = tmp_path / "embeddings.cache"
    save_embedding_cache(path, prov, paragraphs, questions, layer="final")
    cached = CachedEmbeddingProvider(path)
    assert cached.dim == 12
    assert cached.name == "fixture"
    assert cached.layer == "final"
    for p in paragraphs:
        want = np.asarray(prov.word_vectors(p), dtype="<f4")
        got = cached.word_vectors(p)
        assert got.tobytes() == want.tobytes()
    for q in questions:
        want = np.asarray(prov.question_vector(q), dtype="<f4")
        assert cached.question_vector(q).tobytes() == want.tobytes()


def test_cache_unknown_keys(tmp_path, small_corpus):
    prov = FixtureEmbeddingProvider(dim=4, seed=0)
    path = tmp_path / "e.cache"
    save_embedding_cache(path, prov, [], [])
    cached = CachedEmbeddingProvider(path)
    p = next(iter(small_corpus.paragraphs.values()))
    with pytest.raises(EmbeddingError, match="not in cache"):
        cached.word_vectors(p)
