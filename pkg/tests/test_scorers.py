import dataclasses
import math

import numpy as np
import pytest

from gazegoal.embeddings import FixtureEmbeddingProvider
from gazegoal.scorers import (
    FeatureConfigError,
    Hyperparams,
    StatsFoldMismatch,
    StubScorer,
    TrainingError,
    UnsupportedClientError,
    apply_feature_stats,
    assemble_candidate_inputs,
    evaluate_accuracy,
    expand_grid,
    fit_feature_stats,
    generative_loglik_select,
    load_checkpoint,
    register_paragraphs,
    save_checkpoint,
    score_candidates,
    train_scorer,
)
from gazegoal.scorers.generative import GenerativeClient
from gazegoal.scorers import models as scorer_models
from gazegoal.synth import synth_corpus

from conftest import make_paragraph, make_question_set, make_trial


@pytest.fixture(scope="module")
def tiny_world():
    corpus = synth_corpus(n_articles=4, paragraphs_per_article=1,
                          n_participants=6, words_per_paragraph=10,
                          fixations_per_trial=10, span_focus=0.9, seed=13)
    provider = FixtureEmbeddingProvider(dim=16, seed=1)
    register_paragraphs(corpus)
    return corpus, provider


def test_assemble_full_config(small_corpus):
    trial = small_corpus.trials[0]
    qs = small_corpus.question_set_for(trial)
    inputs = assemble_candidate_inputs(trial, qs)
    assert len(inputs) == 3
    assert [ci.question.type_index for ci in inputs] == [1, 2, 3]
    n_on = int((trial.word_indices >= 0).sum())
    for ci in inputs:
        assert ci.features.shape == (n_on, len(ci.feature_names))
        assert np.isfinite(ci.features).all()
    # all five groups contribute columns
    names = inputs[0].feature_names
    assert "duration_ms" in names          # fixation_level
    assert "next_sac_amplitude" in names   # saccade
    assert "word_dwell_time_ms" in names   # word_level
    assert "ling_surprisal" in names       # linguistic
    assert inputs[0].paragraph_rt is not None


def test_assemble_ablation(small_corpus):
    trial = small_corpus.trials[0]
    qs = small_corpus.question_set_for(trial)
    without_word = assemble_candidate_inputs(
        trial, qs, ("fixation_level", "saccade", "linguistic", "paragraph_rt")
    )
    names = without_word[0].feature_names
    assert not any(n.startswith("word_") for n in names)
    assert "duration_ms" in names
    no_rt = assemble_candidate_inputs(trial, qs, ("fixation_level",))
    assert no_rt[0].paragraph_rt is None
    with pytest.raises(FeatureConfigError, match="unknown feature group"):
        assemble_candidate_inputs(trial, qs, ("fixation_level", "бад"))


def test_assemble_degenerate_trial():
    p = make_paragraph(["a", "b", "c"])
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [-1, -1], [50, 60])
    inputs = assemble_candidate_inputs(trial, qs)
    assert all(ci.degenerate for ci in inputs)
    assert inputs[0].features.shape[0] == 0


def test_standardize_hand_computed(small_corpus):
    trial = small_corpus.trials[0]
    qs = small_corpus.question_set_for(trial)
    ci = assemble_candidate_inputs(trial, qs, ("fixation_level",))[0]
    # overwrite one column with [1, 2, 3, ...] to pin the expected z-scores
    ci = dataclasses.replace(ci, features=np.array([[1.0], [2.0], [3.0]]),
                             feature_names=("x",),
                             word_indices=np.array([0, 1, 2]))
    stats = fit_feature_stats(0, [ci])
    out = apply_feature_stats(stats, ci, 0)
    np.testing.assert_allclose(out.features[:, 0], [-1.2247, 0.0, 1.2247],
                               atol=1e-4)


def test_standardize_constant_feature_maps_to_zero():
    ci_proto = _manual_input(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
    stats = fit_feature_stats(2, [ci_proto])
    out = apply_feature_stats(stats, ci_proto, 2)
    assert (out.features[:, 0] == 0).all()
    assert out.features[:, 1].std() > 0


def _manual_input(features):
    p = make_paragraph(["a", "b", "c"])
    qs = make_question_set(p)
    trial = make_trial(p, qs.by_type(1), [0, 1, 2])
    ci = assemble_candidate_inputs(trial, qs, ("fixation_level",))[0]
    return dataclasses.replace(
        ci, features=features,
        feature_names=tuple(f"f{i}" for i in range(features.shape[1])),
    )


def test_standardize_fold_mismatch_refused():
    ci = _manual_input(np.array([[1.0], [2.0]])[:2])
    stats = fit_feature_stats(3, [ci])
    with pytest.raises(StatsFoldMismatch):
        apply_feature_stats(stats, ci, 4)


def test_standardized_val_mean_not_zero(tiny_world):
    corpus, _ = tiny_world
    train, val = corpus.trials[:12], corpus.trials[12:18]
    t_inputs = [assemble_candidate_inputs(t, corpus.question_set_for(t))[0]
                for t in train]
    stats = fit_feature_stats(0, t_inputs)
    v_inputs = [apply_feature_stats(
        stats, assemble_candidate_inputs(t, corpus.question_set_for(t))[0], 0)
        for t in val]
    col = np.concatenate([ci.features[:, 1] for ci in v_inputs])  # duration
    assert abs(col.mean()) > 1e-6  # train stats do not recenter val data


def test_stub_scorer_softmax_and_argmax(small_corpus):
    trial = small_corpus.trials[0]
    qs = small_corpus.question_set_for(trial)
    inputs = assemble_candidate_inputs(trial, qs)
    stub = StubScorer(lambda ci: len(ci.question.text))
    out = score_candidates(stub, inputs)
    lengths = {q.type_index: len(q.text) for q in qs.questions}
    assert out.predicted_type == max(sorted(lengths), key=lambda t: (lengths[t], -t))
    assert sum(out.probabilities.values()) == pytest.approx(1.0, abs=1e-9)
    want = np.exp(np.array([lengths[t] for t in (1, 2, 3)], dtype=float))
    want /= want.sum()
    np.testing.assert_allclose([out.probabilities[t] for t in (1, 2, 3)], want,
                               atol=1e-9)


def _permutation_equivariant(scorer, inputs):
    base = score_candidates(scorer, inputs)
    perm = [inputs[2], inputs[0], inputs[1]]
    out = score_candidates(scorer, perm)
    for t in (1, 2, 3):
        assert out.probabilities[t] == pytest.approx(base.probabilities[t], abs=1e-6)
    assert out.predicted_type == base.predicted_type


def test_stub_permutation_equivariance(small_corpus):
    trial = small_corpus.trials[1]
    qs = small_corpus.question_set_for(trial)
    inputs = assemble_candidate_inputs(trial, qs)
    _permutation_equivariant(StubScorer(lambda ci: len(ci.question.text)), inputs)


@pytest.mark.parametrize("arch", ["rnn", "fusion"])
def test_trained_scorer_permutation_equivariance(tiny_world, arch):
    corpus, provider = tiny_world
    trials = corpus.trials[:8]
    hp = Hyperparams(arch=arch, lr=1e-3, hidden_size=16, d_model=32,
                     max_epochs=2, patience=8)
    scorer = train_scorer(arch, corpus, 0, trials, trials[:2], provider,
                          hp=hp, seed=0)
    trial = corpus.trials[9]
    inputs = assemble_candidate_inputs(trial, corpus.question_set_for(trial))
    _permutation_equivariant(scorer, inputs)


@pytest.mark.parametrize("arch,hp", [
    ("rnn", Hyperparams(arch="rnn", lr=5e-3, hidden_size=32, max_epochs=200,
                        patience=200)),
    ("fusion", Hyperparams(arch="fusion", lr=1e-3, d_model=32, dropout=0.1,
                           max_epochs=200, patience=200)),
])
def test_tiny_overfit(tiny_world, arch, hp):
    corpus, provider = tiny_world
    trials = corpus.trials[:8]
    scorer = train_scorer(arch, corpus, 0, trials, trials, provider, hp=hp, seed=1)
    data = [(t, assemble_candidate_inputs(t, corpus.question_set_for(t)))
            for t in trials]
    acc = evaluate_accuracy(scorer, data)
    assert acc >= 7 / 8


def test_early_stopping_patience(tiny_world, monkeypatch):
    corpus, provider = tiny_world
    # scripted validation accuracies: improvement at epochs 1-4, flat after
    script = iter([0.2, 0.3, 0.4, 0.5] + [0.5] * 40)
    monkeypatch.setattr(scorer_models, "evaluate_accuracy",
                        lambda scorer, data: next(script))
    hp = Hyperparams(arch="rnn", lr=1e-3, hidden_size=8, max_epochs=40, patience=8)
    scorer = train_scorer("rnn", corpus, 0, corpus.trials[:6], corpus.trials[6:8],
                          provider, hp=hp, seed=0)
    assert scorer.history["best_epoch"] == 4
    assert scorer.history["stopped_at"] == 12  # 8 epochs without improvement


def test_nan_loss_aborts(tiny_world):
    corpus, provider = tiny_world
    hp = Hyperparams(arch="rnn", lr=math.inf, hidden_size=8, max_epochs=4,
                     patience=8)
    with pytest.raises(TrainingError, match="non-finite"):
        train_scorer("rnn", corpus, 0, corpus.trials[:8], corpus.trials[:2],
                     provider, hp=hp, seed=0)


def test_grid_expansion_counts():
    fusion = expand_grid("fusion")
    assert len(fusion) == 24  # 4 lrs x 3 dropouts x {frozen, unfrozen}
    assert {hp.dropout for hp in fusion} == {0.1, 0.3, 0.5}
    assert {hp.lr for hp in fusion} == {1e-5, 3e-5, 1e-4, 2e-4}
    assert {hp.freeze_embeddings for hp in fusion} == {True, False}
    rnn = expand_grid("rnn")
    assert len(rnn) == 32  # 4 lrs x 4 hidden sizes x {frozen, unfrozen}
    assert {hp.hidden_size for hp in rnn} == {10, 40, 70, 140}
    custom = expand_grid("rnn", {"lr": [1e-4], "hidden_size": [8],
                                 "freeze_embeddings": [False]})
    assert len(custom) == 1


def test_checkpoint_round_trip(tiny_world, tmp_path):
    corpus, provider = tiny_world
    hp = Hyperparams(arch="rnn", lr=1e-3, hidden_size=8, max_epochs=2, patience=8)
    scorer = train_scorer("rnn", corpus, 0, corpus.trials[:6], corpus.trials[:2],
                          provider, hp=hp, seed=0)
    path = tmp_path / "scorer.pt"
    save_checkpoint(scorer, path)
    assert (tmp_path / "scorer.pt.model.json").exists()
    loaded = load_checkpoint(path, provider)
    trial = corpus.trials[10]
    inputs = assemble_candidate_inputs(trial, corpus.question_set_for(trial))
    a = score_candidates(scorer, inputs)
    b = score_candidates(loaded, inputs)
    for t in (1, 2, 3):
        assert a.probabilities[t] == pytest.approx(b.probabilities[t], abs=1e-6)


def test_scorer_feature_config_mismatch(tiny_world):
    corpus, provider = tiny_world
    hp = Hyperparams(arch="rnn", lr=1e-3, hidden_size=8, max_epochs=1, patience=8)
    scorer = train_scorer("rnn", corpus, 0, corpus.trials[:6], corpus.trials[:2],
                          provider, hp=hp, seed=0,
                          feature_config=("fixation_level",))
    trial = corpus.trials[8]
    inputs = assemble_candidate_inputs(trial, corpus.question_set_for(trial))
    with pytest.raises(Exception, match="feature"):
        score_candidates(scorer, inputs)


class FixedLoglikClient(GenerativeClient):
    name = "stub-loglik"

    def __init__(self, logliks):
        self.logliks = logliks

    def candidate_loglik(self, bundle, candidate):
        return self.logliks[candidate]


def test_loglik_select(tiny_world):
    corpus, _ = tiny_world
    trial = corpus.trials[0]
    qs = corpus.question_set_for(trial)
    texts = [q.text for q in qs.questions]
    client = FixedLoglikClient(dict(zip(texts, [-5.0, -2.0, -9.0])))
    picked, logliks = generative_loglik_select(client, trial, qs)
    assert picked.type_index == 2
    tie = FixedLoglikClient({t: -1.0 for t in texts})
    picked, _ = generative_loglik_select(tie, trial, qs)
    assert picked.type_index == 1  # tie rule


def test_loglik_margin_construction(tiny_world):
    corpus, _ = tiny_world
    hits = 0
    for trial in corpus.trials[:20]:
        qs = corpus.question_set_for(trial)
        logliks = {q.text: -10.0 for q in qs.questions}
        logliks[trial.question.text] = -9.0  # +1 nat margin for the truth
        client = FixedLoglikClient(logliks)
        picked, _ = generative_loglik_select(client, trial, qs)
        hits += picked.question_id == trial.question.question_id
    assert hits == 20


def test_loglik_unsupported_client(tiny_world):
    corpus, _ = tiny_world
    trial = corpus.trials[0]
    qs = corpus.question_set_for(trial)

    class NoLoglik(GenerativeClient):
        name = "hosted"

    with pytest.raises(UnsupportedClientError, match="hosted"):
        generative_loglik_select(NoLoglik(), trial, qs)
