"""Discriminative question scorers: recurrent and fusion architectures.

Both scorers consume the three candidate inputs of a trial independently
and produce one score per candidate; selection takes the softmax argmax.

* recurrent: contextual word embeddings ordered by the fixation sequence,
  each row concatenated with its fixation feature vector; a projected
  question embedding is appended as the final sequence step; a GRU reads
  the sequence and a linear head scores it.
* fusion: fixation feature vectors are projected to the model width and
  summed with the fixated word's position embedding plus a learned
  modality embedding; the result is concatenated before the token
  sequence [CLS; text; SEP; question; SEP] with a separator token; the
  CLS output feeds two feed-forward layers.

Training contract: cross-entropy over the three candidates, AdamW with
weight decay 0.1 and a 0.06 linear warm-up ratio, batch size 16, at most
40 epochs with early stopping after 8 epochs without validation
improvement, model selection on the pooled validation set.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..corpus.types import Corpus, Trial
from ..embeddings import EmbeddingProvider
from .features import (
    FEATURE_GROUPS,
    CandidateInput,
    FeatureStats,
    apply_feature_stats,
    assemble_candidate_inputs,
    fit_feature_stats,
)

LEARNING_RATE_GRID = (1e-5, 3e-5, 1e-4, 2e-4)
RNN_HIDDEN_GRID = (10, 40, 70, 140)
FUSION_DROPOUT_GRID = (0.1, 0.3, 0.5)


class TrainingError(RuntimeError):
    pass


class ScorerConfigError(ValueError):
    pass


@dataclass
class Hyperparams:
    arch: str = "rnn"
    lr: float = 1e-4
    dropout: float = 0.1
    hidden_size: int = 40
    d_model: int = 64
    freeze_embeddings: bool = False
    batch_size: int = 16
    max_epochs: int = 40
    patience: int = 8
    warmup_ratio: float = 0.06
    weight_decay: float = 0.1
    max_scanpath_len: int = 512  # truncated from the end when longer


def expand_grid(arch: str, grid: dict | None = None) -> list[Hyperparams]:
    """Expand the hyperparameter search space for one architecture.

    Defaults follow the training contract: four learning rates for all
    models; hidden sizes {10,40,70,140} for the recurrent scorer; dropout
    {0.1,0.3,0.5} for the fusion scorer; frozen and unfrozen embedding
    adapters for both.
    """
    grid = dict(grid or {})
    lrs = grid.pop("lr", list(LEARNING_RATE_GRID))
    freezes = grid.pop("freeze_embeddings", [True, False])
    if arch == "rnn":
        hiddens = grid.pop("hidden_size", list(RNN_HIDDEN_GRID))
        dropouts = grid.pop("dropout", [0.1])
    elif arch == "fusion":
        hiddens = grid.pop("hidden_size", [64])
        dropouts = grid.pop("dropout", list(FUSION_DROPOUT_GRID))
    else:
        raise ScorerConfigError(f"unknown architecture {arch!r}")
    extra = {k: v for k, v in grid.items()}
    out = []
    for lr in lrs:
        for dr in dropouts:
            for hid in hiddens:
                for fr in freezes:
                    hp = Hyperparams(arch=arch, lr=float(lr), dropout=float(dr),
                                     freeze_embeddings=bool(fr))
                    if arch == "rnn":
                        hp.hidden_size = int(hid)
                    else:
                        hp.d_model = int(hid)
                    for k, v in extra.items():
                        setattr(hp, k, v)
                    out.append(hp)
    return out


class RecurrentScorer(nn.Module):
    def __init__(self, emb_dim: int, n_features: int, hp: Hyperparams):
        super().__init__()
        self.emb_adapter = nn.Linear(emb_dim, emb_dim)
        if hp.freeze_embeddings:
            for p in self.emb_adapter.parameters():
                p.requires_grad_(False)
        row = emb_dim + n_features
        self.q_proj = nn.Linear(emb_dim, row)
        self.gru = nn.GRU(row, hp.hidden_size, batch_first=True)
        self.dropout = nn.Dropout(hp.dropout)
        self.head = nn.Linear(hp.hidden_size, 1)

    def forward(self, word_seq, feats, lengths, q_emb):
        b, length, _ = word_seq.shape
        w = self.emb_adapter(word_seq)
        x = torch.cat([w, feats], dim=-1)
        padded = torch.zeros(b, length + 1, x.shape[-1], dtype=x.dtype)
        padded[:, :length] = x
        q_rows = self.q_proj(q_emb)
        padded[torch.arange(b), lengths] = q_rows
        packed = nn.utils.rnn.pack_padded_sequence(
            padded, (lengths + 1).cpu(), batch_first=True, enforce_sorted=False
        )
        _, h = self.gru(packed)
        return self.head(self.dropout(h[-1])).squeeze(-1)


class FusionScorer(nn.Module):
    def __init__(self, emb_dim: int, n_features: int, hp: Hyperparams,
                 max_words: int = 1024):
        super().__init__()
        d = hp.d_model
        self.word_proj = nn.Linear(emb_dim, d)
        if hp.freeze_embeddings:
            for p in self.word_proj.parameters():
                p.requires_grad_(False)
        self.fix_proj = nn.Linear(n_features, d)
        self.fix_dropout = nn.Dropout(hp.dropout)
        self.pos = nn.Embedding(max_words, d)
        self.modality = nn.Parameter(torch.randn(d) * 0.02)
        self.cls_tok = nn.Parameter(torch.randn(d) * 0.02)
        self.sep_tok = nn.Parameter(torch.randn(d) * 0.02)
        self.sep_eye = nn.Parameter(torch.randn(d) * 0.02)
        layer = nn.TransformerEncoderLayer(
            d, nhead=4, dim_feedforward=4 * d, dropout=0.1, batch_first=True
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=2)
        self.head = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Linear(d, 1))

    def forward(self, text_embs, text_lengths, feats, fix_word_idx, fix_lengths,
                q_tok_embs, q_lengths):
        b = text_embs.shape[0]
        device = text_embs.device
        fix = self.fix_dropout(self.fix_proj(feats))
        fix = fix + self.pos(fix_word_idx.clamp(min=0)) + self.modality
        text = self.word_proj(text_embs)
        n_text = text.shape[1]
        text = text + self.pos(torch.arange(n_text, device=device))
        qtok = self.word_proj(q_tok_embs)

        max_fix = feats.shape[1]
        max_q = qtok.shape[1]
        total = max_fix + 2 + n_text + 1 + max_q + 1
        seq = torch.zeros(b, total, text.shape[-1], dtype=text.dtype, device=device)
        pad = torch.ones(b, total, dtype=torch.bool, device=device)
        cls_positions = torch.zeros(b, dtype=torch.long, device=device)
        for i in range(b):
            parts = [
                fix[i, : fix_lengths[i]],
                self.sep_eye.unsqueeze(0),
                self.cls_tok.unsqueeze(0),
                text[i, : text_lengths[i]],
                self.sep_tok.unsqueeze(0),
                qtok[i, : q_lengths[i]],
                self.sep_tok.unsqueeze(0),
            ]
            row = torch.cat(parts, dim=0)
            seq[i, : row.shape[0]] = row
            pad[i, : row.shape[0]] = False
            cls_positions[i] = fix_lengths[i] + 1
        enc = self.encoder(seq, src_key_padding_mask=pad)
        cls_out = enc[torch.arange(b), cls_positions]
        return self.head(cls_out).squeeze(-1)


@dataclass
class ScorerOutput:
    trial_key: tuple[str, ...]
    scores: dict[int, float]
    probabilities: dict[int, float]
    predicted_type: int


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max()
    e = np.exp(z)
    return e / e.sum()


def _make_output(trial_key, type_indices, raw_scores) -> ScorerOutput:
    probs = _softmax(np.asarray(raw_scores, dtype=np.float64))
    scores = {t: float(s) for t, s in zip(type_indices, raw_scores)}
    probabilities = {t: float(p) for t, p in zip(type_indices, probs)}
    best = max(sorted(probabilities), key=lambda t: (probabilities[t], -t))
    return ScorerOutput(trial_key, scores, probabilities, best)


class StubScorer:
    """Contract stub: scores candidates with a user-supplied function."""

    def __init__(self, fn, feature_names: tuple[str, ...] | None = None):
        self.fn = fn
        self.feature_names = feature_names

    def score(self, inputs: list[CandidateInput]) -> ScorerOutput:
        _check_triplet(inputs)
        return _make_output(
            inputs[0].trial_key,
            [ci.question.type_index for ci in inputs],
            [float(self.fn(ci)) for ci in inputs],
        )


def _check_triplet(inputs: list[CandidateInput]):
    if len(inputs) != 3:
        raise ScorerConfigError(f"need exactly 3 candidate inputs, got {len(inputs)}")
    if len({ci.trial_key for ci in inputs}) != 1:
        raise ScorerConfigError("candidate inputs belong to different trials")


class TrainedScorer:
    """A trained model plus the train-split statistics it was fit with."""

    def __init__(self, hp: Hyperparams, model: nn.Module, stats: FeatureStats,
                 provider: EmbeddingProvider, feature_config, history=None):
        self.hp = hp
        self.model = model
        self.stats = stats
        self.provider = provider
        self.feature_config = tuple(feature_config)
        self.history = history or {}
        self._qtok_cache: dict[str, np.ndarray] = {}

    def score(self, inputs: list[CandidateInput]) -> ScorerOutput:
        _check_triplet(inputs)
        if inputs[0].feature_names != self.stats.feature_names:
            raise ScorerConfigError(
                "candidate inputs were assembled with a different feature "
                "configuration than this scorer"
            )
        self.model.eval()
        with torch.no_grad():
            raw = [self._score_one(ci) for ci in inputs]
        return _make_output(
            inputs[0].trial_key,
            [ci.question.type_index for ci in inputs],
            raw,
        )

    def _score_one(self, ci: CandidateInput) -> float:
        ci = apply_feature_stats(self.stats, ci, self.stats.fold_id)
        ci = _truncate(ci, self.hp.max_scanpath_len)
        word_vecs = np.asarray(
            self.provider.word_vectors(_paragraph_of(ci, self.provider)),
            dtype=np.float32,
        )
        m = ci.word_indices.size
        feats = torch.tensor(ci.features, dtype=torch.float32).unsqueeze(0)
        lengths = torch.tensor([m])
        if isinstance(self.model, RecurrentScorer):
            seq = torch.tensor(word_vecs[ci.word_indices], dtype=torch.float32).unsqueeze(0)
            q = torch.tensor(
                np.asarray(self.provider.question_vector(ci.question), dtype=np.float32)
            ).unsqueeze(0)
            return float(self.model(seq, feats, lengths, q)[0])
        qtok = self._question_tokens(ci.question.text)
        return float(
            self.model(
                torch.tensor(word_vecs, dtype=torch.float32).unsqueeze(0),
                torch.tensor([word_vecs.shape[0]]),
                feats,
                torch.tensor(ci.word_indices, dtype=torch.long).unsqueeze(0),
                lengths,
                torch.tensor(qtok, dtype=torch.float32).unsqueeze(0),
                torch.tensor([qtok.shape[0]]),
            )[0]
        )

    def _question_tokens(self, text: str) -> np.ndarray:
        if text not in self._qtok_cache:
            self._qtok_cache[text] = np.asarray(
                self.provider.token_vectors(text), dtype=np.float32
            )
        return self._qtok_cache[text]


# paragraph lookup used at scoring time: trials are not stored in the
# candidate input, so scorers keep a corpus-keyed paragraph registry
_PARAGRAPHS: dict[tuple, object] = {}


def register_paragraphs(corpus: Corpus) -> None:
    for key, p in corpus.paragraphs.items():
        _PARAGRAPHS[key] = p


def _paragraph_of(ci: CandidateInput, provider) -> object:
    if ci.paragraph_key not in _PARAGRAPHS:
        raise ScorerConfigError(
            f"paragraph {ci.paragraph_key} not registered; call register_paragraphs"
        )
    return _PARAGRAPHS[ci.paragraph_key]


def _truncate(ci: CandidateInput, max_len: int) -> CandidateInput:
    if ci.word_indices.size <= max_len:
        return ci
    return CandidateInput(
        trial_key=ci.trial_key, question=ci.question,
        word_indices=ci.word_indices[:max_len], features=ci.features[:max_len],
        feature_names=ci.feature_names, n_words=ci.n_words,
        paragraph_key=ci.paragraph_key, paragraph_rt=ci.paragraph_rt,
        degenerate=ci.degenerate,
    )


def _batches(items, size, rng: np.random.Generator):
    order = rng.permutation(len(items))
    for i in range(0, len(items), size):
        yield [items[j] for j in order[i : i + size]]


def train_scorer(
    arch: str,
    corpus: Corpus,
    fold_id: int,
    train_trials: list[Trial],
    val_trials: list[Trial],
    provider: EmbeddingProvider,
    hp: Hyperparams | None = None,
    feature_config=FEATURE_GROUPS,
    seed: int = 0,
) -> TrainedScorer:
    """Train one scorer under the standard contract and return it with its
    train-split standardization statistics."""
    hp = hp or Hyperparams(arch=arch)
    hp.arch = arch
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    register_paragraphs(corpus)

    def prep(trials):
        out = []
        for t in trials:
            qs = corpus.question_set_for(t)
            out.append((t, assemble_candidate_inputs(t, qs, feature_config)))
        return out

    train_data = prep(train_trials)
    val_data = prep(val_trials)
    stats = fit_feature_stats(
        fold_id, [ci for _, cis in train_data for ci in cis]
    )

    emb_dim = int(provider.dim)
    n_features = len(stats.feature_names)
    if arch == "rnn":
        model = RecurrentScorer(emb_dim, n_features, hp)
    elif arch == "fusion":
        model = FusionScorer(emb_dim, n_features, hp)
    else:
        raise ScorerConfigError(f"unknown architecture {arch!r}")

    scorer = TrainedScorer(hp, model, stats, provider, feature_config)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=hp.lr, weight_decay=hp.weight_decay)
    steps_per_epoch = max(1, math.ceil(len(train_data) / hp.batch_size))
    total_steps = hp.max_epochs * steps_per_epoch
    warmup = max(1, int(hp.warmup_ratio * total_steps))

    def lr_lambda(step):
        if step < warmup:
            return (step + 1) / warmup
        return max(0.0, (total_steps - step) / max(1, total_steps - warmup))

    sched = torch.optim.lr_scheduler.LambdaLR(opt, lr_lambda)
    loss_fn = nn.CrossEntropyLoss()

    best_err = float("inf")
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_epoch = 0
    history = {"train_loss": [], "val_accuracy": []}
    stop_epoch = hp.max_epochs

    for epoch in range(1, hp.max_epochs + 1):
        model.train()
        epoch_loss = 0.0
        n_batches = 0
        for batch in _batches(train_data, hp.batch_size, rng):
            logits, labels = _forward_batch(scorer, batch)
            loss = loss_fn(logits, labels)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (lr={hp.lr}, arch={arch}); "
                    "aborting"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            epoch_loss += float(loss.detach())
            n_batches += 1
        history["train_loss"].append(epoch_loss / max(1, n_batches))

        val_acc = evaluate_accuracy(scorer, val_data) if val_data else float("nan")
        history["val_accuracy"].append(val_acc)
        val_err = 1.0 - val_acc if val_data else history["train_loss"][-1]
        if val_err < best_err:
            best_err = val_err
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
        elif epoch - best_epoch >= hp.patience:
            stop_epoch = epoch
            break

    model.load_state_dict(best_state)
    scorer.history = {**history, "best_epoch": best_epoch, "stopped_at": stop_epoch}
    return scorer


def _forward_batch(scorer: TrainedScorer, batch):
    """Stack a batch of trials into (B, 3) candidate logits plus labels."""
    model = scorer.model
    hp = scorer.hp
    provider = scorer.provider
    all_cis = []
    labels = []
    for trial, cis in batch:
        cis = [
            _truncate(apply_feature_stats(scorer.stats, ci, scorer.stats.fold_id),
                      hp.max_scanpath_len)
            for ci in cis
        ]
        all_cis.append(cis)
        labels.append(trial.question.type_index - 1)

    flat = [ci for cis in all_cis for ci in cis]
    b = len(flat)
    max_fix = max(1, max(ci.word_indices.size for ci in flat))
    n_feat = len(scorer.stats.feature_names)
    feats = torch.zeros(b, max_fix, n_feat)
    fix_idx = torch.zeros(b, max_fix, dtype=torch.long)
    lengths = torch.zeros(b, dtype=torch.long)
    word_vec_cache: dict[tuple, np.ndarray] = {}
    for i, ci in enumerate(flat):
        m = ci.word_indices.size
        lengths[i] = m
        if m:
            feats[i, :m] = torch.tensor(ci.features, dtype=torch.float32)
            fix_idx[i, :m] = torch.tensor(ci.word_indices, dtype=torch.long)
        if ci.paragraph_key not in word_vec_cache:
            word_vec_cache[ci.paragraph_key] = np.asarray(
                provider.word_vectors(_PARAGRAPHS[ci.paragraph_key]), dtype=np.float32
            )

    if isinstance(model, RecurrentScorer):
        emb_dim = provider.dim
        seqs = torch.zeros(b, max_fix, emb_dim)
        qs = torch.zeros(b, emb_dim)
        for i, ci in enumerate(flat):
            wv = word_vec_cache[ci.paragraph_key]
            m = ci.word_indices.size
            if m:
                seqs[i, :m] = torch.tensor(wv[ci.word_indices], dtype=torch.float32)
            qs[i] = torch.tensor(
                np.asarray(provider.question_vector(ci.question), dtype=np.float32)
            )
        logits = model(seqs, feats, lengths, qs)
    else:
        max_text = max(word_vec_cache[ci.paragraph_key].shape[0] for ci in flat)
        text = torch.zeros(b, max_text, provider.dim)
        text_len = torch.zeros(b, dtype=torch.long)
        qtoks = [scorer._question_tokens(ci.question.text) for ci in flat]
        max_q = max(1, max(q.shape[0] for q in qtoks))
        qt = torch.zeros(b, max_q, provider.dim)
        q_len = torch.zeros(b, dtype=torch.long)
        for i, ci in enumerate(flat):
            wv = word_vec_cache[ci.paragraph_key]
            text[i, : wv.shape[0]] = torch.tensor(wv, dtype=torch.float32)
            text_len[i] = wv.shape[0]
            q = qtoks[i]
            if q.shape[0]:
                qt[i, : q.shape[0]] = torch.tensor(q, dtype=torch.float32)
            q_len[i] = q.shape[0]
        logits = model(text, text_len, feats, fix_idx, lengths, qt, q_len)

    logits = logits.view(len(batch), 3)
    return logits, torch.tensor(labels, dtype=torch.long)


def evaluate_accuracy(scorer: TrainedScorer, data) -> float:
    """Pooled selection accuracy over (trial, candidate inputs) pairs."""
    if not data:
        return float("nan")
    scorer.model.eval()
    correct = 0
    with torch.no_grad():
        for chunk_start in range(0, len(data), 16):
            chunk = data[chunk_start : chunk_start + 16]
            logits, labels = _forward_batch(scorer, chunk)
            correct += int((logits.argmax(dim=1) == labels).sum())
    return correct / len(data)


def train_with_grid(
    arch: str,
    corpus: Corpus,
    fold_id: int,
    train_trials,
    val_trials,
    provider,
    grid: dict | None = None,
    feature_config=FEATURE_GROUPS,
    seed: int = 0,
) -> tuple[TrainedScorer, list[dict]]:
    """Train every grid point and keep the best by pooled validation accuracy."""
    results = []
    best = None
    for i, hp in enumerate(expand_grid(arch, grid)):
        scorer = train_scorer(
            arch, corpus, fold_id, train_trials, val_trials, provider,
            hp=hp, feature_config=feature_config, seed=seed + i,
        )
        acc = scorer.history["val_accuracy"][scorer.history["best_epoch"] - 1]
        results.append({"hp": asdict(hp), "val_accuracy": acc})
        if best is None or acc > best[0]:
            best = (acc, scorer)
    return best[1], results


def save_checkpoint(scorer: TrainedScorer, path: str | Path) -> None:
    """Binary checkpoint plus a sidecar model manifest (<path>.model.json)."""
    path = Path(path)
    torch.save(
        {
            "state_dict": scorer.model.state_dict(),
            "hyperparams": asdict(scorer.hp),
            "stats": {
                "fold_id": scorer.stats.fold_id,
                "feature_names": list(scorer.stats.feature_names),
                "mean": scorer.stats.mean.tolist(),
                "std": scorer.stats.std.tolist(),
                "rt_mean": scorer.stats.rt_mean,
                "rt_std": scorer.stats.rt_std,
            },
            "feature_config": list(scorer.feature_config),
            "provider": {"name": scorer.provider.name,
                         "version": scorer.provider.version,
                         "dim": scorer.provider.dim},
        },
        path,
    )
    manifest = {
        "architecture": scorer.hp.arch,
        "feature_config": list(scorer.feature_config),
        "fold_id": scorer.stats.fold_id,
        "stats_hash": scorer.stats.content_hash(),
        "provider": scorer.provider.name,
        # the recurrent scorer projects the question embedding to the width
        # of a fixation row (word embedding + fixation features)
        "question_projection_width": scorer.provider.dim
        + len(scorer.stats.feature_names),
        "history": {k: v for k, v in scorer.history.items() if k != "train_loss"},
    }
    Path(str(path) + ".model.json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(path: str | Path, provider: EmbeddingProvider) -> TrainedScorer:
    payload = torch.load(path, weights_only=False)
    hp = Hyperparams(**payload["hyperparams"])
    stats = FeatureStats(
        fold_id=payload["stats"]["fold_id"],
        feature_names=tuple(payload["stats"]["feature_names"]),
        mean=np.array(payload["stats"]["mean"]),
        std=np.array(payload["stats"]["std"]),
        rt_mean=payload["stats"]["rt_mean"],
        rt_std=payload["stats"]["rt_std"],
    )
    n_features = len(stats.feature_names)
    if hp.arch == "rnn":
        model = RecurrentScorer(provider.dim, n_features, hp)
    else:
        model = FusionScorer(provider.dim, n_features, hp)
    model.load_state_dict(payload["state_dict"])
    return TrainedScorer(hp, model, stats, provider, payload["feature_config"])


def score_candidates(scorer, inputs: list[CandidateInput]) -> ScorerOutput:
    """Score a trial's three candidates with any scorer implementing
    ``score``; probabilities are the softmax over candidate scores."""
    out = scorer.score(inputs)
    total = sum(out.probabilities.values())
    if abs(total - 1.0) > 1e-6:
        raise ScorerConfigError(f"probabilities sum to {total}, expected 1")
    return out
