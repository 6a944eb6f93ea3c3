"""Single entry point: ingest -> split -> embed -> models -> evaluation.

Every stage writes its artifact plus a sidecar run manifest. Flags can be
preloaded from a config file (INI sections per subcommand, ``[common]``
for shared flags); explicit command-line flags win. Exit codes: 0 success,
2 missing stage dependency (the error names it), 1 any other failure; a
machine-readable error record is printed to stderr on failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, baselines, codec, eval_selection, splits
from .corpus import ingest as corpus_ingest
from .corpus.types import Corpus
from .embeddings import (
    CachedEmbeddingProvider,
    FixtureEmbeddingProvider,
    save_embedding_cache,
)
from . import eval_reconstruction as recon_metrics
from .eval_reconstruction import (
    ReconstructionRecord,
    baseline_question_records,
    compute_metric_rows,
    load_generated_jsonl,
    reconstruction_report,
)
from .eval_selection import SelectionRecord, selection_metrics
from .manifest import write_manifest
from .scorers import models as scorer_models
from .scorers.features import assemble_candidate_inputs


class DependencyError(RuntimeError):
    """A required input artifact or flag is missing; exits with code 2."""


def _fail(exc: Exception, code: int) -> int:
    record = {"error": type(exc).__name__, "detail": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def _require(value, name: str):
    if value is None:
        raise DependencyError(f"missing required option {name}")
    return value


def _require_file(path, flag: str) -> Path:
    path = Path(_require(path, flag))
    if not path.exists():
        raise DependencyError(f"{flag}: {path} does not exist")
    return path


def _load_corpus(path) -> Corpus:
    return corpus_ingest.load_corpus_cache(_require_file(path, "--corpus"))


def _provider(args, corpus=None):
    if getattr(args, "embeddings", None):
        return CachedEmbeddingProvider(_require_file(args.embeddings, "--embeddings"))
    return FixtureEmbeddingProvider(dim=args.dim, seed=args.seed or 0)


def _fold_plan(args) -> splits.FoldPlan:
    folds_dir = _require_file(getattr(args, "folds", None), "--folds")
    fold = _require(getattr(args, "fold", None), "--fold")
    path = Path(folds_dir) / f"fold_{fold}.tsv"
    if not path.exists():
        raise DependencyError(f"--folds: {path} does not exist")
    return splits.load_fold(path)


def _eval_trials(corpus: Corpus, plan: splits.FoldPlan, partition: str):
    parts = ("val", "test") if partition == "both" else (partition,)
    return [corpus.trial(k) for k, v in sorted(plan.assignment.items())
            if v in parts and corpus.has_trial(k)]


def _write_preds(rows, out):
    pd.DataFrame(rows).to_csv(out, sep="\t", index=False)


def _pred_row(trial, plan, scores: dict[int, float], probs: dict[int, float],
              predicted_type: int, qs):
    part, regime = plan.assignment[trial.key], plan.regime.get(trial.key, "")
    return {
        "participant_id": trial.participant_id,
        "article_id": trial.paragraph.article_id,
        "paragraph_id": trial.paragraph.paragraph_id,
        "difficulty_level": trial.paragraph.difficulty_level,
        "question_id": trial.question.question_id,
        "predicted_question_id": qs.by_type(predicted_type).question_id,
        "true_type": trial.question.type_index,
        "predicted_type": predicted_type,
        "partition": part,
        "regime": regime,
        **{f"score_q{t}": scores.get(t, float("nan")) for t in (1, 2, 3)},
        **{f"prob_q{t}": probs.get(t, float("nan")) for t in (1, 2, 3)},
    }


def _softmax_dict(scores: dict[int, float]) -> dict[int, float]:
    vals = np.array([scores[t] for t in (1, 2, 3)], dtype=float)
    finite = np.isfinite(vals)
    vals[~finite] = vals[finite].min() - 50 if finite.any() else 0.0
    z = np.exp(vals - vals.max())
    z /= z.sum()
    return {t: float(z[i]) for i, t in enumerate((1, 2, 3))}


# --- stages ---


def cmd_ingest(args) -> int:
    stimuli = _require_file(args.stimuli, "--stimuli")
    gaze = _require_file(args.gaze, "--gaze")
    out = Path(_require(args.out, "--out"))
    corpus, report = corpus_ingest.load_corpus(stimuli, gaze)
    corpus_ingest.save_corpus(corpus, out)
    write_manifest(out, "ingest", vars(args) | {"rejected": report.rejected},
                   {"seed": args.seed}, [stimuli, gaze])
    print(f"ingested {report.n_trials} trials "
          f"({len(report.rejected)} rejected), "
          f"{len(corpus.paragraphs)} paragraphs, "
          f"{corpus.word_token_count()} word tokens covered")
    for line in report.rejected:
        print(f"  rejected {line}")
    return 0


def cmd_split(args) -> int:
    corpus = _load_corpus(args.corpus)
    out = Path(_require(args.out, "--out"))
    folds = splits.make_folds(corpus, seed=_require(args.seed, "--seed"))
    paths = splits.write_folds(folds, out)
    write_manifest(out / "folds", "split", vars(args), {"seed": args.seed},
                   [args.corpus])
    counts = folds[0].partition_counts()
    print(f"wrote {len(paths)} fold plans to {out} "
          f"(fold 0: {counts['train']} train / {counts['val']} val / "
          f"{counts['test']} test)")
    return 0


def cmd_embed(args) -> int:
    corpus = _load_corpus(args.corpus)
    out = Path(_require(args.out, "--out"))
    if args.provider != "fixture":
        raise DependencyError(
            f"provider {args.provider!r} is external; precompute its vectors "
            "into a cache and pass them with --embeddings"
        )
    provider = FixtureEmbeddingProvider(dim=args.dim, seed=args.seed or 0)
    questions = [q for qs in corpus.question_sets.values() for q in qs.questions]
    save_embedding_cache(out, provider, list(corpus.paragraphs.values()), questions)
    write_manifest(out, "embed", vars(args), {"seed": args.seed}, [args.corpus])
    print(f"cached {len(corpus.paragraphs)} paragraphs / {len(questions)} "
          f"questions at dim {args.dim} -> {out}")
    return 0


def _run_baseline_fold(corpus, provider, which, fold_path, partition):
    plan = splits.load_fold(fold_path)
    trials = _eval_trials(corpus, plan, partition)
    rows = []
    for t in trials:
        qs = corpus.question_sets[t.paragraph.key]
        sel = baselines.BASELINES[which](t, qs, provider)
        probs = _softmax_dict(sel.scores)
        pred = sel.predicted.type_index
        rows.append(_pred_row(t, plan, sel.scores, probs, pred, qs))
    return rows


def cmd_baseline(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _provider(args)
    out = Path(_require(args.out, "--out"))
    folds_dir = _require_file(args.folds, "--folds")
    which = _require(args.which, "--which")
    if args.fold == "all":
        fold_paths = sorted(Path(folds_dir).glob("fold_*.tsv"))
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            chunks = list(pool.map(
                lambda p: _run_baseline_fold(corpus, provider, which, p, args.partition),
                fold_paths,
            ))
        rows = [r for chunk in chunks for r in chunk]
    else:
        rows = _run_baseline_fold(
            corpus, provider, which,
            Path(folds_dir) / f"fold_{_require(args.fold, '--fold')}.tsv",
            args.partition,
        )
    _write_preds(rows, out)
    write_manifest(out, "baseline", vars(args) | {"rt_norm": baselines.RT_NORM},
                   {"seed": args.seed}, [args.corpus, folds_dir])
    print(f"wrote {len(rows)} predictions -> {out}")
    return 0


def cmd_train(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _provider(args)
    plan = _fold_plan(args)
    out = Path(_require(args.out, "--out"))
    grid = None
    if args.grid:
        grid = _load_grid(_require_file(args.grid, "--grid"))
    train_trials = [corpus.trial(k) for k in plan.trials_in("train")
                    if corpus.has_trial(k)]
    val_trials = [corpus.trial(k) for k in plan.trials_in("val")
                  if corpus.has_trial(k)]
    if grid is not None:
        scorer, results = scorer_models.train_with_grid(
            args.arch, corpus, plan.fold_id, train_trials, val_trials,
            provider, grid=grid, seed=args.seed or 0,
        )
        print(f"grid: {len(results)} runs, best val accuracy "
              f"{max(r['val_accuracy'] for r in results):.3f}")
    else:
        scorer = scorer_models.train_scorer(
            args.arch, corpus, plan.fold_id, train_trials, val_trials,
            provider, seed=args.seed or 0,
        )
    scorer_models.save_checkpoint(scorer, out)
    write_manifest(out, "train", {k: v for k, v in vars(args).items()},
                   {"seed": args.seed}, [args.corpus, args.folds])
    print(f"saved checkpoint -> {out}")
    return 0


def _load_grid(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return data.get("grid", data)


def cmd_select(args) -> int:
    corpus = _load_corpus(args.corpus)
    provider = _provider(args)
    plan = _fold_plan(args)
    out = Path(_require(args.out, "--out"))
    ckpt = _require_file(args.scorer, "--scorer")
    scorer = scorer_models.load_checkpoint(ckpt, provider)
    if scorer.stats.fold_id != plan.fold_id:
        raise DependencyError(
            f"--scorer: checkpoint was trained on fold {scorer.stats.fold_id}, "
            f"refusing to score fold {plan.fold_id}"
        )
    scorer_models.register_paragraphs(corpus)
    trials = _eval_trials(corpus, plan, args.partition)
    rows = []
    for t in trials:
        qs = corpus.question_sets[t.paragraph.key]
        inputs = assemble_candidate_inputs(t, qs, scorer.feature_config)
        outp = scorer_models.score_candidates(scorer, inputs)
        rows.append(_pred_row(t, plan, outp.scores, outp.probabilities,
                              outp.predicted_type, qs))
    _write_preds(rows, out)
    write_manifest(out, "select", {k: str(v) for k, v in vars(args).items()},
                   {"seed": args.seed}, [args.corpus, ckpt])
    print(f"wrote {len(rows)} predictions -> {out}")
    return 0


def cmd_prompts(args) -> int:
    corpus = _load_corpus(args.corpus)
    plan = _fold_plan(args)
    out = Path(_require(args.out, "--out"))
    trials = _eval_trials(corpus, plan, args.partition)
    bundles = []
    if args.kind == "fewshot":
        # examples may come from train and val trials, never test targets
        pool = [corpus.trial(k)
                for k in plan.trials_in("train") + plan.trials_in("val")
                if corpus.has_trial(k)]
        for t in trials:
            regime = plan.regime[t.key]
            bundles.append(codec.build_fewshot_prompt(
                t, regime, pool, seed=args.seed or 0, fmt=args.format,
            ))
    else:
        include_target = args.partition == "train"
        for t in trials:
            bundles.append(codec.build_prompt(
                t, args.kind, args.format, include_target=include_target
            ))
    codec.write_bundles_jsonl(bundles, out)
    write_manifest(out, "prompts", vars(args), {"seed": args.seed},
                   [args.corpus, args.folds])
    print(f"wrote {len(bundles)} {args.kind} bundles -> {out}")
    return 0


def _records_from_preds(path: Path) -> list[SelectionRecord]:
    df = pd.read_csv(path, sep="\t", keep_default_na=False,
                     dtype={"participant_id": str, "article_id": str,
                            "paragraph_id": str, "question_id": str})
    records = []
    for row in df.itertuples(index=False):
        probs = {t: float(getattr(row, f"prob_q{t}")) for t in (1, 2, 3)
                 if f"prob_q{t}" in df.columns}
        records.append(SelectionRecord(
            trial_key=(row.participant_id, row.article_id, row.paragraph_id,
                       row.difficulty_level, row.question_id),
            participant_id=str(row.participant_id),
            paragraph_key=(str(row.article_id), str(row.paragraph_id),
                           str(row.difficulty_level)),
            true_type=int(row.true_type),
            predicted_type=int(row.predicted_type),
            probabilities=probs or None,
            regime=str(row.regime) or None,
        ))
    return records


def cmd_eval_selection(args) -> int:
    preds = _require_file(args.preds, "--preds")
    out = Path(_require(args.out, "--out"))
    records = _records_from_preds(preds)
    report = selection_metrics(records, n_boot=args.bootstrap,
                               seed=args.seed or 0)
    eval_selection.write_selection_report(report, out)
    write_manifest(out, "eval-selection", vars(args), {"seed": args.seed}, [preds])
    pooled = report[(report.regime == "pooled")]
    for row in pooled.itertuples(index=False):
        print(f"{row.condition}: {row.accuracy:.3f} "
              f"[{row.ci_low:.3f}, {row.ci_high:.3f}] (n={row.n})")
    return 0


def cmd_eval_reconstruction(args) -> int:
    corpus = _load_corpus(args.corpus)
    generated = _require_file(args.generated, "--generated")
    out = Path(_require(args.out, "--out"))
    provider = _provider(args)
    plan = _fold_plan(args) if args.folds else None

    by_key = {"|".join(t.key): t for t in corpus.trials}
    records = []
    for rec in load_generated_jsonl(generated):
        t = by_key.get(rec["trial_key"])
        if t is None:
            raise DependencyError(
                f"--generated: trial {rec['trial_key']} not in corpus"
            )
        regime = plan.regime.get(t.key) if plan else None
        records.append(ReconstructionRecord(
            t.key, t.participant_id, t.paragraph.key, rec["question"],
            t.question, rec.get("source", "gaze_model"), regime,
        ))
    if args.human_baselines:
        trials = [by_key[r] for r in sorted({ "|".join(r.trial_key) for r in records })]
        regimes = {t.key: plan.regime.get(t.key) for t in trials} if plan else None
        records.extend(baseline_question_records(corpus, trials, regimes))

    paragraph_texts = {p.key: p.text for p in corpus.paragraphs.values()}
    rows = compute_metric_rows(records, provider, paragraph_texts)
    report = reconstruction_report(rows, n_boot=args.bootstrap, seed=args.seed or 0)
    report.to_csv(out, sep="\t", index=False)
    raw_out = Path(str(out) + ".records.tsv")
    rows.to_csv(raw_out, sep="\t", index=False)
    config = {k: str(v) for k, v in vars(args).items()}
    config["bleu"] = recon_metrics.BLEU_CONFIG
    config["semantic_similarity"] = recon_metrics.SEMANTIC_CONFIG
    config["similarity_provider"] = f"{provider.name}:{provider.version}"
    write_manifest(out, "eval-reconstruction", config,
                   {"seed": args.seed}, [generated, args.corpus])
    print(f"wrote report -> {out} (raw rows -> {raw_out})")
    return 0


def cmd_overlap_report(args) -> int:
    corpus = _load_corpus(args.corpus)
    out = Path(_require(args.out, "--out"))
    report = analysis.ngram_overlap_report(corpus)
    report.to_csv(out, sep="\t", index=False)
    write_manifest(out, "overlap-report", vars(args), {"seed": args.seed},
                   [args.corpus])
    para = report[(report.text_part == "paragraph") & (report.measure == "rouge1")]
    r = para.iloc[0]
    print(f"paragraph rouge1: P={r.precision:.3f} R={r.recall:.3f} F1={r.f1:.3f}")
    return 0


def cmd_trial_features(args) -> int:
    corpus = _load_corpus(args.corpus)
    preds = _require_file(args.preds, "--preds")
    out = Path(_require(args.out, "--out"))
    df = pd.read_csv(preds, sep="\t", keep_default_na=False,
                     dtype={"participant_id": str, "article_id": str,
                            "paragraph_id": str, "question_id": str})
    probs = {}
    for row in df.itertuples(index=False):
        key = (str(row.participant_id), str(row.article_id), str(row.paragraph_id),
               str(row.difficulty_level), str(row.question_id))
        probs[key] = float(getattr(row, f"prob_q{int(row.true_type)}"))
    sub = Corpus(
        paragraphs=corpus.paragraphs,
        question_sets=corpus.question_sets,
        trials=[t for t in corpus.trials if t.key in probs],
        metadata=corpus.metadata,
    )
    if not sub.trials:
        raise DependencyError("--preds: no prediction rows match corpus trials")
    table = analysis.trial_feature_table(sub, probs)
    analysis.validate_feature_table(table)
    table.to_csv(out, sep="\t", index=False)
    write_manifest(out, "trial-features", vars(args), {"seed": args.seed},
                   [args.corpus, preds])
    print(f"wrote {len(table)} trial feature rows -> {out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "split": cmd_split,
    "embed": cmd_embed,
    "baseline": cmd_baseline,
    "train": cmd_train,
    "select": cmd_select,
    "prompts": cmd_prompts,
    "eval-selection": cmd_eval_selection,
    "eval-reconstruction": cmd_eval_reconstruction,
    "overlap-report": cmd_overlap_report,
    "trial-features": cmd_trial_features,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazegoal",
        description="Decode information-seeking reading goals from eye movements",
    )
    parser.add_argument("--config", help="INI config; flags override its values")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--fold", default=None)
        p.add_argument("--workers", type=int, default=2)
        p.add_argument("--out", default=None)
        p.add_argument("--corpus", default=None)
        p.add_argument("--folds", default=None)
        p.add_argument("--embeddings", default=None,
                       help="embedding cache file (otherwise fixture provider)")
        p.add_argument("--dim", type=int, default=32)
        return p

    ing = common(sub.add_parser("ingest"))
    ing.add_argument("--stimuli")
    ing.add_argument("--gaze")
    common(sub.add_parser("split"))
    emb = common(sub.add_parser("embed"))
    emb.add_argument("--provider", default="fixture")
    b = common(sub.add_parser("baseline"))
    b.add_argument("--which", choices=sorted(baselines.BASELINES))
    b.add_argument("--partition", default="test", choices=["test", "val", "both"])
    t = common(sub.add_parser("train"))
    t.add_argument("--arch", choices=["rnn", "fusion"], default="rnn")
    t.add_argument("--grid", default=None)
    s = common(sub.add_parser("select"))
    s.add_argument("--scorer")
    s.add_argument("--partition", default="test", choices=["test", "val", "both"])
    pr = common(sub.add_parser("prompts"))
    pr.add_argument("--kind", choices=list(codec.KINDS), default="main")
    pr.add_argument("--format", choices=list(codec.FORMATS), default="fixation_level")
    pr.add_argument("--partition", default="test", choices=["test", "val", "train", "both"])
    es = common(sub.add_parser("eval-selection"))
    es.add_argument("--preds")
    es.add_argument("--bootstrap", type=int, default=1000)
    er = common(sub.add_parser("eval-reconstruction"))
    er.add_argument("--generated")
    er.add_argument("--bootstrap", type=int, default=1000)
    er.add_argument("--human-baselines", action="store_true")
    common(sub.add_parser("overlap-report"))
    tf = common(sub.add_parser("trial-features"))
    tf.add_argument("--preds")
    return parser


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser):
    if not args.config:
        return args
    cfg = configparser.ConfigParser()
    if not Path(args.config).exists():
        raise DependencyError(f"--config: {args.config} does not exist")
    cfg.read(args.config)
    sections = ["common", args.command] if args.command else ["common"]
    for section in sections:
        if not cfg.has_section(section):
            continue
        for key, value in cfg.items(section):
            attr = key.replace("-", "_")
            if getattr(args, attr, None) is None and hasattr(args, attr):
                if value.isdigit():
                    setattr(args, attr, int(value))
                else:
                    setattr(args, attr, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    try:
        args = _apply_config(args, parser)
        return COMMANDS[args.command](args)
    except DependencyError as exc:
        return _fail(exc, 2)
    except FileNotFoundError as exc:
        return _fail(exc, 2)
    except Exception as exc:  # noqa: BLE001 - error record contract
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
