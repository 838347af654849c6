"""Command-line surface.

Subcommands wire the pipeline end to end: corpus synthesis and ingestion,
feature statistics, single training runs, k-fold and leave-one-event-out
harnesses, the eight-variant comparison, attention-weight export, and the
finite-difference gradient suite.  Options come from an optional JSON
config file plus flags; flags win.  Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import model as M
from .embed import HashEmbedderConfig, load_table, make_provider
from .errors import ConfigError, CorpusError, NumericalError
from .features import compute_stats, extract_features, load_stats, save_stats
from .ingest import filter_candidates, parse_corpus, write_corpus
from .nn import load_checkpoint, run_gradient_suite, save_checkpoint

GRAD_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage by default; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Config plumbing

_MODEL_KEYS = (
    "embed_dim", "context_len", "batch_size", "epochs", "lr", "weight_decay",
    "classifier_dims", "dropout_rates", "hidden_multiplier", "lstm_layers",
)


@dataclass
class RunConfig:
    corpus: str | None = None
    embeddings: str | None = None
    stats: str | None = None
    out: str = "runs"
    provider: str = "hash"
    profile: str = "desk"
    variant: str = "full"
    scheme: str = "kfold"
    k: int = 5
    test_events: list[str] | None = None
    holdout_fraction: float = 0.1
    keep_best: bool = False
    figures: bool = True
    seed: int | None = None
    jobs: int = 1
    model: dict = dataclasses.field(default_factory=dict)


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed config JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return obj


def resolve_config(args) -> RunConfig:
    """Layer config file under CLI flags; flags win whenever provided."""
    raw = _load_config_file(args.config) if getattr(args, "config", None) else {}
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - known - set(_MODEL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    model_overrides = dict(raw.get("model", {}))
    for key, value in raw.items():
        if key in _MODEL_KEYS:
            model_overrides[key] = value
        elif key != "model":
            setattr(cfg, key, value)
    for key in known:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
    for key in _MODEL_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            model_overrides[key] = flag
    cfg.model = model_overrides
    if cfg.seed is None:
        raise ConfigError("a seed is required (--seed or config \"seed\")")
    cfg.seed = int(cfg.seed)
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def model_config(run: RunConfig) -> M.ModelConfig:
    overrides = dict(run.model)
    if "classifier_dims" in overrides and overrides["classifier_dims"] is not None:
        overrides["classifier_dims"] = tuple(overrides["classifier_dims"])
    if "dropout_rates" in overrides:
        overrides["dropout_rates"] = tuple(overrides["dropout_rates"])
    cfg = M.make_config(run.profile, seed=run.seed, **overrides)
    return cfg.with_variant(run.variant)


def build_provider(run: RunConfig, cfg: M.ModelConfig):
    if run.provider == "hash":
        return make_provider(cfg=HashEmbedderConfig(dim=cfg.embed_dim, seed=run.seed))
    if run.provider == "table":
        if not run.embeddings:
            raise ConfigError("provider 'table' needs --embeddings")
        return make_provider(table=load_table(run.embeddings, cfg.embed_dim))
    raise ConfigError(f"unknown provider {run.provider!r} (pick hash or table)")


def _outdir(run: RunConfig) -> Path:
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _epoch_rows(logs):
    return [(r.epoch, repr(r.loss), repr(r.train_acc), repr(r.holdout_acc)) for r in logs]


# ---------------------------------------------------------------------------
# Data helpers


def _fold_stats(threads, cfg: M.ModelConfig):
    """Feature stats over exactly the replies the model will consume."""
    vectors = [
        extract_features(reply, t.source)
        for t in threads
        for reply in t.replies[: cfg.context_len]
    ]
    return compute_stats(vectors)


def _train_seed(master_seed: int, fold_index: int) -> int:
    ss = np.random.SeedSequence([master_seed, 202, fold_index])
    return int(ss.generate_state(1)[0])


def _run_fold(payload) -> dict:
    """Train and score one fold; runs in a worker when --jobs > 1."""
    fold_index, fold, by_id, cfg, provider_spec, keep_best = payload
    cfg = dataclasses.replace(cfg, seed=_train_seed(cfg.seed, fold_index))
    kind, table_path, hash_seed = provider_spec
    if kind == "hash":
        provider = make_provider(cfg=HashEmbedderConfig(dim=cfg.embed_dim, seed=hash_seed))
    else:
        provider = make_provider(table=load_table(table_path, cfg.embed_dim))
    train_threads = [by_id[i] for i in fold.train]
    stats = _fold_stats(train_threads, cfg)
    enc = lambda ids: M.encode_threads([by_id[i] for i in ids], stats, provider, cfg)
    train_ex = enc(fold.train)
    holdout_ex = enc(fold.holdout)
    test_ex = enc(fold.test)
    params, logs = M.train(train_ex, holdout_ex, cfg, keep_best=keep_best)
    preds, _, _ = M.predict(test_ex, params, cfg)
    golds = [e.label for e in test_ex]
    row = ev.metrics(preds, golds)
    row["fold"] = fold_index
    row["n_test"] = len(test_ex)
    if fold.test_event is not None:
        row["test_event"] = fold.test_event
    return {"fold": fold_index, "row": row, "logs": logs, "params": params}


def _plan(run: RunConfig, threads) -> ev.FoldPlan:
    if run.scheme == "kfold":
        return ev.plan_stratified_kfold(threads, k=run.k, seed=run.seed)
    if run.scheme == "loocv":
        return ev.plan_loocv(
            threads,
            test_events=run.test_events,
            holdout_fraction=run.holdout_fraction,
            seed=run.seed,
        )
    raise ConfigError(f"unknown scheme {run.scheme!r} (pick kfold or loocv)")


def _run_harness(run: RunConfig, cfg: M.ModelConfig, threads, plan: ev.FoldPlan):
    by_id = {t.thread_id: t for t in threads}
    provider_spec = (run.provider, run.embeddings, run.seed)
    payloads = []
    for i, fold in enumerate(plan.folds):
        ids = set(fold.train) | set(fold.holdout) | set(fold.test)
        sub = {tid: by_id[tid] for tid in ids}
        payloads.append((i, fold, sub, cfg, provider_spec, run.keep_best))
    if run.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=run.jobs) as pool:
            results = list(pool.map(_run_fold, payloads))
    else:
        results = [_run_fold(p) for p in payloads]
    results.sort(key=lambda r: r["fold"])
    return results


def _write_harness_artifacts(run: RunConfig, results, plan: ev.FoldPlan, out: Path):
    rows = [r["row"] for r in results]
    mean = ev.aggregate(rows)
    ev.save_plan(out / "folds.json", plan)
    _write_json(out / "metrics.json", {"folds": rows, "mean": mean})
    table = [
        (r["fold"], r.get("test_event", ""), repr(r["precision"]), repr(r["recall"]),
         repr(r["f1"]), repr(r["accuracy"]), r["n_test"])
        for r in rows
    ]
    _write_csv(
        out / "metrics.csv",
        ("fold", "test_event", "precision", "recall", "f1", "accuracy", "n_test"),
        table,
    )
    for r in results:
        tag = f"fold-{r['fold']:02d}"
        save_checkpoint(out / f"{tag}.ckpt", r["params"])
        _write_csv(out / f"{tag}-epochs.csv",
                   ("epoch", "loss", "train_acc", "holdout_acc"), _epoch_rows(r["logs"]))
    if run.figures:
        from . import report

        fold_logs = {}
        for r in results:
            name = r["row"].get("test_event") or f"fold {r['fold']}"
            fold_logs[f"{r['fold']:02d} {name}"] = r["logs"]
        report.render_fold_curves(fold_logs, out / "curves.png")
        bar_rows = [dict(name=f"fold {r['fold']}", **{k: r["row"][k] for k in ev.METRIC_KEYS})
                    for r in results]
        bar_rows.append(dict(name="mean", **mean))
        report.render_metric_bars(bar_rows, out / "metrics.png", title="per-fold metrics")
    return mean


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    threads = ev.synth_corpus(args.n, args.signal, args.seed, n_events=args.n_events)
    write_corpus(args.out, threads)
    print(f"wrote {len(threads)} threads to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    threads = parse_corpus(args.corpus)
    kept = filter_candidates(threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out / "filtered.jsonl", kept)
    by_event: dict[str, list] = {}
    for t in kept:
        by_event.setdefault(t.event, []).append(t)
    rows = []
    for event in sorted(by_event):
        group = by_event[event]
        counts = [len(t.replies) for t in group]
        spans = [
            (t.replies[-1].timestamp - t.source.timestamp).total_seconds() / 60.0
            for t in group
        ]
        rows.append(
            (
                event,
                len(group),
                sum(1 for t in group if t.label == 1),
                sum(1 for t in group if t.label == 0),
                repr(statistics.mean(counts)),
                min(counts),
                max(counts),
                repr(float(statistics.median(counts))),
                repr(statistics.mean(spans)),
            )
        )
    _write_csv(
        out / "events.csv",
        ("event", "threads", "rumors", "non_rumors", "replies_avg", "replies_min",
         "replies_max", "replies_median", "avg_context_minutes"),
        rows,
    )
    print(f"kept {len(kept)} of {len(threads)} threads; summary in {out / 'events.csv'}")
    return 0


def cmd_stats(args) -> int:
    threads = parse_corpus(args.corpus)
    if not threads:
        raise CorpusError(f"{args.corpus}: no threads to compute statistics from")
    vectors = [extract_features(r, t.source) for t in threads for r in t.replies]
    save_stats(args.out, compute_stats(vectors))
    print(f"wrote stats over {len(vectors)} replies to {args.out}")
    return 0


def cmd_train(args) -> int:
    run = resolve_config(args)
    if not run.corpus:
        raise ConfigError("train needs --corpus")
    cfg = model_config(run)
    out = _outdir(run)
    threads = filter_candidates(parse_corpus(run.corpus))
    if not threads:
        raise CorpusError("no threads survive candidate filtering")
    rng = np.random.default_rng(np.random.SeedSequence([run.seed, 101]))
    pool = ev.balance(threads, rng)
    n_holdout = int(len(pool) * run.holdout_fraction)
    holdout_threads, train_threads = pool[:n_holdout], pool[n_holdout:]
    if not train_threads:
        raise CorpusError("no training threads left after the holdout split")
    if run.stats:
        stats = load_stats(run.stats)
    else:
        stats = _fold_stats(train_threads, cfg)
        save_stats(out / "stats.json", stats)
    provider = build_provider(run, cfg)
    train_ex = M.encode_threads(train_threads, stats, provider, cfg)
    holdout_ex = M.encode_threads(holdout_threads, stats, provider, cfg)
    params, logs = M.train(train_ex, holdout_ex, cfg, keep_best=run.keep_best)
    save_checkpoint(out / "model.ckpt", params)
    _write_csv(out / "epochs.csv", ("epoch", "loss", "train_acc", "holdout_acc"),
               _epoch_rows(logs))
    if run.figures:
        from . import report

        report.render_training_curves(logs, out / "curves.png",
                                      title=f"{run.variant} ({run.profile})")
    last = logs[-1]
    print(
        f"trained {len(train_ex)} examples for {last.epoch} epochs: "
        f"loss {last.loss:.4f}, train acc {last.train_acc:.3f}, "
        f"holdout acc {last.holdout_acc:.3f}"
    )
    return 0


def _cmd_harness(args, scheme: str | None = None) -> int:
    run = resolve_config(args)
    if scheme is not None:
        run.scheme = scheme
    if not run.corpus:
        raise ConfigError(f"{run.scheme} needs --corpus")
    cfg = model_config(run)
    out = _outdir(run)
    threads = filter_candidates(parse_corpus(run.corpus))
    if not threads:
        raise CorpusError("no threads survive candidate filtering")
    plan = _plan(run, threads)
    results = _run_harness(run, cfg, threads, plan)
    mean = _write_harness_artifacts(run, results, plan, out)
    print(
        f"{run.scheme} over {len(plan.folds)} folds ({run.variant}): "
        + ", ".join(f"{k} {mean[k]:.3f}" for k in ev.METRIC_KEYS)
    )
    return 0


def cmd_cv(args) -> int:
    return _cmd_harness(args)


def cmd_loocv(args) -> int:
    return _cmd_harness(args, scheme="loocv")


def cmd_ablate(args) -> int:
    run = resolve_config(args)
    if not run.corpus:
        raise ConfigError("ablate needs --corpus")
    out = _outdir(run)
    threads = filter_candidates(parse_corpus(run.corpus))
    if not threads:
        raise CorpusError("no threads survive candidate filtering")
    plan = _plan(run, threads)
    variant_rows = []
    detail = {}
    for variant in M.VARIANTS:
        cfg = model_config(run).with_variant(variant)
        results = _run_harness(run, cfg, threads, plan)
        rows = [r["row"] for r in results]
        mean = ev.aggregate(rows)
        detail[variant] = {"folds": rows, "mean": mean}
        variant_rows.append(dict(name=variant, **mean))
        print(f"{variant}: " + ", ".join(f"{k} {mean[k]:.3f}" for k in ev.METRIC_KEYS))
    ev.save_plan(out / "folds.json", plan)
    _write_json(out / "ablation.json", detail)
    _write_csv(
        out / "ablation.csv",
        ("variant", "precision", "recall", "f1", "accuracy"),
        [(r["name"], *(repr(r[k]) for k in ev.METRIC_KEYS)) for r in variant_rows],
    )
    if run.figures:
        from . import report

        report.render_metric_bars(variant_rows, out / "ablation.png",
                                  title="input-stream ablations")
    return 0


def cmd_export_attention(args) -> int:
    run = resolve_config(args)
    if not run.corpus:
        raise ConfigError("export-attention needs --corpus")
    cfg = model_config(run)
    params = load_checkpoint(args.checkpoint)
    need = "fc1_W"
    if need not in params:
        raise CorpusError(f"{args.checkpoint}: missing tensor {need}")
    if params[need].shape[1] != cfg.classifier_input:
        raise ConfigError(
            f"checkpoint classifier input {params[need].shape[1]} does not match "
            f"config {cfg.classifier_input} (wrong profile or variant?)"
        )
    threads = filter_candidates(parse_corpus(run.corpus))
    if not threads:
        raise CorpusError("no threads survive candidate filtering")
    stats = load_stats(run.stats) if run.stats else _fold_stats(threads, cfg)
    provider = build_provider(run, cfg)
    examples = M.encode_threads(threads, stats, provider, cfg)
    _, _, trace = M.predict(examples, params, cfg)
    layers = {"cc": trace.att_cc, "cm": trace.att_cm, "joint": trace.att_joint}
    out = _outdir(run)
    rows = []
    for layer in ("cc", "cm", "joint"):
        weights = layers[layer]
        if weights is None:
            continue
        for b, ex in enumerate(examples):
            for t in range(weights.shape[1]):
                rows.append((ex.thread_id, layer, t, repr(float(weights[b, t]))))
    if not rows:
        raise ConfigError("this variant has no attention layers to export")
    _write_csv(out / "attention.csv", ("example_id", "layer", "t", "weight"), rows)
    if run.figures:
        from . import report

        present = {k: v for k, v in layers.items() if v is not None}
        report.render_attention_heatmap(
            present, [e.thread_id for e in examples], out / "attention.png"
        )
    print(f"wrote attention weights for {len(examples)} examples to {out / 'attention.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    failed = False
    for name, err in run_gradient_suite(seed=args.seed):
        ok = err < GRAD_TOLERANCE
        failed = failed or not ok
        print(f"{name}: max relative error {err:.3e} {'ok' if ok else 'FAIL'}")
    if failed:
        raise NumericalError("gradient check failed")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_config_flags(p):
    p.add_argument("--config", help="JSON config file; flags override its keys")
    # a seed must come from here or the config file; resolve_config enforces it
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--profile", choices=("paper", "desk"))
    p.add_argument("--variant", choices=sorted(M.VARIANTS))
    p.add_argument("--provider", choices=("hash", "table"))
    p.add_argument("--embeddings", help="embedding table path (provider 'table')")
    p.add_argument("--stats", help="feature stats JSON from training data")
    p.add_argument("--corpus", help="thread corpus JSONL")
    p.add_argument("--jobs", type=int, help="parallel fold workers")
    p.add_argument("--epochs", type=int, dest="epochs")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="lr")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--context-len", type=int, dest="context_len")
    p.add_argument("--keep-best", action="store_const", const=True, dest="keep_best")
    p.add_argument("--no-figures", action="store_const", const=False, dest="figures")
    p.add_argument("--holdout-fraction", type=float, dest="holdout_fraction")


def build_parser() -> _Parser:
    parser = _Parser(prog="rpdnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--signal", choices=("cc", "cm", "sc", "mixed"), default="mixed")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-events", type=int, default=4)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse, filter, and summarize a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="compute feature statistics from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="stats JSON path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="single train/holdout run")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="cross-validation harness (kfold or loocv)")
    _add_config_flags(p)
    p.add_argument("--scheme", choices=("kfold", "loocv"))
    p.add_argument("--k", type=int)
    p.add_argument("--test-events", dest="test_events",
                   help="comma-separated event names (loocv)")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("loocv", help="leave-one-event-out cross validation")
    _add_config_flags(p)
    p.add_argument("--test-events", dest="test_events",
                   help="comma-separated event names")
    p.set_defaults(func=cmd_loocv)

    p = sub.add_parser("ablate", help="run all eight input-stream variants")
    _add_config_flags(p)
    p.add_argument("--scheme", choices=("kfold", "loocv"))
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-attention", help="dump attention weights to CSV")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_export_attention)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "test_events", None):
        args.test_events = [e for e in args.test_events.split(",") if e]
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
