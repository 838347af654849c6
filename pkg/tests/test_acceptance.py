"""Acceptance gate: nine numbered properties, one printed verdict each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict
lines; each test is independent and seeded.
"""

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from rpdnn import cli
from rpdnn.cli import _fold_stats
from rpdnn.embed import HashEmbedderConfig, make_provider
from rpdnn.evaluation import (
    metrics,
    plan_loocv,
    plan_stratified_kfold,
    synth_corpus,
)
from rpdnn.features import compute_stats, extract_features, load_stats, normalize, save_stats
from rpdnn.model import (
    VARIANTS,
    ModelConfig,
    encode_threads,
    forward,
    init_params,
    make_config,
    random_examples,
    train,
)
from rpdnn.nn.gradcheck import run_gradient_suite
from rpdnn.nn.layers import masked_softmax_forward

GOLDEN_STATS = Path(__file__).parent / "data" / "golden_stats.json"


def verdict(criterion: str, ok: bool, detail: str) -> None:
    print(f"\n[{criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{criterion}: {detail}"


def desk_provider(cfg, seed):
    return make_provider(cfg=HashEmbedderConfig(dim=cfg.embed_dim, seed=seed))


def test_c1_gradient_suite():
    """Every backward pass matches central differences within 1e-4."""
    t0 = time.time()
    results = run_gradient_suite(seed=0, full_model=True)
    elapsed = time.time() - t0
    worst_name, worst = max(results, key=lambda r: r[1])
    ok = all(err < 1e-4 for _, err in results) and elapsed < 120
    verdict(
        "C1 gradients",
        ok,
        f"{len(results)} checks, worst {worst_name} {worst:.2e}, {elapsed:.1f}s",
    )


def test_c2_masking():
    """Valid attention weights sum to 1, padding gets exactly 0, and padded
    inputs cannot move the logits by even one bit."""
    rng = np.random.default_rng(0)
    worst_sum_gap = 0.0
    for _ in range(50):
        B, T = int(rng.integers(1, 8)), int(rng.integers(1, 12))
        scores = rng.normal(scale=4, size=(B, T))
        lengths = rng.integers(1, T + 1, size=B)
        mask = np.arange(T)[None, :] < lengths[:, None]
        w, _ = masked_softmax_forward(scores, mask)
        worst_sum_gap = max(worst_sum_gap, float(np.abs(w.sum(axis=1) - 1).max()))
        assert np.array_equal(w[~mask], np.zeros((~mask).sum()))

    cfg = ModelConfig(embed_dim=16, context_len=10, seed=0)
    params = init_params(cfg, np.random.default_rng(1))
    examples = random_examples(cfg, batch=6, rng=rng)
    base = forward(params, examples, cfg).logits
    poked = []
    for ex in examples:
        cc = ex.cc.copy()
        cm = ex.cm.copy()
        cc[~ex.mask] = rng.normal(scale=1e5, size=cc[~ex.mask].shape)
        cm[~ex.mask] = rng.normal(scale=1e5, size=cm[~ex.mask].shape)
        poked.append(dataclasses.replace(ex, cc=cc, cm=cm))
    bit_identical = np.array_equal(base, forward(params, poked, cfg).logits)

    ok = worst_sum_gap < 1e-12 and bit_identical
    verdict(
        "C2 masking",
        ok,
        f"max |sum-1| {worst_sum_gap:.1e}, padded-input logits bit-identical: "
        f"{bit_identical}",
    )


def test_c3_ablation_opacity():
    """Each of the 8 variants is bitwise blind to its disabled streams."""
    rng = np.random.default_rng(2)
    noise = np.random.default_rng(3)
    opaque = {}
    for variant in VARIANTS:
        cfg = ModelConfig(embed_dim=12, context_len=6, seed=0).with_variant(variant)
        params = init_params(cfg, np.random.default_rng(4))
        examples = random_examples(cfg, batch=4, rng=rng)
        base = forward(params, examples, cfg).logits
        poked = []
        for ex in examples:
            fields = {}
            if not cfg.use_source:
                fields["sc"] = noise.normal(size=ex.sc.shape)
            if not cfg.use_cc:
                fields["cc"] = noise.normal(size=ex.cc.shape)
            if not cfg.use_cm:
                fields["cm"] = noise.normal(size=ex.cm.shape)
            poked.append(dataclasses.replace(ex, **fields) if fields else ex)
        opaque[variant] = np.array_equal(base, forward(params, poked, cfg).logits)
    bad = sorted(v for v, good in opaque.items() if not good)
    verdict(
        "C3 ablation opacity",
        not bad,
        f"{len(opaque)} variants bit-identical under disabled-stream noise"
        + (f"; leaking: {bad}" if bad else ""),
    )


def test_c4_overfit():
    """The full model memorizes a 64-thread mixed-signal corpus."""
    t0 = time.time()
    cfg = make_config("desk", seed=7, epochs=200)
    threads = synth_corpus(64, "mixed", 7)
    stats = _fold_stats(threads, cfg)
    examples = encode_threads(threads, stats, desk_provider(cfg, 7), cfg)
    _, logs = train(examples, [], cfg, stop_at_train_acc=0.95)
    elapsed = time.time() - t0
    acc = logs[-1].train_acc
    ok = acc >= 0.95 and len(logs) <= 200 and elapsed < 300
    verdict(
        "C4 overfit",
        ok,
        f"train acc {acc:.3f} after {len(logs)} epochs, {elapsed:.1f}s",
    )


def test_c5_branch_learning():
    """A single-branch model recovers a label planted only in its stream."""
    outcomes = []
    for signal, variant in (("cm", "cm-only"), ("cc", "cc-only")):
        cfg = make_config("desk", seed=11, epochs=30).with_variant(variant)
        threads = synth_corpus(400, signal, 11)
        order = np.random.default_rng(
            np.random.SeedSequence([11, 303])
        ).permutation(len(threads))
        shuffled = [threads[i] for i in order]
        train_threads, holdout_threads = shuffled[:320], shuffled[320:]
        stats = _fold_stats(train_threads, cfg)
        provider = desk_provider(cfg, 11)
        train_ex = encode_threads(train_threads, stats, provider, cfg)
        holdout_ex = encode_threads(holdout_threads, stats, provider, cfg)
        _, logs = train(train_ex, holdout_ex, cfg, stop_at_holdout_acc=0.90)
        outcomes.append((signal, variant, logs[-1].holdout_acc, len(logs)))
    ok = all(acc >= 0.90 for _, _, acc, _ in outcomes)
    detail = "; ".join(
        f"{signal} corpus -> {variant} holdout acc {acc:.3f} ({n} epochs)"
        for signal, variant, acc, n in outcomes
    )
    verdict("C5 branch learning", ok, detail)


def test_c6_metrics_oracle():
    """Library metrics equal brute-force confusion counts on 1,000 vectors,
    and the F1 identity reproduces the published operating point."""
    rng = np.random.default_rng(42)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        preds = rng.integers(0, 2, size=n)
        golds = rng.integers(0, 2, size=n)
        tp = int(((preds == 1) & (golds == 1)).sum())
        fp = int(((preds == 1) & (golds == 0)).sum())
        fn = int(((preds == 0) & (golds == 1)).sum())
        tn = int(((preds == 0) & (golds == 0)).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        want = {
            "precision": p,
            "recall": r,
            "f1": 2 * p * r / (p + r) if p + r else 0.0,
            "accuracy": (tp + tn) / n,
        }
        if metrics(preds, golds) != want:
            mismatches += 1
    p, r = 0.648, 0.834
    f1 = 2 * p * r / (p + r)
    ok = mismatches == 0 and abs(f1 - 0.727) < 0.005
    verdict(
        "C6 metrics oracle",
        ok,
        f"{mismatches}/1000 mismatches; F1(0.648, 0.834) = {f1:.4f} "
        f"vs reported 0.727",
    )


def test_c7_normalization(tmp_path):
    """Z-scoring its own training set gives mean 0 / std 1, and the golden
    stats fixture survives a save/load cycle without value drift."""
    worst_mean = 0.0
    worst_std_gap = 0.0
    for seed in (0, 1, 2):
        threads = synth_corpus(40, "mixed", seed)
        vectors = [
            extract_features(r, t.source) for t in threads for r in t.replies
        ]
        stats = compute_stats(vectors)
        normed = np.stack([normalize(v, stats).values for v in vectors])
        worst_mean = max(worst_mean, float(np.abs(normed.mean(axis=0)).max()))
        live = stats.std > 0
        worst_std_gap = max(
            worst_std_gap, float(np.abs(normed[:, live].std(axis=0) - 1).max())
        )

    golden = load_stats(GOLDEN_STATS)
    out = tmp_path / "roundtrip.json"
    save_stats(out, golden)
    lossless = json.loads(out.read_text()) == json.loads(GOLDEN_STATS.read_text())

    ok = worst_mean < 1e-9 and worst_std_gap < 1e-6 and lossless
    verdict(
        "C7 normalization",
        ok,
        f"max |mean| {worst_mean:.1e}, max |std-1| {worst_std_gap:.1e}, "
        f"fixture lossless: {lossless}",
    )


def test_c8_cv_harness():
    """Fold plans: event exclusion, stratification, and the 9:1 split."""
    threads = synth_corpus(96, "mixed", 5, n_events=12)
    by_id = {t.thread_id: t for t in threads}

    loocv = plan_loocv(threads, seed=5)
    leaks = 0
    for fold in loocv.folds:
        for tid in fold.train + fold.holdout:
            if by_id[tid].event == fold.test_event:
                leaks += 1
        if {by_id[t].event for t in fold.test} != {fold.test_event}:
            leaks += 1

    kfold = plan_stratified_kfold(threads, k=5, seed=5)
    spread_ok = True
    for cls in (0, 1):
        counts = [
            sum(1 for tid in f.test if by_id[tid].label == cls)
            for f in kfold.folds
        ]
        spread_ok = spread_ok and (max(counts) - min(counts) <= 1)

    split_exact = all(
        len(f.holdout) == int((len(f.train) + len(f.holdout)) * 0.1)
        for f in loocv.folds
    )
    ok = leaks == 0 and spread_ok and split_exact
    verdict(
        "C8 cv harness",
        ok,
        f"{len(loocv.folds)} loocv folds with {leaks} event leaks; "
        f"5-fold class spread <= 1: {spread_ok}; 9:1 split exact: {split_exact}",
    )


def test_c9_determinism(tmp_path):
    """Two identical cmd_cv runs leave byte-identical result files."""
    corpus = tmp_path / "corpus.jsonl"
    assert cli.main(["synth", "--n", "18", "--seed", "13",
                     "--out", str(corpus)]) == 0
    args = ["cv", "--corpus", str(corpus), "--seed", "13", "--k", "3",
            "--embed-dim", "8", "--context-len", "6", "--epochs", "2",
            "--batch-size", "8", "--no-figures"]
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli.main(args + ["--out", str(out_a)]) == 0
    assert cli.main(args + ["--out", str(out_b)]) == 0

    compared = []
    identical = True
    for name in ("metrics.json", "metrics.csv", "folds.json",
                 "fold-00.ckpt", "fold-01.ckpt", "fold-02.ckpt"):
        same = (out_a / name).read_bytes() == (out_b / name).read_bytes()
        compared.append(name)
        identical = identical and same
    verdict(
        "C9 determinism",
        identical,
        f"{len(compared)} files byte-identical across reruns",
    )
