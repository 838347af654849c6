"""Cross-validation planning, class balancing, metrics, and synthetic data.

Two fold schemes are supported: leave-one-event-out (the test fold's event
never appears in training or holdout) and stratified k-fold (per-class
round-robin so every fold preserves the class ratio up to one sample).
The synthetic corpus generator plants a label signal in exactly one input
stream, which is what desk-scale learning checks key on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import ConfigError, CorpusError
from .ingest import Thread, Tweet, UserProfile

# ---------------------------------------------------------------------------
# Metrics (positive class = 1)


def metrics(preds, golds) -> dict:
    """Precision/recall/F1 for the positive class plus accuracy.

    Zero-denominator conventions: P = 0 when nothing was predicted
    positive, R = 0 when nothing is positive, F1 = 0 when P + R = 0.
    """
    preds = np.asarray(preds, dtype=int)
    golds = np.asarray(golds, dtype=int)
    if preds.shape != golds.shape or preds.ndim != 1:
        raise ConfigError("metrics: predictions and golds must be equal-length 1-d")
    if preds.size == 0:
        raise ConfigError("metrics: empty prediction vector")
    tp = int(np.sum((preds == 1) & (golds == 1)))
    fp = int(np.sum((preds == 1) & (golds == 0)))
    fn = int(np.sum((preds == 0) & (golds == 1)))
    tn = int(np.sum((preds == 0) & (golds == 0)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    accuracy = (tp + tn) / preds.size
    return {"precision": precision, "recall": recall, "f1": f1, "accuracy": accuracy}


METRIC_KEYS = ("precision", "recall", "f1", "accuracy")


def aggregate(rows: list[dict]) -> dict:
    """Unweighted mean of each metric across folds."""
    if not rows:
        raise ConfigError("aggregate: no fold rows")
    return {k: float(np.mean([r[k] for r in rows])) for k in METRIC_KEYS}


# ---------------------------------------------------------------------------
# Balancing and fold planning


def balance(threads: list[Thread], rng) -> list[Thread]:
    """Downsample the majority class to the minority count, then shuffle."""
    rng = np.random.default_rng(rng)
    pos = [t for t in threads if t.label == 1]
    neg = [t for t in threads if t.label == 0]
    keep = min(len(pos), len(neg))
    if len(pos) > keep:
        pos = [pos[i] for i in rng.choice(len(pos), size=keep, replace=False)]
    if len(neg) > keep:
        neg = [neg[i] for i in rng.choice(len(neg), size=keep, replace=False)]
    merged = pos + neg
    return [merged[i] for i in rng.permutation(len(merged))]


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    holdout: tuple[str, ...]
    test: tuple[str, ...]
    test_event: str | None = None


@dataclass(frozen=True)
class FoldPlan:
    scheme: str
    seed: int
    folds: tuple[Fold, ...] = field(default_factory=tuple)


def plan_loocv(
    threads: list[Thread],
    test_events: list[str] | None = None,
    holdout_fraction: float = 0.1,
    seed: int = 0,
) -> FoldPlan:
    """One fold per test event; other events pooled, balanced, split 9:1."""
    by_event: dict[str, list[Thread]] = {}
    for t in threads:
        by_event.setdefault(t.event, []).append(t)
    if test_events is None:
        test_events = sorted(by_event)
    for ev in test_events:
        if ev not in by_event:
            raise ConfigError(f"test event {ev!r} not present in the corpus")
    master = np.random.SeedSequence(seed)
    folds = []
    for ev, ss in zip(test_events, master.spawn(len(test_events))):
        rng = np.random.default_rng(ss)
        pool = balance([t for t in threads if t.event != ev], rng)
        n_holdout = int(len(pool) * holdout_fraction)
        holdout = pool[:n_holdout]
        train = pool[n_holdout:]
        folds.append(
            Fold(
                train=tuple(t.thread_id for t in train),
                holdout=tuple(t.thread_id for t in holdout),
                test=tuple(t.thread_id for t in by_event[ev]),
                test_event=ev,
            )
        )
    return FoldPlan(scheme="loocv", seed=seed, folds=tuple(folds))


def plan_stratified_kfold(threads: list[Thread], k: int = 5, seed: int = 0) -> FoldPlan:
    """Per-class shuffle and round-robin deal into k folds.

    Fold i tests on bucket i and holds out bucket (i+1) mod k; the
    remaining k-2 buckets train.  Per-class bucket sizes differ by at
    most one, so each fold's class ratio tracks the global one.
    """
    if k < 3:
        # one bucket tests and one holds out, so k=2 leaves nothing to train on
        raise ConfigError(f"k-fold needs k >= 3, got {k}")
    if len(threads) < k:
        raise ConfigError(f"cannot make {k} folds from {len(threads)} threads")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    buckets: list[list[str]] = [[] for _ in range(k)]
    for cls in (1, 0):
        members = [t.thread_id for t in threads if t.label == cls]
        order = rng.permutation(len(members))
        for j, idx in enumerate(order):
            buckets[j % k].append(members[idx])
    folds = []
    for i in range(k):
        hold = (i + 1) % k
        train: list[str] = []
        for j in range(k):
            if j not in (i, hold):
                train.extend(buckets[j])
        folds.append(Fold(train=tuple(train), holdout=tuple(buckets[hold]),
                          test=tuple(buckets[i])))
    return FoldPlan(scheme="kfold", seed=seed, folds=tuple(folds))


def plan_to_obj(plan: FoldPlan) -> dict:
    folds = []
    for f in plan.folds:
        obj = {"train": list(f.train), "holdout": list(f.holdout), "test": list(f.test)}
        if f.test_event is not None:
            obj["test_event"] = f.test_event
        folds.append(obj)
    return {"scheme": plan.scheme, "seed": plan.seed, "folds": folds}


def obj_to_plan(obj: dict) -> FoldPlan:
    try:
        folds = tuple(
            Fold(
                train=tuple(f["train"]),
                holdout=tuple(f["holdout"]),
                test=tuple(f["test"]),
                test_event=f.get("test_event"),
            )
            for f in obj["folds"]
        )
        return FoldPlan(scheme=obj["scheme"], seed=int(obj["seed"]), folds=folds)
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"malformed fold plan: {exc}") from exc


def save_plan(path, plan: FoldPlan) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_obj(plan), fh, indent=2)
        fh.write("\n")


def load_plan(path) -> FoldPlan:
    with open(path, encoding="utf-8") as fh:
        return obj_to_plan(json.load(fh))


def report_to_obj(fold_rows: list[dict], mean: dict) -> dict:
    return {"folds": fold_rows, "mean": mean}


def save_report(path, fold_rows: list[dict], mean: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_obj(fold_rows, mean), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic corpora
#
# Label signal is planted in exactly one stream so a model restricted to
# that stream must be able to learn it, and a model without it must not.

RUMOR_REPLY_VOCAB = (
    "hoax", "fake", "unverified", "doubt", "sketchy", "fabricated",
    "debunked", "misleading",
)
NEUTRAL_REPLY_VOCAB = (
    "confirmed", "official", "verified", "documented", "accurate",
    "corroborated", "sourced", "factual",
)
FILLER_VOCAB = (
    "the", "this", "story", "people", "saying", "about", "today", "news",
    "thread", "update", "read", "more",
)
RUMOR_SOURCE_MARKERS = ("allegedly", "unconfirmed", "circulating", "claims")
NEUTRAL_SOURCE_MARKERS = ("statement", "spokesperson", "press", "release")
SOURCE_BASE_VOCAB = (
    "breaking", "report", "incident", "downtown", "officials", "responding",
    "developing", "coverage", "scene", "area",
)

_EPOCH = datetime(2019, 1, 1, tzinfo=timezone.utc)


def _words(rng, vocab, n) -> str:
    return " ".join(vocab[i] for i in rng.integers(0, len(vocab), size=n))


def _profile(rng, uid: str, now: datetime, reputation: str) -> UserProfile:
    """reputation 'low' | 'high' | 'mid' shifts follower/following balance."""
    if reputation == "low":
        followers = int(rng.integers(0, 40))
        followings = int(rng.integers(300, 900))
    elif reputation == "high":
        followers = int(rng.integers(800, 6000))
        followings = int(rng.integers(20, 200))
    else:
        followers = int(rng.integers(100, 500))
        followings = int(rng.integers(100, 500))
    age_days = int(rng.integers(100, 2000))
    return UserProfile(
        user_id=uid,
        posts_count=int(rng.integers(10, 5000)),
        listed_count=int(rng.integers(0, 50)),
        followers=followers,
        followings=followings,
        favourites_count=int(rng.integers(0, 3000)),
        account_created_at=now - timedelta(days=age_days),
        verified=bool(rng.random() < 0.1),
        geo_enabled=bool(rng.random() < 0.5),
        has_profile_background_image=bool(rng.random() < 0.8),
        description_text=_words(rng, FILLER_VOCAB, int(rng.integers(0, 8))),
        display_name=f"user {uid}",
    )


def _tweet(rng, tid, text, ts, profile, urls=()) -> Tweet:
    return Tweet(
        tweet_id=tid,
        text=text,
        timestamp=ts,
        author=profile,
        retweet_count=int(rng.integers(0, 40)),
        favorite_count=int(rng.integers(0, 20)),
        urls=tuple(urls),
        has_native_media=bool(rng.random() < 0.3),
    )


def synth_corpus(n: int, signal: str = "mixed", seed: int = 0,
                 n_events: int = 4) -> list[Thread]:
    """Generate ``n`` labeled threads with the rumor signal in one stream.

    signal='cc' hides the label in reply token choice alone; 'cm' in reply
    metadata (question marks, author reputation, response delay); 'sc' in
    source-text marker tokens; 'mixed' plants all three.  Labels alternate
    and events rotate every two threads, so any even ``n`` is globally and
    per-event class-balanced.  Fully deterministic for a given seed.
    """
    if signal not in ("cc", "cm", "sc", "mixed"):
        raise ConfigError(f"unknown synthetic signal {signal!r}")
    if n_events < 1:
        raise ConfigError("n_events must be >= 1")
    rng = np.random.default_rng(seed)
    in_cc = signal in ("cc", "mixed")
    in_cm = signal in ("cm", "mixed")
    in_sc = signal in ("sc", "mixed")
    threads = []
    for i in range(n):
        label = i % 2
        event = f"event-{(i // 2) % n_events:02d}"
        rumor = label == 1
        src_time = _EPOCH + timedelta(days=i, minutes=int(rng.integers(0, 600)))

        words = [_words(rng, SOURCE_BASE_VOCAB, 6)]
        if in_sc:
            markers = RUMOR_SOURCE_MARKERS if rumor else NEUTRAL_SOURCE_MARKERS
            words.append(_words(rng, markers, 3))
        src_text = " ".join(words)
        source = _tweet(
            rng, f"t{i:05d}", src_text, src_time,
            _profile(rng, f"u{i:05d}", src_time, "mid"),
        )

        replies = []
        for j in range(int(rng.integers(6, 10))):
            if in_cm:
                delay = int(rng.integers(1, 20)) if rumor else int(rng.integers(180, 1400))
                reputation = "low" if rumor else "high"
            else:
                delay = int(rng.integers(20, 300))
                reputation = "mid"
            ts = src_time + timedelta(minutes=delay, seconds=j)
            if in_cc:
                vocab = RUMOR_REPLY_VOCAB if rumor else NEUTRAL_REPLY_VOCAB
                text = _words(rng, vocab, int(rng.integers(4, 9)))
            else:
                text = _words(rng, FILLER_VOCAB, int(rng.integers(4, 9)))
            if in_cm and rumor:
                text = text + " ?"
            replies.append(
                _tweet(
                    rng, f"t{i:05d}r{j}", text, ts,
                    _profile(rng, f"u{i:05d}x{j}", ts, reputation),
                    urls=["https://example.com/a"] if rng.random() < 0.3 else (),
                )
            )
        replies.sort(key=lambda r: (r.timestamp, r.tweet_id))
        threads.append(Thread(source=source, replies=tuple(replies),
                              label=label, event=event))
    return threads
