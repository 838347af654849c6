"""Hand-crafted context metadata features.

Each reply in a thread is summarized by 27 numbers describing its author
(reputation, activity rates, profile completeness) and the tweet itself
(engagement counts, content shape, timing relative to the source tweet).
Features are normalized with global statistics computed once from
training data and shipped as a small JSON stats file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CorpusError
from .ingest import Tweet, preprocess_text

# Fixed order: 16 user features, then 11 tweet features.  Stats files and
# MetadataVector values follow this order exactly.
FEATURE_NAMES = (
    "posts_count",
    "listed_count",
    "followers",
    "followings",
    "follow_ratio",
    "follow_ratio_v2",
    "user_favourites",
    "account_age",
    "is_verified",
    "engagement",
    "following_rate",
    "favourites_rate",
    "geo_enabled",
    "description_length",
    "profile_name_length",
    "is_source_user",
    "retweet_count",
    "favorite_count",
    "has_question",
    "is_duplicate",
    "has_image",
    "has_url",
    "url_count",
    "has_native_media",
    "content_length",
    "response_time_decay",
    "has_profile_description",
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class MetadataVector:
    tweet_id: str
    values: np.ndarray  # shape (27,), float64, finite

    def __post_init__(self):
        if self.values.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite feature value for tweet {self.tweet_id}")


@dataclass(frozen=True)
class FeatureStats:
    n: int
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray


def extract_features(reply: Tweet, source: Tweet) -> MetadataVector:
    """Compute the 27-feature vector for one reply within its thread.

    The reply may be the source tweet itself (the source is its own
    zero-delay context item).
    """
    if reply.author is None or source.author is None:
        bad = reply.tweet_id if reply.author is None else source.tweet_id
        raise CorpusError(f"tweet {bad}: missing user profile")
    u = reply.author
    # account age in whole days at posting time, floored at 1
    age_s = (reply.timestamp - u.account_created_at).total_seconds()
    account_age = max(1.0, float(math.floor(age_s / 86400.0)))
    reply_tokens = preprocess_text(reply.text).tokens
    response_minutes = (reply.timestamp - source.timestamp).total_seconds() / 60.0

    values = np.array(
        [
            float(u.posts_count),
            float(u.listed_count),
            float(u.followers),
            float(u.followings),
            u.followers / (u.followings + 1.0),
            u.followers / (u.followings + u.followers + 1.0),
            float(u.favourites_count),
            account_age,
            float(u.verified),
            u.posts_count / (account_age + 1.0),
            u.followings / (account_age + 1.0),
            u.favourites_count / (account_age + 1.0),
            float(u.geo_enabled),
            float(len(u.description_text.split())),
            float(len(u.display_name)),
            float(u.user_id == source.author.user_id),
            float(reply.retweet_count),
            float(reply.favorite_count),
            float("?" in reply.text),
            float(reply_tokens == preprocess_text(source.text).tokens),
            float(u.has_profile_background_image),
            float(len(reply.urls) > 0),
            float(len(reply.urls)),
            float(reply.has_native_media),
            float(len(reply_tokens)),
            response_minutes,
            float(u.has_description),
        ],
        dtype=np.float64,
    )
    return MetadataVector(tweet_id=reply.tweet_id, values=values)


def compute_stats(vectors: list[MetadataVector]) -> FeatureStats:
    """Population mean/std plus min/max per feature over training vectors."""
    if not vectors:
        raise CorpusError("cannot compute feature statistics from an empty list")
    m = np.stack([v.values for v in vectors])
    lo = m.min(axis=0)
    hi = m.max(axis=0)
    std = m.std(axis=0)  # population std: divide by n
    # np.std of a constant column can round to ~1e-16 instead of 0; a column
    # is constant iff min == max, so pin those to an exact zero.
    std[lo == hi] = 0.0
    return FeatureStats(
        n=len(vectors),
        mean=m.mean(axis=0),
        std=std,
        min=lo,
        max=hi,
    )


def normalize(v: MetadataVector, stats: FeatureStats) -> MetadataVector:
    """Center and scale by global stats; constant features map to 0."""
    safe = np.where(stats.std > 0, stats.std, 1.0)
    out = np.where(stats.std > 0, (v.values - stats.mean) / safe, 0.0)
    return MetadataVector(tweet_id=v.tweet_id, values=out)


def stats_to_obj(stats: FeatureStats) -> dict:
    return {
        "n": stats.n,
        "features": [
            {
                "name": name,
                "mean": float(stats.mean[i]),
                "std": float(stats.std[i]),
                "min": float(stats.min[i]),
                "max": float(stats.max[i]),
            }
            for i, name in enumerate(FEATURE_NAMES)
        ],
    }


def obj_to_stats(obj: dict, where: str = "stats") -> FeatureStats:
    feats = obj.get("features")
    if not isinstance(feats, list) or len(feats) != N_FEATURES:
        raise CorpusError(f"{where}: expected {N_FEATURES} feature entries")
    names = [f.get("name") for f in feats]
    if tuple(names) != FEATURE_NAMES:
        raise CorpusError(f"{where}: feature names or order mismatch")
    cols = {k: np.array([float(f[k]) for f in feats]) for k in ("mean", "std", "min", "max")}
    return FeatureStats(n=int(obj["n"]), mean=cols["mean"], std=cols["std"],
                        min=cols["min"], max=cols["max"])


def save_stats(path, stats: FeatureStats) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats_to_obj(stats), fh, indent=2)
        fh.write("\n")


def load_stats(path) -> FeatureStats:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: malformed stats JSON: {exc.msg}") from exc
    return obj_to_stats(obj, where=str(path))
