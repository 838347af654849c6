"""Shared builders for corpus objects and small model configs."""

from datetime import datetime, timedelta, timezone

import pytest

from rpdnn.ingest import Thread, Tweet, UserProfile
from rpdnn.model import ModelConfig

T0 = datetime(2020, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def build_user(uid="u1", **over):
    base = dict(
        user_id=uid,
        posts_count=120,
        listed_count=3,
        followers=100,
        followings=24,
        favourites_count=50,
        account_created_at=T0 - timedelta(days=400),
        verified=False,
        geo_enabled=True,
        has_profile_background_image=True,
        description_text="posts about local news",
        display_name="Sample Person",
    )
    base.update(over)
    return UserProfile(**base)


def build_tweet(tid="t1", user=None, ts=None, **over):
    base = dict(
        tweet_id=tid,
        text="something happened downtown earlier this evening",
        timestamp=ts or T0,
        author=user or build_user(f"u-{tid}"),
        retweet_count=2,
        favorite_count=1,
        urls=(),
        has_native_media=False,
    )
    base.update(over)
    return Tweet(**base)


def build_thread(tid="src", n_replies=6, label=0, event="storm", reply_minutes=None,
                 **source_over):
    source = build_tweet(tid, ts=T0, **source_over)
    gaps = reply_minutes or [5 * (j + 1) for j in range(n_replies)]
    replies = tuple(
        build_tweet(f"{tid}-r{j}", ts=T0 + timedelta(minutes=gaps[j]),
                    text=f"reply number {j} with more words here")
        for j in range(n_replies)
    )
    return Thread(source=source, replies=replies, label=label, event=event)


@pytest.fixture
def user_factory():
    return build_user


@pytest.fixture
def tweet_factory():
    return build_tweet


@pytest.fixture
def thread_factory():
    return build_thread


@pytest.fixture
def tiny_cfg():
    """Small dims so forward/backward tests run in milliseconds."""
    return ModelConfig(embed_dim=6, context_len=5, batch_size=4, epochs=3,
                       lr=0.05, seed=7)
