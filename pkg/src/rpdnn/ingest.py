"""Thread corpus ingestion: JSONL parsing, text normalization, candidate filtering.

A corpus is a UTF-8 JSONL file, one conversation thread per line:

    {"source": TweetObj, "replies": [TweetObj, ...], "label": 0|1, "event": "<name>"}

where TweetObj carries the tweet fields plus a nested "user" profile object
(see ``tweet_to_obj`` for the exact key set).  Replies are re-sorted
chronologically on load; retweets are never part of the wire format.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .errors import CorpusError

log = logging.getLogger(__name__)

_URL_RE = re.compile(r"https?://\S*")
_MENTION_RE = re.compile(r"@\w+")


@dataclass(frozen=True)
class UserProfile:
    """Author profile attached to every tweet."""

    user_id: str
    posts_count: int
    listed_count: int
    followers: int
    followings: int
    favourites_count: int
    account_created_at: datetime
    verified: bool
    geo_enabled: bool
    has_profile_background_image: bool
    description_text: str
    display_name: str

    @property
    def has_description(self) -> bool:
        return len(self.description_text.strip()) > 0


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    text: str
    timestamp: datetime
    author: UserProfile
    retweet_count: int
    favorite_count: int
    urls: tuple[str, ...]
    has_native_media: bool
    in_reply_to: str | None = None


@dataclass(frozen=True)
class Thread:
    """One source tweet plus its chronologically ordered replies."""

    source: Tweet
    replies: tuple[Tweet, ...]
    label: int
    event: str

    @property
    def thread_id(self) -> str:
        return self.source.tweet_id


@dataclass(frozen=True)
class TokenizedText:
    tokens: tuple[str, ...]
    original_length: int


def preprocess_text(raw: str) -> TokenizedText:
    """Normalize raw tweet text into clean tokens.

    Lowercases, removes URLs (http/https scheme through the next whitespace)
    and @-mentions, strips diacritics (NFKD, dropping nonspacing marks),
    splits on whitespace, and trims non-alphanumeric punctuation from token
    edges.  Tokens that end up empty are discarded.  Idempotent on its own
    output.
    """
    text = raw.lower()
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = unicodedata.normalize("NFKD", text)
    text = "".join(ch for ch in text if unicodedata.category(ch) != "Mn")
    tokens = []
    for piece in text.split():
        start, end = 0, len(piece)
        while start < end and not piece[start].isalnum():
            start += 1
        while end > start and not piece[end - 1].isalnum():
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return TokenizedText(tokens=tuple(tokens), original_length=len(raw))


def _parse_timestamp(value: str, where: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, AttributeError, TypeError) as exc:
        raise CorpusError(f"{where}: unparseable timestamp {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise CorpusError(f"{where}: missing field {key}")
    return obj[key]


def obj_to_user(obj: dict, where: str) -> UserProfile:
    return UserProfile(
        user_id=str(_require(obj, "id", where)),
        posts_count=int(_require(obj, "posts_count", where)),
        listed_count=int(_require(obj, "listed_count", where)),
        followers=int(_require(obj, "followers", where)),
        followings=int(_require(obj, "followings", where)),
        favourites_count=int(_require(obj, "favourites_count", where)),
        account_created_at=_parse_timestamp(_require(obj, "created_at", where), where),
        verified=bool(_require(obj, "verified", where)),
        geo_enabled=bool(_require(obj, "geo_enabled", where)),
        has_profile_background_image=bool(
            _require(obj, "has_profile_background_image", where)
        ),
        description_text=str(obj.get("description", "")),
        display_name=str(obj.get("name", "")),
    )


def obj_to_tweet(obj: dict, where: str) -> Tweet:
    tweet_id = str(_require(obj, "id", where))
    where = f"{where} (tweet_id {tweet_id})"
    tweet = Tweet(
        tweet_id=tweet_id,
        text=str(_require(obj, "text", where)),
        timestamp=_parse_timestamp(_require(obj, "created_at", where), where),
        author=obj_to_user(_require(obj, "user", where), where),
        retweet_count=int(_require(obj, "retweet_count", where)),
        favorite_count=int(_require(obj, "favorite_count", where)),
        urls=tuple(str(u) for u in obj.get("urls", [])),
        has_native_media=bool(obj.get("has_native_media", False)),
        in_reply_to=obj.get("in_reply_to"),
    )
    if tweet.author.account_created_at > tweet.timestamp:
        log.warning(
            "tweet %s: account created after the tweet itself was posted", tweet_id
        )
    return tweet


def user_to_obj(u: UserProfile) -> dict:
    return {
        "id": u.user_id,
        "posts_count": u.posts_count,
        "listed_count": u.listed_count,
        "followers": u.followers,
        "followings": u.followings,
        "favourites_count": u.favourites_count,
        "created_at": u.account_created_at.isoformat(),
        "verified": u.verified,
        "geo_enabled": u.geo_enabled,
        "has_profile_background_image": u.has_profile_background_image,
        "description": u.description_text,
        "name": u.display_name,
    }


def tweet_to_obj(t: Tweet) -> dict:
    obj = {
        "id": t.tweet_id,
        "text": t.text,
        "created_at": t.timestamp.isoformat(),
        "retweet_count": t.retweet_count,
        "favorite_count": t.favorite_count,
        "urls": list(t.urls),
        "has_native_media": t.has_native_media,
        "user": user_to_obj(t.author),
    }
    if t.in_reply_to is not None:
        obj["in_reply_to"] = t.in_reply_to
    return obj


def thread_to_obj(thread: Thread) -> dict:
    return {
        "source": tweet_to_obj(thread.source),
        "replies": [tweet_to_obj(r) for r in thread.replies],
        "label": thread.label,
        "event": thread.event,
    }


def obj_to_thread(obj: dict, where: str) -> Thread:
    source = obj_to_tweet(_require(obj, "source", where), where)
    replies = [obj_to_tweet(r, where) for r in _require(obj, "replies", where)]
    label = _require(obj, "label", where)
    if label not in (0, 1):
        raise CorpusError(f"{where}: label must be 0 or 1, got {label!r}")
    seen: set[str] = {source.tweet_id}
    for r in replies:
        if r.tweet_id in seen:
            raise CorpusError(f"{where}: duplicate tweet_id {r.tweet_id}")
        seen.add(r.tweet_id)
    # stable chronological order; equal timestamps break ties by id
    replies.sort(key=lambda r: (r.timestamp, r.tweet_id))
    for r in replies:
        if r.timestamp < source.timestamp:
            log.warning(
                "thread %s: reply %s predates the source tweet",
                source.tweet_id,
                r.tweet_id,
            )
    return Thread(
        source=source,
        replies=tuple(replies),
        label=int(label),
        event=str(_require(obj, "event", where)),
    )


def parse_corpus(path) -> list[Thread]:
    """Load a thread corpus from a JSONL file.

    Raises CorpusError naming the offending line for malformed JSON, and
    naming field and tweet_id for incomplete records.
    """
    threads: list[Thread] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON line: {exc.msg}") from exc
            threads.append(obj_to_thread(obj, where))
    return threads


def write_corpus(path, threads: list[Thread]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in threads:
            fh.write(json.dumps(thread_to_obj(t), ensure_ascii=False) + "\n")


def filter_candidates(
    threads: list[Thread],
    min_tokens: int = 4,
    min_context: int = 5,
    max_age_days: int = 7,
) -> list[Thread]:
    """Apply the informativeness and popularity constraints.

    Replies past the temporal window (source timestamp + ``max_age_days``)
    are cut first; a thread survives when its preprocessed source text has
    at least ``min_tokens`` tokens and at least ``min_context`` replies
    remain.  Input order is preserved.
    """
    kept: list[Thread] = []
    for t in threads:
        horizon = t.source.timestamp + timedelta(days=max_age_days)
        replies = tuple(r for r in t.replies if r.timestamp <= horizon)
        if len(replies) < min_context:
            continue
        if len(preprocess_text(t.source.text).tokens) < min_tokens:
            continue
        kept.append(Thread(source=t.source, replies=replies, label=t.label, event=t.event))
    return kept
