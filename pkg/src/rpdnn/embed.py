"""Tweet content embeddings behind a lookup-or-generate provider.

Real embeddings are produced offline by whatever sentence encoder the
deployment uses and shipped as a plain text table (header ``dim N``, then
one ``tweet_id v1 ... vN`` row per tweet).  For tests and desk-scale runs
a deterministic hash embedder generates a pseudo-random unit vector per
token and averages across tokens, so the whole pipeline runs with zero
external assets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, CorpusError
from .ingest import Tweet, TokenizedText, preprocess_text


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __contains__(self, tweet_id: str) -> bool:
        return tweet_id in self.entries

    def __getitem__(self, tweet_id: str) -> np.ndarray:
        return self.entries[tweet_id]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class HashEmbedderConfig:
    dim: int
    seed: int

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.dim}")


def load_table(path, expected_dim: int | None = None) -> EmbeddingTable:
    """Read an embedding table, validating the header and every row width."""
    entries: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "dim":
            raise CorpusError(f"{path}:1: expected header 'dim N'")
        try:
            dim = int(header[1])
        except ValueError as exc:
            raise CorpusError(f"{path}:1: bad dimension {header[1]!r}") from exc
        if expected_dim is not None and dim != expected_dim:
            raise CorpusError(
                f"{path}:1: table dim {dim} does not match configured dim {expected_dim}"
            )
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            tweet_id, raw = parts[0], parts[1:]
            if len(raw) != dim:
                raise CorpusError(
                    f"{path}:{lineno}: expected {dim} values, got {len(raw)}"
                )
            if tweet_id in entries:
                raise CorpusError(f"{path}:{lineno}: duplicate tweet_id {tweet_id}")
            try:
                vec = np.array([float(x) for x in raw], dtype=np.float64)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: non-numeric value") from exc
            if not np.all(np.isfinite(vec)):
                raise CorpusError(f"{path}:{lineno}: non-finite value")
            entries[tweet_id] = vec
    return EmbeddingTable(dim=dim, entries=entries)


def save_table(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"dim {table.dim}\n")
        for tweet_id, vec in table.entries.items():
            fh.write(tweet_id + " " + " ".join(repr(float(x)) for x in vec) + "\n")


@lru_cache(maxsize=65536)
def _token_vector(seed: int, dim: int, token: str) -> np.ndarray:
    """Stable pseudo-random unit-variance vector for one token."""
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal(dim)


def hash_embed(tokens: TokenizedText, cfg: HashEmbedderConfig) -> np.ndarray:
    """Average of per-token hash vectors, L2-normalized; zero for no tokens."""
    if not tokens.tokens:
        return np.zeros(cfg.dim)
    acc = np.zeros(cfg.dim)
    for tok in tokens.tokens:
        acc += _token_vector(cfg.seed, cfg.dim, tok)
    acc /= len(tokens.tokens)
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc = acc / norm
    return acc


def lookup_or_embed(
    tweet: Tweet,
    table: EmbeddingTable | None = None,
    cfg: HashEmbedderConfig | None = None,
) -> np.ndarray:
    """Resolve a tweet to its content vector: table hit wins, hash fallback."""
    if table is not None and tweet.tweet_id in table:
        return table[tweet.tweet_id]
    if cfg is not None:
        return hash_embed(preprocess_text(tweet.text), cfg)
    if table is not None:
        raise CorpusError(
            f"tweet {tweet.tweet_id}: not in embedding table and no fallback embedder"
        )
    raise ConfigError("no embedding provider configured")


def make_provider(
    table: EmbeddingTable | None = None, cfg: HashEmbedderConfig | None = None
):
    """Bind providers into a tweet -> vector callable with a per-run cache."""
    if table is None and cfg is None:
        raise ConfigError("no embedding provider configured")
    dim = table.dim if table is not None else cfg.dim
    if table is not None and cfg is not None and table.dim != cfg.dim:
        raise ConfigError(f"table dim {table.dim} != hash embedder dim {cfg.dim}")
    cache: dict[str, np.ndarray] = {}

    def provider(tweet: Tweet) -> np.ndarray:
        if tweet.tweet_id not in cache:
            cache[tweet.tweet_id] = lookup_or_embed(tweet, table, cfg)
        return cache[tweet.tweet_id]

    provider.dim = dim
    return provider
