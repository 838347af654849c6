"""Exception types shared across the package.

The CLI maps these onto exit codes: config/usage errors exit 1,
corpus/data errors exit 2, numerical failures exit 3.
"""


class ConfigError(ValueError):
    """Bad run configuration: missing seed, unknown variant, invalid dims."""


class CorpusError(ValueError):
    """Malformed or inconsistent input data (JSONL, stats files, embeddings)."""


class NumericalError(RuntimeError):
    """NaN/Inf detected in a forward pass, or a gradient check failed."""
