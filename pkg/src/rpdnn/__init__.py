"""Context-aware tweet-level early rumor detection.

Pipeline: ingest conversation threads from JSONL, compute 27 metadata
features per reply with global normalization, embed tweet content behind
a pluggable provider, and classify each source tweet with a dual
stacked-LSTM attention network trained by AdaGrad.  Includes
leave-one-event-out and stratified k-fold harnesses, an eight-variant
ablation matrix, and a finite-difference gradient suite.
"""

__version__ = "0.1.0"

from .errors import ConfigError, CorpusError, NumericalError

__all__ = ["ConfigError", "CorpusError", "NumericalError", "__version__"]
