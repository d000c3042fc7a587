"""Model-runtime adapter emitting attention trace directories."""

from .adapter import (
    ExtractError,
    ExtractionJob,
    HFRunner,
    extract,
    normalize_caption,
)

__version__ = "0.1.0"

__all__ = ["ExtractError", "ExtractionJob", "HFRunner", "extract", "normalize_caption"]
