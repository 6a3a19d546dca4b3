"""Frozen-encoder embedding extraction for the distributional-label pipeline."""

__version__ = "0.1.0"

from .extract import ExtractionConfig, ExtractorError, extract

__all__ = ["ExtractionConfig", "ExtractorError", "extract", "__version__"]
