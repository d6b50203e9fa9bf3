"""Sentence-level grapheme-to-phoneme conversion with homograph support."""

__version__ = "0.1.0"

from .ctc import backend_name

__all__ = ["backend_name", "__version__"]
