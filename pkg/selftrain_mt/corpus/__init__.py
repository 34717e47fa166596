"""One-sentence-per-line corpus files."""

from . import corpus_io

__all__ = ["corpus_io"]
