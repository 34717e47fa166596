"""Joint byte-pair encoding and vocabularies."""

from . import bpe, vocab

__all__ = ["bpe", "vocab"]
