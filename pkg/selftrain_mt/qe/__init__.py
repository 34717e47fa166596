"""Confidence-based quality estimation of synthetic translations."""

from . import qe_confidence

__all__ = ["qe_confidence"]
