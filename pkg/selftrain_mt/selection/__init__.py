"""Domain-aware monolingual data selection."""

from . import fda_selection

__all__ = ["fda_selection"]
