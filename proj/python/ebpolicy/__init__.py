"""Empirical Bayes shrinkage and local spending rules for noisily estimated policies."""

from ._core import *  # noqa: F401,F403
from ._core import InputError, NumericError, inf

__all__ = [name for name in dir() if not name.startswith("_")]
