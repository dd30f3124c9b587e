"""Robust calibration-weighted mean estimation under nonresponse."""

from ._core import TrirobustError, aps_lambda, default_roster, estimate, generate, simulate

__all__ = ["TrirobustError", "aps_lambda", "default_roster", "estimate", "generate", "simulate"]
