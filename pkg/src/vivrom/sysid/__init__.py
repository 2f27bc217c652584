"""Identification of the in-line and cross-flow force models."""
from .identify import (ForcingComparison, InlineForcing, PemProblem, compare_forcings,
                       estimate_initial_state, identify_crossflow, identify_inline, initial_guess,
                       inline_input, pem_identify, scale_gain, select_inline_order)
from .trf import FitReport, NlsProblem, trf_minimize

__all__ = ["FitReport", "ForcingComparison", "InlineForcing", "NlsProblem", "PemProblem",
           "compare_forcings", "estimate_initial_state", "identify_crossflow", "identify_inline",
           "initial_guess", "inline_input", "pem_identify", "scale_gain", "select_inline_order",
           "trf_minimize"]
