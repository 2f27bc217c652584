"""Reduced-order vortex-induced vibration models and their coupling to a slender beam."""
from . import beam, coupling, signals, ssmodel, sysid, wake
from .exceptions import (VivromError, DimensionError, ParameterError, NumericError,
                         DegenerateReferenceError, DivergenceError, IllConditionedError,
                         OrderTooLargeError, ModeError, OptimizationFailure, CouplingError,
                         ConfigError, MappingError, StagnationError)
from .signals import Spectrum, TimeSeries, best_fit, welch_psd
from .ssmodel import StateSpaceModel
from .wake import ForcingKind, VdpParams

__version__ = "0.1.0"

__all__ = ["beam", "coupling", "signals", "ssmodel", "sysid", "wake", "Spectrum", "TimeSeries",
           "StateSpaceModel", "ForcingKind", "VdpParams", "best_fit", "welch_psd", "VivromError",
           "DimensionError", "ParameterError", "NumericError", "DegenerateReferenceError",
           "DivergenceError", "IllConditionedError", "OrderTooLargeError", "ModeError",
           "OptimizationFailure", "CouplingError", "ConfigError", "MappingError", "StagnationError"]
