"""
scikit-learn style wrappers over the identification routines.

Signals go in as 1-D arrays (or ``(n, 1)`` columns) sampled at ``dt``, or as
:class:`~vivrom.signals.TimeSeries`. ``score`` returns the best-fit
percentage rather than R².
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import ssmodel as ss
from .exceptions import DimensionError, ParameterError
from .signals import TimeSeries, best_fit
from .sysid.identify import (InlineForcing, estimate_initial_state, identify_crossflow,
                             identify_inline, inline_input)
from .wake import ForcingKind, VdpParams, forcing_signal, integrate_wake


def check_signal(X, dt=None, name="X") -> TimeSeries:
    """Coerce ``X`` to a TimeSeries; arrays need ``dt`` and a single column."""
    if isinstance(X, TimeSeries):
        if dt is not None and abs(X.dt - dt) > 1e-9 * dt:
            raise DimensionError(f"{name} sampled at {X.dt}, estimator expects {dt}")
        return X
    if dt is None:
        raise ParameterError(f"{name}: plain arrays need the estimator's dt")
    arr = check_array(X, ensure_2d=False, dtype=float, ensure_min_samples=5, input_name=name)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise DimensionError(f"{name} must be a single channel, got {arr.shape[1]} columns")
        arr = arr[:, 0]
    return TimeSeries(0.0, float(dt), arr)


def _as_params(p) -> VdpParams:
    if p is None or isinstance(p, VdpParams):
        return p
    if isinstance(p, dict):
        return VdpParams(**p)
    return VdpParams.from_array(p)


class InlineInputTransformer(TransformerMixin, BaseEstimator):
    """Map a lift record to the in-line model input (``L_c**2`` or ``L_c dL_c/dt``)."""

    def __init__(self, forcing="lc2", dt=None):
        self.forcing = forcing
        self.dt = dt

    def fit(self, X, y=None):
        InlineForcing.parse(self.forcing)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return inline_input(check_signal(X, self.dt), self.forcing).values


class StateSpaceDragModel(RegressorMixin, BaseEstimator):
    """
    Linear drag model driven by a function of the lift coefficient.

    ``fit(lc, dc_fluct)`` runs the Markov/Hankel/ERA/PEM chain; ``predict(lc)``
    simulates the drag fluctuation from rest.
    """

    def __init__(self, forcing="lc2", rel_threshold=1e-6, order=None, dt=None, holdout=0.0):
        self.forcing = forcing
        self.rel_threshold = rel_threshold
        self.order = order
        self.dt = dt
        self.holdout = holdout

    def fit(self, X, y):
        lc = check_signal(X, self.dt)
        dc = check_signal(y, lc.dt, name="y")
        self.model_, self.report_ = identify_inline(lc, dc, self.forcing, self.rel_threshold,
                                                    order=self.order, holdout=self.holdout)
        self.dt_ = lc.dt
        self.order_ = self.model_.order
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        lc = check_signal(X, self.dt_)
        return ss.simulate(self.model_, inline_input(lc, self.forcing)).values

    def score(self, X, y, sample_weight=None):
        pred = self.predict(X)
        ref = check_signal(y, self.dt_, name="y")
        return best_fit(ref, ref.with_values(pred))


class VanDerPolLiftModel(RegressorMixin, BaseEstimator):
    """
    Forced van der Pol lift model.

    ``X`` is the cross-flow displacement and ``y`` the lift coefficient.
    ``p0`` is required (dict, sequence or VdpParams); the fit refines it
    inside ``bounds``.
    """

    def __init__(self, kind="acceleration", p0=None, bounds=None, dt=None, fit_rate=True,
                 holdout=0.0):
        self.kind = kind
        self.p0 = p0
        self.bounds = bounds
        self.dt = dt
        self.fit_rate = fit_rate
        self.holdout = holdout

    def fit(self, X, y):
        motion = check_signal(X, self.dt)
        lc = check_signal(y, motion.dt, name="y")
        p0 = _as_params(self.p0)
        if p0 is None:
            raise ParameterError("VanDerPolLiftModel needs a start point p0")
        self.params_, self.report_ = identify_crossflow(motion, lc, self.kind, p0, self.bounds,
                                                        holdout=self.holdout,
                                                        fit_rate=self.fit_rate)
        rate = self.report_.diagnostics.get("initial_rate")
        x0, r0 = estimate_initial_state(lc)
        self.initial_state_ = (x0, r0 if rate is None else rate)
        self.dt_ = motion.dt
        self.n_features_in_ = 1
        return self

    def predict(self, X, initial_state=None):
        check_is_fitted(self, "params_")
        motion = check_signal(X, self.dt_)
        ic = self.initial_state_ if initial_state is None else initial_state
        u = forcing_signal(motion, ForcingKind.parse(self.kind))
        return integrate_wake(self.params_, u, self.kind, ic, forcing_is_input=True).values

    def score(self, X, y, sample_weight=None):
        ref = check_signal(y, self.dt_, name="y")
        return best_fit(ref, ref.with_values(self.predict(X)))

    @property
    def coef_(self) -> np.ndarray:
        check_is_fitted(self, "params_")
        return self.params_.as_array()
