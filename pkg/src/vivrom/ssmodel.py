"""
Single-input single-output linear state-space models.

Simulation, impulse-response (Markov parameter) estimation, Hankel matrices,
SVD order selection and eigensystem realization. Identification works on
discrete-time models at the data sampling interval; :func:`to_continuous`
and :func:`to_discrete` convert under a zero-order hold.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.signal import lfilter

from . import _kernels
from .exceptions import (DimensionError, IllConditionedError, ModeError, NumericError,
                         OrderTooLargeError, ParameterError)
from .signals import TimeSeries, as_series, check_aligned

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class StateSpaceModel:
    """
    ``x' = A x + B u``, ``y = C x + D u`` (or the discrete analogue).

    Parameters
    ----------
    A : (n, n) array
    B : (n,) array
    C : (n,) array
    D : float
    continuous_time : bool
    dt : float or None
        Sampling interval for discrete models; for continuous models the
        interval they were identified at, if any.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    continuous_time: bool = False
    dt: float | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = np.zeros((0, 0))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(-1)
        C = np.asarray(self.C, dtype=float).reshape(-1)
        if B.size != n or C.size != n:
            raise DimensionError(f"B and C must have {n} entries (p = q = 1)")
        D = np.asarray(self.D, dtype=float)
        if D.size != 1:
            raise DimensionError("D must be 1x1")
        if not self.continuous_time and self.dt is not None and self.dt <= 0:
            raise ParameterError("dt must be positive")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))
                and np.isfinite(D.item())):
            raise NumericError("non-finite model matrices")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(D.item()))

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.order else np.zeros(0, dtype=complex)

    def is_stable(self) -> bool:
        if self.order == 0:
            return True
        if self.continuous_time:
            return bool(np.all(self.poles.real < 0))
        return bool(np.all(np.abs(self.poles) < 1))

    def check_stability(self) -> bool:
        """Warn (never raise) if the model is unstable."""
        stable = self.is_stable()
        if not stable:
            warnings.warn("identified state-space model is unstable", RuntimeWarning, stacklevel=2)
        return stable

    def to_dict(self) -> dict:
        return {
            "n": self.order,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D,
            "continuous_time": self.continuous_time,
            "dt_identified": self.dt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateSpaceModel":
        n = int(d["n"])
        A = np.asarray(d["A"], dtype=float).reshape(n, n)
        return cls(A, np.asarray(d["B"], dtype=float).reshape(n), np.asarray(d["C"], dtype=float).reshape(n),
                   float(np.asarray(d["D"]).reshape(-1)[0]), bool(d["continuous_time"]),
                   None if d.get("dt_identified") is None else float(d["dt_identified"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "StateSpaceModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MarkovSequence:
    """Impulse response ``h[0] .. h[K]`` of a discrete model (``h[0]`` is the feed-through)."""

    h: np.ndarray
    residual: float = 0.0
    condition_number: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).ravel())

    def __len__(self):
        return self.h.size


def static_model(gain: float, dt: float | None = None) -> StateSpaceModel:
    return StateSpaceModel(np.zeros((0, 0)), np.zeros(0), np.zeros(0), gain, False, dt)


def to_discrete(m: StateSpaceModel, dt: float) -> StateSpaceModel:
    """Zero-order-hold discretization via the exponential of ``[[A, B], [0, 0]]``."""
    if not m.continuous_time:
        raise ModeError("model is already discrete")
    n = m.order
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = m.A
    aug[:n, n] = m.B
    e = sla.expm(aug * dt)
    return StateSpaceModel(e[:n, :n], e[:n, n], m.C, m.D, False, dt)


def to_continuous(m: StateSpaceModel) -> StateSpaceModel:
    """Inverse ZOH by the principal logarithm; poles on the negative real axis are rejected."""
    if m.continuous_time:
        raise ModeError("model is already continuous")
    if m.dt is None:
        raise ParameterError("discrete model has no sampling interval")
    n = m.order
    if n == 0:
        return StateSpaceModel(m.A, m.B, m.C, m.D, True, m.dt)
    ev = np.linalg.eigvals(m.A)
    if np.any((np.abs(ev.imag) < 1e-12) & (ev.real <= 0)):
        raise ModeError("discrete pole on the non-positive real axis has no real logarithm")
    aug = np.eye(n + 1)
    aug[:n, :n] = m.A
    aug[:n, n] = m.B
    lg = sla.logm(aug)
    if np.max(np.abs(np.imag(lg))) > 1e-8 * max(1.0, np.max(np.abs(lg))):
        raise ModeError("matrix logarithm is not real")
    lg = np.real(lg) / m.dt
    return StateSpaceModel(lg[:n, :n], lg[:n, n], m.C, m.D, True, m.dt)


def simulate(m: StateSpaceModel, u: TimeSeries, x0=None, return_state: bool = False):
    """
    Output of ``m`` driven by ``u``.

    Continuous models are discretized with a zero-order hold at ``u.dt``,
    which is exact for piecewise-constant input. Discrete models must share
    the sampling interval of ``u`` when they carry one.
    """
    u = as_series(u, m.dt)
    n = m.order
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise DimensionError(f"x0 must have {n} entries")
    if m.continuous_time:
        md = to_discrete(m, u.dt)
    else:
        if m.dt is not None and abs(m.dt - u.dt) > 1e-9 * u.dt:
            raise DimensionError(f"model dt {m.dt} differs from input dt {u.dt}")
        md = m
    y, xf = _kernels.dlsim(md.A, md.B, md.C, md.D, np.ascontiguousarray(u.values), x0)
    out = u.with_values(y)
    return (out, xf) if return_state else out


def markov_from_model(m: StateSpaceModel, K: int) -> MarkovSequence:
    """``h[0] = D``, ``h[k] = C A^(k-1) B`` for ``k = 1..K``."""
    if m.continuous_time:
        raise ModeError("discretize the model first")
    h = np.empty(K + 1)
    h[0] = m.D
    v = m.B.copy()
    for k in range(1, K + 1):
        h[k] = m.C @ v if m.order else 0.0
        v = m.A @ v
    return MarkovSequence(h)


def _lagged(x: np.ndarray, lags: int, start: int = 0) -> np.ndarray:
    """Columns ``x[k - j]`` for ``j = start .. lags`` with zero pre-history."""
    N = x.size
    cols = np.zeros((N, lags - start + 1))
    for c, j in enumerate(range(start, lags + 1)):
        cols[j:, c] = x[:N - j] if j else x
    return cols


def markov_from_data(u: TimeSeries, y: TimeSeries, K: int, arx_order: int | None = None,
                     instrument_lags: int = 20) -> MarkovSequence:
    """
    Estimate ``h[0..K]`` from an input/output record starting at rest.

    By default the truncated convolution ``y[k] = sum_j h[j] u[k-j]`` is
    solved by ordinary least squares.

    With ``arx_order = p`` an ARX model of order ``p`` is fitted instead and
    its impulse response returned. The ARX regression uses lagged inputs
    ``u[k] .. u[k - 2p - instrument_lags]`` as instruments, which keeps the
    estimate consistent under white output noise and needs far less input
    excitation than the long FIR regression.

    Raises
    ------
    DimensionError
        Record shorter than ``10 * K`` (or ``10 * (2p + 1)`` for ARX).
    IllConditionedError
        Input is not exciting enough for the regression.
    """
    check_aligned(u, y)
    if K < 0:
        raise ParameterError("K must be non-negative")
    N = len(u)
    uu, yy = u.values, y.values
    if not np.any(uu):
        raise IllConditionedError("input is identically zero", np.inf)
    if arx_order is None:
        if N < 10 * max(K, 1):
            raise DimensionError(f"record of {N} samples too short for K = {K} (need {10 * K})")
        Phi = _lagged(uu, K)
        sv = np.linalg.svd(Phi, compute_uv=False)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        if cond > MAX_CONDITION:
            raise IllConditionedError(f"regressor condition number {cond:.3g} too large", cond)
        h, *_ = np.linalg.lstsq(Phi, yy, rcond=None)
        resid = float(np.linalg.norm(yy - Phi @ h))
        return MarkovSequence(h, resid, float(cond), {"method": "fir"})

    p = int(arx_order)
    if p < 1:
        raise ParameterError("arx_order must be at least 1")
    lags = 2 * p + max(int(instrument_lags), 0)
    if N < 10 * (lags + 1):
        raise DimensionError(f"record of {N} samples too short for ARX order {p}")
    Z = _lagged(uu, lags)
    sv_z = np.linalg.svd(Z, compute_uv=False)
    cond = sv_z[0] / sv_z[-1] if sv_z[-1] > 0 else np.inf
    if cond > MAX_CONDITION:
        raise IllConditionedError(f"instrument condition number {cond:.3g} too large", cond)
    Phi = np.hstack([_lagged(uu, p), _lagged(yy, p, start=1)])
    # column scaling keeps the truncated-SVD cutoff meaningful for mixed units
    scale = np.linalg.norm(Phi, axis=0)
    scale[scale == 0] = 1.0
    theta, *_ = np.linalg.lstsq(Z.T @ (Phi / scale), Z.T @ yy, rcond=1e-10)
    theta = theta / scale
    resid = float(np.linalg.norm(yy - Phi @ theta))
    imp = np.zeros(K + 1)
    imp[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        h = lfilter(theta[:p + 1], np.concatenate([[1.0], -theta[p + 1:]]), imp)
    if not np.all(np.isfinite(h)):
        raise NumericError(f"ARX({p}) estimate is violently unstable")
    return MarkovSequence(h, resid, float(cond), {"method": "iv-arx", "arx_order": p})


def default_hankel_size(K: int) -> int:
    return min(K // 2, 40)


def build_hankel(h, rows: int, cols: int, shift: int = 0) -> np.ndarray:
    """``H[i, j] = h[i + j + 1 + shift]``; the feed-through ``h[0]`` is excluded."""
    h = h.h if isinstance(h, MarkovSequence) else np.asarray(h, dtype=float).ravel()
    if rows < 1 or cols < 1:
        raise DimensionError("Hankel matrix needs at least one row and column")
    need = rows + cols - 1 + shift
    if need > h.size - 1:
        raise DimensionError(f"Markov sequence of length {h.size} too short for a "
                             f"{rows}x{cols} Hankel matrix (shift {shift})")
    idx = np.arange(rows)[:, None] + np.arange(cols)[None, :] + 1 + shift
    return h[idx]


def select_order(H: np.ndarray, rel_threshold: float = 1e-6):
    """
    Number of Hankel singular values at or above ``rel_threshold * sigma_1``.

    Returns ``(order, singular_values)``. An all-zero matrix has order 0.
    """
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        raise DimensionError("empty Hankel matrix")
    if not 0 < rel_threshold < 1:
        raise ParameterError("rel_threshold must lie in (0, 1)")
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[0] == 0:
        return 0, sv
    return int(np.count_nonzero(sv >= rel_threshold * sv[0])), sv


def era_realize(H: np.ndarray, H_shift: np.ndarray, n: int, dt: float | None = None,
                feedthrough: float = 0.0, continuous: bool = False) -> StateSpaceModel:
    """
    Balanced realization of order ``n`` from a Hankel matrix and its one-step shift.

    ``A = S^-1/2 U' H1 V S^-1/2``, ``B`` the first column of ``S^1/2 V'``,
    ``C`` the first row of ``U S^1/2``. With ``continuous`` the discrete
    realization is converted by :func:`to_continuous`.
    """
    H, H1 = np.asarray(H, dtype=float), np.asarray(H_shift, dtype=float)
    if H.shape != H1.shape:
        raise DimensionError("H and H_shift must have the same shape")
    if n < 0 or n > min(H.shape):
        raise OrderTooLargeError(f"order {n} exceeds Hankel size {H.shape}")
    if n == 0:
        m = static_model(feedthrough, dt)
    else:
        U, s, Vt = np.linalg.svd(H)
        if s[n - 1] < 1e-12 * s[0] or s[0] == 0:
            raise OrderTooLargeError(f"singular value {n} is numerically zero")
        Un, Vn, sn = U[:, :n], Vt[:n, :].T, s[:n]
        si = 1.0 / np.sqrt(sn)
        A = (si[:, None] * (Un.T @ H1 @ Vn)) * si[None, :]
        root = np.sqrt(sn)
        B = root * Vn[0, :]
        C = Un[0, :] * root
        m = StateSpaceModel(A, B, C, feedthrough, False, dt)
    return to_continuous(m) if continuous else m


def observable_form(m: StateSpaceModel) -> StateSpaceModel:
    """
    Similarity transform to observability canonical form.

    ``C = e1``, ``A`` a companion matrix with the characteristic coefficients
    in its last row, and ``B`` holding the first ``n`` Markov parameters.
    """
    n = m.order
    if n == 0:
        return m
    O = np.empty((n, n))
    row = m.C.copy()
    for i in range(n):
        O[i] = row
        row = row @ m.A
    if np.linalg.cond(O) > 1e14:
        raise IllConditionedError("model is not observable", float(np.linalg.cond(O)))
    Oi = np.linalg.inv(O)
    return StateSpaceModel(O @ m.A @ Oi, O @ m.B, m.C @ Oi, m.D, m.continuous_time, m.dt)


def companion_model(a_last: np.ndarray, b: np.ndarray, d: float, continuous: bool = False,
                    dt: float | None = None) -> StateSpaceModel:
    """Observability-canonical model from its free entries."""
    n = b.size
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = a_last
    C = np.zeros(n)
    if n:
        C[0] = 1.0
    return StateSpaceModel(A, b, C, d, continuous, dt)
