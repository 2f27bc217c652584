"""
Wake-oscillator models for the fluctuating lift coefficient.

The lift is governed by a forced van der Pol equation

    L'' = mu * (amp - L**2) * L' - omega0_sq * L + gain * u(t)

where ``u`` is the cross-flow displacement, velocity or acceleration of the
cylinder (:class:`ForcingKind`). A Rayleigh oscillator and the quadratic
lift-drag coupling ``D = Dm - K L L'`` are provided as background models.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import DimensionError, DivergenceError, NumericError, ParameterError
from .signals import TimeSeries, derivative

DEFAULT_IC = (0.01, 0.0)


class ForcingKind(enum.Enum):
    """Which motion channel drives the oscillator."""

    DISPLACEMENT = "displacement"
    VELOCITY = "velocity"
    ACCELERATION = "acceleration"

    @classmethod
    def parse(cls, value) -> "ForcingKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError(f"unknown forcing kind {value!r}") from None

    @property
    def derivative_order(self) -> int:
        return {"displacement": 0, "velocity": 1, "acceleration": 2}[self.value]


@dataclass(frozen=True)
class VdpParams:
    """Van der Pol parameters: damping scale, amplitude, squared natural frequency, forcing gain."""

    mu: float
    amp: float
    omega0_sq: float
    gain: float = 0.0

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise NumericError(f"non-finite van der Pol parameters {vals}")
        if self.mu <= 0 or self.amp <= 0 or self.omega0_sq <= 0:
            raise ParameterError("mu, amp and omega0_sq must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.amp, self.omega0_sq, self.gain], dtype=float)

    @classmethod
    def from_array(cls, p) -> "VdpParams":
        p = np.asarray(p, dtype=float)
        return cls(float(p[0]), float(p[1]), float(p[2]), float(p[3]))

    def to_dict(self) -> dict:
        return {"mu": self.mu, "amp": self.amp, "omega0_sq": self.omega0_sq, "gain": self.gain}


@dataclass(frozen=True)
class WakeState:
    """Lift coefficient ``x1`` and its rate ``x2`` [1/s]."""

    x1: float
    x2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2], dtype=float)


@dataclass(frozen=True)
class RayleighParams:
    omega_s_sq: float
    mu_lin: float
    alpha_nl: float

    def __post_init__(self):
        if min(self.omega_s_sq, self.mu_lin, self.alpha_nl) <= 0:
            raise ParameterError("Rayleigh parameters must be positive")


def _finite_or_raise(*values):
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise NumericError("non-finite input")


def vdp_rhs(state, p: VdpParams, u: float) -> np.ndarray:
    """Time derivative of the van der Pol state under forcing ``u``."""
    x1, x2 = _state_pair(state)
    _finite_or_raise(x1, x2, u, *p.as_array())
    return np.array([x2, _kernels.vdp_accel(x1, x2, p.mu, p.amp, p.omega0_sq, p.gain, u)])


def rayleigh_rhs(state, p: RayleighParams) -> np.ndarray:
    """Unforced Rayleigh oscillator ``L'' = -w_s^2 L + mu L' - alpha L'^3``."""
    x1, x2 = _state_pair(state)
    _finite_or_raise(x1, x2)
    return np.array([x2, -p.omega_s_sq * x1 + p.mu_lin * x2 - p.alpha_nl * x2**3])


def _state_pair(state):
    if isinstance(state, WakeState):
        return state.x1, state.x2
    x1, x2 = np.asarray(state, dtype=float)
    return float(x1), float(x2)


def forcing_signal(motion: TimeSeries, kind) -> TimeSeries:
    """Displacement, velocity or acceleration channel derived from a displacement record."""
    kind = ForcingKind.parse(kind)
    if kind is ForcingKind.DISPLACEMENT:
        return motion
    return derivative(motion, kind.derivative_order)


def integrate_wake(p: VdpParams, forcing: TimeSeries | None, kind=ForcingKind.ACCELERATION,
                   ic=DEFAULT_IC, dt: float | None = None, T: float | None = None,
                   return_rate: bool = False, forcing_is_input: bool = False):
    """
    Fixed-step RK4 trajectory of the lift coefficient.

    Parameters
    ----------
    p : VdpParams
    forcing : TimeSeries or None
        Cross-flow displacement record. The channel selected by ``kind`` is
        derived from it by finite differences, unless ``forcing_is_input`` is
        set, in which case the series is used as ``u`` directly. ``None`` runs
        the autonomous oscillator.
    kind : ForcingKind or str
    ic : WakeState or pair
        Initial lift coefficient and rate.
    dt, T : float
        Integration step and duration. Default to the forcing grid and span.
    return_rate : bool
        Also return the rate series.

    Returns
    -------
    TimeSeries of the lift coefficient, starting at the forcing start time
    (``(lift, rate)`` if ``return_rate``).

    Raises
    ------
    DivergenceError
        If the state magnitude exceeds 1e6.
    """
    x1, x2 = _state_pair(ic)
    _finite_or_raise(x1, x2, *p.as_array())
    t0 = 0.0
    if forcing is not None:
        t0 = forcing.t0
        dt = forcing.dt if dt is None else dt
        T = forcing.t_end - forcing.t0 if T is None else T
    if dt is None or T is None:
        raise ParameterError("dt and T are required for an autonomous run")
    if dt <= 0 or T < 0:
        raise ParameterError("dt must be positive and T non-negative")
    nsteps = int(round(T / dt))
    if forcing is None or p.gain == 0.0:
        u_half = np.zeros(2 * nsteps + 1)
    else:
        u = forcing if forcing_is_input else forcing_signal(forcing, kind)
        if t0 + nsteps * dt > u.t_end + 1e-9 * max(dt, 1.0):
            raise DimensionError("forcing record does not cover the integration window")
        t_half = t0 + 0.5 * dt * np.arange(2 * nsteps + 1)
        u_half = np.interp(t_half, u.times, u.values)
    if not np.all(np.isfinite(u_half)):
        raise NumericError("non-finite forcing")
    lift, rate, bad = _kernels.rk4_vdp(p.mu, p.amp, p.omega0_sq, p.gain, u_half,
                                       x1, x2, float(dt), nsteps)
    if bad >= 0:
        raise DivergenceError(f"wake oscillator diverged at t = {t0 + bad * dt:.6g} s",
                              time=t0 + bad * dt)
    lc = TimeSeries(t0, dt, lift)
    if return_rate:
        return lc, TimeSeries(t0, dt, rate)
    return lc


def rk4_step(x1, x2, p: VdpParams, u_start, u_end, dt: float):
    """
    One RK4 step for an array of independent oscillators sharing ``p``.

    The forcing is linear in time between ``u_start`` and ``u_end``.
    """
    mu, amp, w2, g = p.mu, p.amp, p.omega0_sq, p.gain
    um = 0.5 * (u_start + u_end)

    def acc(a, b, u):
        return mu * (amp - a * a) * b - w2 * a + g * u

    k11, k12 = x2, acc(x1, x2, u_start)
    k21, k22 = x2 + 0.5 * dt * k12, acc(x1 + 0.5 * dt * k11, x2 + 0.5 * dt * k12, um)
    k31, k32 = x2 + 0.5 * dt * k22, acc(x1 + 0.5 * dt * k21, x2 + 0.5 * dt * k22, um)
    k41, k42 = x2 + dt * k32, acc(x1 + dt * k31, x2 + dt * k32, u_end)
    return (x1 + dt / 6.0 * (k11 + 2 * k21 + 2 * k31 + k41),
            x2 + dt / 6.0 * (k12 + 2 * k22 + 2 * k32 + k42))


def nayfeh_drag(lc: TimeSeries, dcm: float, K: float) -> TimeSeries:
    """Quadratic lift-drag coupling ``D(t) = dcm - K * L(t) * L'(t)``."""
    rate = derivative(lc, 1)
    return lc.with_values(dcm - K * lc.values * rate.values)


@dataclass(frozen=True)
class LimitCycle:
    amplitude: float
    angular_frequency: float
    drift: float


def limit_cycle_metrics(lc: TimeSeries, tail: float = 0.2) -> LimitCycle:
    """
    Steady amplitude, angular frequency and amplitude drift over the final ``tail`` of a run.

    The frequency comes from linearly interpolated upward zero crossings of
    the mean-removed signal; the drift is the relative change of the peak
    amplitude between the two halves of the window.
    """
    n = len(lc)
    start = int(np.floor((1.0 - tail) * n))
    x = lc.values[start:]
    if x.size < 8:
        raise DimensionError("window too short for limit-cycle metrics")
    amplitude = float(np.max(np.abs(x)))
    half = x.size // 2
    a1, a2 = np.max(np.abs(x[:half])), np.max(np.abs(x[half:]))
    drift = float(abs(a2 - a1) / max(a1, a2)) if max(a1, a2) > 0 else 0.0
    y = x - x.mean()
    idx = np.nonzero((y[:-1] < 0) & (y[1:] >= 0))[0]
    if idx.size < 2:
        return LimitCycle(amplitude, 0.0, drift)
    frac = -y[idx] / (y[idx + 1] - y[idx])
    crossings = (idx + frac) * lc.dt
    period = (crossings[-1] - crossings[0]) / (crossings.size - 1)
    return LimitCycle(amplitude, float(2 * np.pi / period), drift)
