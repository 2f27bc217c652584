"""Synthetic datasets generated by a known reduced-order model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ssmodel as ss
from .signals import TimeSeries, derivative
from .sysid.identify import InlineForcing, inline_input
from .wake import ForcingKind, VdpParams, integrate_wake

CHANNELS = ("d_CF", "L_c", "D_c_fluct")


def reference_drag_model(omega: float = 2 * np.pi * 20.0, zeta: float = 0.5,
                         gain: float = 0.1) -> ss.StateSpaceModel:
    """
    Second-order band-pass ``gain * 2 zeta omega s / (s^2 + 2 zeta omega s + omega^2)``.

    Zero static gain, so the mean of ``L_c**2`` does not leak into the
    fluctuating drag; peak gain ``gain`` at ``omega``.
    """
    A = [[0.0, 1.0], [-omega**2, -2 * zeta * omega]]
    return ss.StateSpaceModel(A, [0.0, 1.0], [0.0, gain * 2 * zeta * omega], 0.0, True)


@dataclass(frozen=True)
class MotionSpec:
    """
    Imposed cross-flow motion.

    ``kind`` is ``"multisine"`` (``tones`` sines at ``center * U(1-spread,
    1+spread)`` rad/s with random phases, scaled to an acceleration RMS of
    ``acc_rms``), ``"sine"`` (one tone of displacement ``amplitude`` at
    ``center``) or ``"none"``.
    """

    kind: str = "multisine"
    tones: int = 3
    center: float | None = None
    spread: float = 0.4
    acc_rms: float = 20.0
    amplitude: float = 0.01

    def sample(self, t: np.ndarray, rng: np.random.Generator, center_default: float) -> np.ndarray:
        w0 = self.center if self.center is not None else center_default
        if self.kind == "none":
            return np.zeros_like(t)
        if self.kind == "sine":
            return self.amplitude * np.sin(w0 * t)
        w = w0 * rng.uniform(1 - self.spread, 1 + self.spread, self.tones)
        ph = rng.uniform(0, 2 * np.pi, self.tones)
        a = rng.uniform(0.5, 1.0, self.tones)
        # sum of a_i sin(w_i t + ph_i) / w_i^2: acceleration amplitudes a_i
        d = np.sum(a[:, None] * np.sin(w[:, None] * t[None, :] + ph[:, None]) / w[:, None] ** 2, axis=0)
        acc = derivative(TimeSeries(0.0, t[1] - t[0], d), 2).values
        return d * (self.acc_rms / np.sqrt(np.mean(acc**2)))


def make_dataset(vdp: VdpParams, kind=ForcingKind.ACCELERATION, drag=None,
                 inline=InlineForcing.LC_SQUARED, motion: MotionSpec = MotionSpec(), dt: float = 1e-3,
                 T: float = 2.0, spinup: float = 2.0, noise: float = 0.0, seed: int = 0,
                 ic=(0.01, 0.0)) -> dict:
    """
    Aligned ``d_CF``, ``L_c`` and ``D_c_fluct`` channels.

    The oscillator runs for ``spinup + T`` seconds and the spin-up part is
    dropped; the drag model starts from rest at the beginning of the kept
    window. ``noise`` adds white Gaussian noise of standard deviation
    ``noise * RMS`` to the two force channels (the motion is imposed, hence
    known exactly).
    """
    rng = np.random.default_rng(seed)
    n_spin = int(round(spinup / dt))
    n = int(round(T / dt)) + 1
    t = np.arange(n_spin + n) * dt
    d = motion.sample(t, rng, np.sqrt(vdp.omega0_sq))
    full = TimeSeries(0.0, dt, d)
    lc = integrate_wake(vdp, full, kind, ic).window(n_spin)
    drag = reference_drag_model() if drag is None else drag
    dc = ss.simulate(drag, inline_input(lc, inline))
    zero = lambda s: TimeSeries(0.0, dt, s.values)  # noqa: E731
    out = {"d_CF": zero(full.window(n_spin)), "L_c": zero(lc), "D_c_fluct": zero(dc)}
    if noise > 0:
        for name in ("L_c", "D_c_fluct"):
            v = out[name].values
            rms = np.sqrt(np.mean(v**2))
            out[name] = out[name].with_values(v + noise * rms * rng.standard_normal(v.size))
    return out
