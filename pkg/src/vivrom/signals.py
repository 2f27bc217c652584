"""
Uniformly sampled time series, differentiation, spectra and the best-fit metric.

Every channel handled by the package (cross-flow displacement, lift and drag
coefficients, nodal responses) travels as a :class:`TimeSeries`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import welch

from .exceptions import DegenerateReferenceError, DimensionError, ParameterError

DT_RTOL = 1e-6


@dataclass(frozen=True)
class TimeSeries:
    """
    Uniformly sampled scalar signal.

    Parameters
    ----------
    t0 : float
        Time of the first sample [s].
    dt : float
        Sampling interval [s], strictly positive.
    values : array_like
        Samples. Converted to a read-only float array.
    """

    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.values.size - 1)

    def with_values(self, values) -> "TimeSeries":
        """Same time grid, new samples."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != len(self):
            raise DimensionError("replacement values must keep the series length")
        return TimeSeries(self.t0, self.dt, values)

    def window(self, start: int = 0, stop: int | None = None) -> "TimeSeries":
        """Sub-series of samples ``start:stop``."""
        first = slice(start, stop).indices(len(self))[0]
        return TimeSeries(self.t0 + first * self.dt, self.dt, self.values[start:stop])

    def __add__(self, other):
        if isinstance(other, TimeSeries):
            check_aligned(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, TimeSeries):
            check_aligned(self, other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, other):
        if isinstance(other, TimeSeries):
            check_aligned(self, other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


@dataclass(frozen=True)
class Spectrum:
    """One-sided spectral density. ``kind`` is ``"psd"`` (unit^2/Hz) or ``"asd"`` (unit/sqrt(Hz))."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    kind: str = "psd"

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float).ravel()
        a = np.asarray(self.amplitudes, dtype=float).ravel()
        if f.size != a.size:
            raise DimensionError("frequencies and amplitudes differ in length")
        if f.size and (f[0] < 0 or np.any(np.diff(f) <= 0)):
            raise ParameterError("frequencies must be non-negative and strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "amplitudes", a)

    def __len__(self):
        return self.frequencies.size

    def to_asd(self) -> "Spectrum":
        if self.kind == "asd":
            return self
        return Spectrum(self.frequencies, np.sqrt(self.amplitudes), kind="asd")


def as_series(x, dt: float | None = None, t0: float = 0.0) -> TimeSeries:
    """Coerce an array (with ``dt``) or a TimeSeries into a TimeSeries."""
    if isinstance(x, TimeSeries):
        return x
    if dt is None:
        raise ParameterError("dt is required when passing a plain array")
    return TimeSeries(t0, dt, np.asarray(x, dtype=float).ravel())


def check_aligned(*series: TimeSeries, min_length: int = 2) -> None:
    """Raise DimensionError unless all series share length and dt."""
    first = series[0]
    for s in series:
        if len(s) < min_length:
            raise DimensionError(f"series needs at least {min_length} samples, got {len(s)}")
        if len(s) != len(first):
            raise DimensionError(f"length mismatch: {len(s)} != {len(first)}")
        if abs(s.dt - first.dt) > DT_RTOL * first.dt:
            raise DimensionError(f"dt mismatch: {s.dt} != {first.dt}")


def best_fit(z: TimeSeries, zhat: TimeSeries) -> float:
    """
    Normalized fit of a prediction, in percent.

    ``100 * (1 - ||z - zhat|| / ||z - mean(z)||)`` with discrete L2 norms.
    100 is a perfect prediction, 0 is no better than the mean of ``z``;
    negative values are possible.
    """
    z, zhat = as_series(z, 1.0), as_series(zhat, 1.0)
    check_aligned(z, zhat)
    ref = np.linalg.norm(z.values - z.values.mean())
    if ref == 0.0:
        raise DegenerateReferenceError("reference signal is constant")
    return float((1.0 - np.linalg.norm(z.values - zhat.values) / ref) * 100.0)


def derivative(s: TimeSeries, order: int = 1) -> TimeSeries:
    """
    First or second time derivative by finite differences.

    Second-order central stencils inside, second-order one-sided stencils at
    both ends, so the result has the same length as ``s``.
    """
    if order not in (1, 2):
        raise ParameterError(f"order must be 1 or 2, got {order}")
    if len(s) < 5:
        raise DimensionError("derivative needs at least 5 samples")
    x, h = s.values, s.dt
    if order == 1:
        return s.with_values(np.gradient(x, h, edge_order=2))
    out = np.empty_like(x)
    out[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / h**2
    out[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / h**2
    out[-1] = (2.0 * x[-1] - 5.0 * x[-2] + 4.0 * x[-3] - x[-4]) / h**2
    return s.with_values(out)


def welch_psd(s: TimeSeries, segment_len: int | None = None, overlap: float = 0.5) -> Spectrum:
    """
    Averaged-periodogram PSD (Hann window, per-segment mean removal).

    Parameters
    ----------
    s : TimeSeries
    segment_len : int, optional
        Samples per segment. Defaults to the largest power of two not
        exceeding a quarter of the record (at least 8 samples).
    overlap : float
        Fractional overlap of consecutive segments, ``0 <= overlap < 1``.
    """
    n = len(s)
    if n < 2:
        raise DimensionError("series too short for a spectrum")
    if segment_len is None:
        segment_len = max(8, 2 ** int(np.floor(np.log2(max(n // 4, 1)))))
        segment_len = min(segment_len, n)
    if segment_len > n:
        raise DimensionError(f"segment_len {segment_len} exceeds series length {n}")
    if segment_len < 2:
        raise ParameterError("segment_len must be at least 2")
    if not 0.0 <= overlap < 1.0:
        raise ParameterError(f"overlap must be in [0, 1), got {overlap}")
    noverlap = int(round(overlap * segment_len))
    noverlap = min(noverlap, segment_len - 1)
    f, p = welch(s.values, fs=1.0 / s.dt, window="hann", nperseg=segment_len,
                 noverlap=noverlap, detrend="constant", scaling="density")
    return Spectrum(f, p, kind="psd")


def dominant_frequency(sp: Spectrum) -> float:
    """Frequency of the largest bin; ties resolve to the lower frequency."""
    if len(sp) == 0:
        raise DimensionError("empty spectrum")
    return float(sp.frequencies[int(np.argmax(sp.amplitudes))])


def resample(s: TimeSeries, dt_new: float) -> TimeSeries:
    """Linear interpolation onto a grid of spacing ``dt_new`` over the same window."""
    if not np.isfinite(dt_new) or dt_new <= 0:
        raise ParameterError(f"dt_new must be positive, got {dt_new}")
    if abs(dt_new - s.dt) <= 1e-12 * s.dt:
        return s
    span = s.t_end - s.t0
    count = int(np.floor(span / dt_new * (1.0 + 1e-12) + 1e-9)) + 1
    t_new = s.t0 + dt_new * np.arange(count)
    return TimeSeries(s.t0, dt_new, np.interp(t_new, s.times, s.values))


def read_csv(path) -> dict[str, TimeSeries]:
    """
    Load a ``time,<channel>,...`` CSV into a dict of aligned series.

    Raises DimensionError on an empty file or non-uniform sampling.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DimensionError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "time" or len(header) < 2:
        raise DimensionError(f"{path}: header must start with 'time' and name at least one channel")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    if data.shape[0] < 2:
        raise DimensionError(f"{path}: need at least two samples")
    if data.shape[1] != len(header):
        raise DimensionError(f"{path}: ragged rows")
    t = data[:, 0]
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if dt <= 0 or np.max(np.abs(steps - dt)) > DT_RTOL * dt:
        raise DimensionError(f"{path}: sampling is not uniform")
    return {name: TimeSeries(t[0], dt, data[:, k]) for k, name in enumerate(header) if k > 0}


def write_csv(path, channels: dict[str, TimeSeries], fmt: str = "%.10g") -> None:
    """Write aligned series as ``time,<channel>,...``."""
    names = list(channels)
    if not names:
        raise DimensionError("no channels to write")
    series = [channels[n] for n in names]
    check_aligned(*series, min_length=1)
    cols = np.column_stack([series[0].times] + [s.values for s in series])
    np.savetxt(path, cols, delimiter=",", header=",".join(["time"] + names),
               comments="", fmt=fmt)
