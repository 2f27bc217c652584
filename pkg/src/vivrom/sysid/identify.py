"""
Identification of the reduced-order force model from measured channels.

* in-line: a linear state-space model from ``f(L_c)`` to the fluctuating drag
  ``D'_c``. Markov parameters, Hankel SVD order selection and an ERA
  realization seed an output-error (prediction error) minimization;
* cross-flow: the four van der Pol parameters fitted by trust-region
  reflective least squares on the simulated lift.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import ssmodel as ss
from ..exceptions import (DimensionError, DivergenceError, IllConditionedError, NumericError,
                          ParameterError)
from ..signals import TimeSeries, best_fit, check_aligned, derivative, dominant_frequency, welch_psd
from ..wake import ForcingKind, VdpParams, forcing_signal, integrate_wake
from .trf import FitReport, NlsProblem, trf_minimize

DIVERGENCE_PENALTY = 1e6
DEFAULT_ARX_MAX = 12


class InlineForcing(enum.Enum):
    """Input function of the in-line model: ``L_c**2`` or ``L_c * dL_c/dt``."""

    LC_SQUARED = "lc2"
    LC_LCDOT = "lc_lcdot"

    @classmethod
    def parse(cls, value) -> "InlineForcing":
        if isinstance(value, cls):
            return value
        aliases = {"lc2": "lc2", "lc^2": "lc2", "lc_squared": "lc2",
                   "lc_lcdot": "lc_lcdot", "lc*lcdot": "lc_lcdot", "lc_dlc": "lc_lcdot"}
        try:
            return cls(aliases[str(value).lower()])
        except KeyError:
            raise ParameterError(f"unknown in-line forcing {value!r}") from None

    @property
    def label(self) -> str:
        return {"lc2": "L_c^2", "lc_lcdot": "L_c*dL_c/dt"}[self.value]


def inline_input(lc: TimeSeries, forcing=InlineForcing.LC_SQUARED) -> TimeSeries:
    """Evaluate the in-line input function on a lift record."""
    forcing = InlineForcing.parse(forcing)
    if forcing is InlineForcing.LC_SQUARED:
        return lc * lc
    return lc * derivative(lc, 1)


@dataclass
class PemProblem:
    input: TimeSeries
    output: TimeSeries
    order: int
    initial_model: ss.StateSpaceModel | None = None

    def __post_init__(self):
        check_aligned(self.input, self.output)
        if self.order < 0:
            raise ParameterError("order must be non-negative")


def _pack(m: ss.StateSpaceModel) -> np.ndarray:
    return np.concatenate([m.A[-1, :] if m.order else [], m.B, [m.D]])


def _unpack(theta: np.ndarray, n: int, dt: float) -> ss.StateSpaceModel:
    return ss.companion_model(theta[:n], theta[n:2 * n], float(theta[2 * n]), False, dt)


def pem_identify(prob: PemProblem, **tol):
    """
    Output-error minimization in observability canonical form.

    The free entries are the characteristic coefficients, the input vector
    and the feed-through (``2n + 1`` parameters). The loss is the mean squared
    simulation error; iteration starts from ``prob.initial_model`` and only
    accepts decreasing steps.

    Returns ``(model, FitReport)`` with a discrete model at the data interval.
    """
    u, y, n = prob.input, prob.output, prob.order
    dt = u.dt
    free = 2 * n + 1
    if len(u) < 20 * free:
        raise DimensionError(f"{len(u)} samples too few for {free} free parameters")
    if n == 0:
        uu = u.values @ u.values
        if uu == 0:
            raise IllConditionedError("input is identically zero", np.inf)
        m = ss.static_model(float(u.values @ y.values / uu), dt)
        yhat = ss.simulate(m, u)
        return m, _pem_report(y, yhat, m, 0, True, "closed-form static gain", [], [])

    seed = prob.initial_model
    if seed is None:
        raise ParameterError("pem_identify needs an initial model of the requested order")
    if seed.continuous_time:
        seed = ss.to_discrete(seed, dt)
    if seed.order != n:
        raise DimensionError(f"initial model has order {seed.order}, expected {n}")
    seed = ss.observable_form(seed)
    theta0 = _pack(seed)
    scale = 1.0 / np.sqrt(len(u))

    def residual(theta):
        m = _unpack(theta, n, dt)
        with np.errstate(all="ignore"):
            yhat = ss.simulate(m, u).values
        return (y.values - yhat) * scale

    opts = dict(gtol=1e-10, xtol=1e-12, ftol=1e-12, max_iter=100)
    opts.update(tol)
    theta, rep = trf_minimize(NlsProblem(residual, theta0, **opts))
    m = _unpack(theta, n, dt)
    m.check_stability()
    yhat = ss.simulate(m, u)
    return m, _pem_report(y, yhat, m, rep.iterations, rep.converged, rep.message,
                          rep.cost_history, rep.iterates)


def _pem_report(y, yhat, m, iterations, converged, message, history, iterates):
    try:
        bf = best_fit(y, yhat)
    except Exception:
        bf = None
    return FitReport(bf, m.to_dict(), iterations, float(np.linalg.norm(y.values - yhat.values)),
                     converged, message, cost_history=list(history), iterates=list(iterates))


def _vdp_bounds(p0: VdpParams, bounds):
    x0 = p0.as_array()
    if bounds is None:
        a, b = x0 / 100.0, x0 * 100.0
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        zero = x0 == 0
        lo[zero], hi[zero] = -1.0, 1.0
        return lo, hi
    lo, hi = bounds
    lo = lo.as_array() if isinstance(lo, VdpParams) else np.asarray(lo, dtype=float)
    hi = hi.as_array() if isinstance(hi, VdpParams) else np.asarray(hi, dtype=float)
    return lo, hi


def estimate_initial_state(lc: TimeSeries):
    """Lift and rate at the first sample, from the record itself.

    The rate uses a fourth-order one-sided stencil: on a limit cycle a phase
    error in the initial state never decays, so accuracy here matters.
    """
    x = lc.values
    if x.size < 5:
        raise DimensionError("need at least 5 samples")
    rate = (-25 * x[0] + 48 * x[1] - 36 * x[2] + 16 * x[3] - 3 * x[4]) / (12 * lc.dt)
    return float(x[0]), float(rate)


def identify_crossflow(motion: TimeSeries, lc_measured: TimeSeries, kind, p0: VdpParams,
                       bounds=None, ic=None, holdout: float = 0.0, fit_rate: bool = True,
                       **tol):
    """
    Fit the forced van der Pol parameters to a measured lift record.

    Parameters
    ----------
    motion : TimeSeries
        Cross-flow displacement ``d_CF``; velocity and acceleration are
        differentiated from it when ``kind`` asks for them.
    lc_measured : TimeSeries
        Lift coefficient aligned with ``motion``.
    kind : ForcingKind or str
    p0 : VdpParams
        Start point. Must lie strictly inside ``bounds``.
    bounds : (lower, upper), optional
        Defaults to ``[p0 / 100, 100 * p0]`` componentwise.
    ic : pair, optional
        Initial lift and rate; estimated from ``lc_measured`` by default.
    fit_rate : bool
        Refine the initial rate together with the parameters. The lift itself
        is measured, its derivative is not.
    holdout : float
        Fraction of the record kept out of the fit; the report then also
        carries the best fit on the held-out tail.

    Returns
    -------
    (VdpParams, FitReport)
    """
    kind = ForcingKind.parse(kind)
    check_aligned(motion, lc_measured)
    if not 0.0 <= holdout < 1.0:
        raise ParameterError("holdout must lie in [0, 1)")
    u = forcing_signal(motion, kind)
    n_train = len(lc_measured) if holdout == 0 else int(round((1.0 - holdout) * len(lc_measured)))
    if n_train < 5:
        raise DimensionError("training window too short")
    ic = estimate_initial_state(lc_measured) if ic is None else tuple(float(v) for v in ic)
    target = lc_measured.values[:n_train]
    u_train = u.window(0, n_train)

    def simulate_lift(q, useries):
        start = (ic[0], q[4]) if fit_rate else ic
        return integrate_wake(VdpParams.from_array(q[:4]), useries, kind, start,
                              forcing_is_input=True).values

    def residual(q):
        try:
            return target - simulate_lift(q, u_train)
        except (DivergenceError, NumericError):
            return np.full(n_train, DIVERGENCE_PENALTY)

    lo, hi = _vdp_bounds(p0, bounds)
    q0 = p0.as_array()
    if fit_rate:
        span = 0.5 * abs(ic[1]) + 1.0
        q0 = np.append(q0, ic[1])
        lo, hi = np.append(lo, ic[1] - span), np.append(hi, ic[1] + span)
    opts = dict(gtol=1e-8, xtol=1e-10, ftol=1e-10, max_iter=200)
    opts.update(tol)
    p, rep = trf_minimize(NlsProblem(residual, q0, lo, hi, **opts))
    params = VdpParams.from_array(p[:4])
    fitted = lc_measured.window(0, n_train).with_values(target - residual(p))
    report = FitReport(best_fit(lc_measured.window(0, n_train), fitted), params.to_dict(),
                       rep.iterations, float(np.linalg.norm(residual(p))), rep.converged,
                       rep.message, variant=kind.value, cost_history=rep.cost_history,
                       iterates=rep.iterates)
    report.params["forcing_kind"] = kind.value
    if fit_rate:
        report.diagnostics["initial_rate"] = float(p[4])
    report.diagnostics["sensitivity"] = _sensitivities(residual, p, lo, hi)
    weak = [name for name, s in report.diagnostics["sensitivity"].items() if s < 1e-8]
    if np.max(np.abs(u_train.values)) == 0 and "gain" not in weak:
        weak.append("gain")
    report.diagnostics["unidentifiable"] = weak
    if weak:
        warnings.warn(f"parameters with near-zero sensitivity: {', '.join(weak)}", RuntimeWarning,
                      stacklevel=2)
    if holdout > 0:
        full = lc_measured.with_values(simulate_lift(p, u))
        tail = slice(n_train, None)
        report.diagnostics["holdout_best_fit"] = best_fit(
            TimeSeries(0, lc_measured.dt, lc_measured.values[tail]),
            TimeSeries(0, lc_measured.dt, full.values[tail]))
    return params, report


def _sensitivities(residual, p, lo, hi):
    """Relative column norms of the residual Jacobian at ``p``."""
    from .trf import fd_jacobian
    f0 = residual(p)
    J = fd_jacobian(residual, p, f0, lo, hi)
    cols = np.linalg.norm(J * np.abs(p)[None, :], axis=0)
    top = cols.max() if cols.size and cols.max() > 0 else 1.0
    names = ("mu", "amp", "omega0_sq", "gain", "initial_rate")
    return dict(zip(names, (float(c / top) for c in cols)))


def select_inline_order(u: TimeSeries, y: TimeSeries, rel_threshold: float = 1e-6,
                        K: int | None = None, arx_max: int = DEFAULT_ARX_MAX,
                        plateau: float = 0.1):
    """
    Model order from the Hankel singular values of estimated Markov parameters.

    ARX orders ``p = 1, 2, ...`` are tried in turn. The scan stops at the
    first ``p`` whose Hankel matrix has numerical rank below ``p`` (the
    dynamics are captured), or when the simulated fit of the estimated
    impulse response gains less than ``plateau`` percentage points over
    ``p - 1`` (noise is being fitted; ``p - 1`` is kept).

    Returns ``(order, MarkovSequence, singular_values)``.
    """
    K = K if K is not None else min(200, len(u) // 10 - 1)
    rows = ss.default_hankel_size(K)
    last, last_fit = None, -np.inf
    for p in range(1, arx_max + 1):
        try:
            h = ss.markov_from_data(u, y, K, arx_order=p)
        except (NumericError, DimensionError) as exc:
            if last is None:
                raise
            warnings.warn(f"ARX order scan stopped at p = {p}: {exc}", RuntimeWarning, stacklevel=2)
            break
        yhat = np.convolve(u.values, h.h)[:len(u)]
        fit = best_fit(y, y.with_values(yhat))
        if last is not None and fit - last_fit < plateau:
            break
        order, sv = ss.select_order(ss.build_hankel(h, rows, rows), rel_threshold)
        last, last_fit = (order, h, sv), fit
        if order < p:
            break
    return last


def identify_inline(lc: TimeSeries, dc_fluct: TimeSeries, forcing=InlineForcing.LC_SQUARED,
                    rel_threshold: float = 1e-6, order: int | None = None, K: int | None = None,
                    holdout: float = 0.0, plateau: float = 0.1):
    """
    Identify the in-line drag model from lift and fluctuating drag records.

    The chain is: input function -> Markov parameters -> Hankel -> order ->
    ERA realization -> output-error refinement. Every order up to the
    Hankel choice is refined, and the smallest one whose fit is within
    ``plateau`` percentage points of the best is kept, so that noise in the
    Markov estimate does not inflate the order. ``order`` overrides all of
    this.

    Returns
    -------
    (StateSpaceModel, FitReport)
        Discrete model at the data interval.

    Raises
    ------
    DegenerateReferenceError
        If the drag record is constant (the fit is undefined).
    """
    forcing = InlineForcing.parse(forcing)
    check_aligned(lc, dc_fluct)
    u = inline_input(lc, forcing)
    n_train = len(u) if holdout == 0 else int(round((1.0 - holdout) * len(u)))
    ut, yt = u.window(0, n_train), dc_fluct.window(0, n_train)
    K = K if K is not None else min(200, n_train // 10 - 1)
    chosen, h, sv = select_inline_order(ut, yt, rel_threshold, K, plateau=plateau)
    rows = ss.default_hankel_size(K)
    H, H1 = ss.build_hankel(h, rows, rows), ss.build_hankel(h, rows, rows, shift=1)

    def refine(n):
        if n == 0:
            return pem_identify(PemProblem(ut, yt, 0))
        seed = ss.era_realize(H, H1, n, u.dt, feedthrough=float(h.h[0]))
        return pem_identify(PemProblem(ut, yt, n, seed))

    if order is not None:
        candidates = [int(order)]
    else:
        candidates = [chosen] if chosen <= 1 else range(1, chosen + 1)
    fits = {}
    for n in candidates:
        model_n, rep_n = refine(n)
        # re-raises DegenerateReferenceError for a constant drag channel
        rep_n.best_fit_percent = best_fit(yt, ss.simulate(model_n, ut))
        fits[n] = (model_n, rep_n)
    top = max(r.best_fit_percent for _, r in fits.values())
    n = min(k for k, (_, r) in fits.items() if r.best_fit_percent >= top - plateau)
    model, report = fits[n]
    report.variant = forcing.value
    report.diagnostics.update({"hankel_order": chosen, "singular_values": sv.tolist(),
                               "markov": h.meta,
                               "order_fits": {k: r.best_fit_percent for k, (_, r) in fits.items()}})
    if holdout > 0:
        yfull = ss.simulate(model, u)
        report.diagnostics["holdout_best_fit"] = best_fit(dc_fluct.window(n_train),
                                                          yfull.window(n_train))
    return model, report


def initial_guess(motion: TimeSeries, lc: TimeSeries, kind=ForcingKind.ACCELERATION) -> VdpParams:
    """Rough van der Pol start point from the lift record alone."""
    amp = (np.max(np.abs(lc.values)) / 2.0) ** 2
    f = dominant_frequency(welch_psd(lc))
    w2 = (2 * np.pi * max(f, 1e-3)) ** 2
    u = forcing_signal(motion, kind).values
    urms = np.sqrt(np.mean(u**2))
    gain = np.sqrt(w2) / urms if urms > 0 else 1.0
    return VdpParams(np.sqrt(w2) / max(amp, 1e-6), max(amp, 1e-6), w2, gain)


def scale_gain(p0: VdpParams, motion: TimeSeries, from_kind, to_kind) -> VdpParams:
    """Start point for ``to_kind`` with the forcing term's RMS matched to ``from_kind``."""
    ua = forcing_signal(motion, from_kind).values
    ub = forcing_signal(motion, to_kind).values
    ra, rb = np.sqrt(np.mean(ua**2)), np.sqrt(np.mean(ub**2))
    g = p0.gain * ra / rb if rb > 0 else p0.gain
    return VdpParams(p0.mu, p0.amp, p0.omega0_sq, g)


@dataclass
class ForcingComparison:
    inline: list = field(default_factory=list)
    crossflow: list = field(default_factory=list)
    models: dict = field(default_factory=dict, repr=False)

    @property
    def inline_winner(self) -> str:
        return self.inline[0].variant

    @property
    def crossflow_winner(self) -> str:
        return self.crossflow[0].variant

    def table(self) -> str:
        lines = ["| Name | Best Fit |", "|------|----------|"]
        for r in self.inline:
            lines.append(f"| IL {InlineForcing(r.variant).label} | {_pct(r.best_fit_percent)} |")
        for r in self.crossflow:
            lines.append(f"| CF LC {r.variant[:3]}. | {_pct(r.best_fit_percent)} |")
        return "\n".join(lines)


def _pct(v):
    return "n/a" if v is None else f"{v:.2f} %"


def _rank(reports):
    return sorted(reports, key=lambda r: -np.inf if r.best_fit_percent is None else r.best_fit_percent,
                  reverse=True)


def compare_forcings(dataset: dict, p0: VdpParams | None = None, p0_kind=ForcingKind.ACCELERATION,
                     rel_threshold: float = 1e-6, inline_variants=tuple(InlineForcing),
                     crossflow_variants=tuple(ForcingKind), **tol) -> ForcingComparison:
    """
    Identify every in-line and cross-flow variant and rank them by best fit.

    ``dataset`` maps ``d_CF``, ``L_c`` and ``D_c_fluct`` to aligned series.
    ``p0`` is the start point for ``p0_kind``; other kinds get the same start
    with the gain rescaled so the forcing term has the same RMS.
    """
    missing = [k for k in ("d_CF", "L_c", "D_c_fluct") if k not in dataset]
    if missing:
        raise DimensionError(f"dataset lacks channels {missing}")
    motion, lc, dc = dataset["d_CF"], dataset["L_c"], dataset["D_c_fluct"]
    out = ForcingComparison()
    for variant in inline_variants:
        variant = InlineForcing.parse(variant)
        m, rep = identify_inline(lc, dc, variant, rel_threshold)
        out.inline.append(rep)
        out.models[variant.value] = m
    if p0 is None:
        p0 = initial_guess(motion, lc, p0_kind)
        p0_kind = ForcingKind.parse(p0_kind)
    for kind in crossflow_variants:
        kind = ForcingKind.parse(kind)
        start = scale_gain(p0, motion, p0_kind, kind)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            params, rep = identify_crossflow(motion, lc, kind, start, **tol)
        out.crossflow.append(rep)
        out.models[kind.value] = params
    out.inline = _rank(out.inline)
    out.crossflow = _rank(out.crossflow)
    return out
