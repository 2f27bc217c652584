"""
Bound-constrained nonlinear least squares by a trust-region reflective method.

Minimizes ``0.5 * ||R(p)||^2`` subject to ``lower < p < upper``. Each
iteration solves a Levenberg-damped Gauss-Newton model in variables scaled by
the Coleman-Li affine scaling, so steps shrink along coordinates whose bound is
close and in the descent direction. A step that would leave the box is either
truncated, reflected off the first bound it hits, or replaced by a scaled
gradient step, whichever gives the lowest model value. All iterates stay
strictly inside the box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from ..exceptions import DimensionError, NumericError, OptimizationFailure, ParameterError

EPS = np.finfo(float).eps


@dataclass
class NlsProblem:
    """
    Residual function, start point, bounds and stopping tolerances.

    ``jac`` may be a callable returning the (m, n) Jacobian; by default it is
    approximated by central differences (one-sided next to a bound).
    """

    residual: Callable[[np.ndarray], np.ndarray]
    p0: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    gtol: float = 1e-8
    xtol: float = 1e-10
    ftol: float = 1e-10
    max_iter: int = 200
    initial_radius: float = 1.0
    jac: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float).ravel()
        n = self.p0.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise DimensionError("bounds must match the parameter vector")
        if np.any(self.lower >= self.upper):
            raise ParameterError("each lower bound must be below its upper bound")
        if np.any(self.p0 <= self.lower) or np.any(self.p0 >= self.upper):
            raise ParameterError("p0 must lie strictly inside the bounds")


@dataclass
class FitReport:
    """Outcome of an identification or minimization run."""

    best_fit_percent: float | None
    params: dict
    iterations: int
    residual_norm: float
    converged: bool
    message: str = ""
    variant: str = ""
    cost_history: list = field(default_factory=list, repr=False)
    iterates: list = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "best_fit_percent": self.best_fit_percent,
            "params": self.params,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def fd_jacobian(fun, x, f0, lower, upper):
    """Central-difference Jacobian, falling back to one-sided steps at bounds."""
    n = x.size
    J = np.empty((f0.size, n))
    h = EPS ** (1 / 3) * np.maximum(1.0, np.abs(x))
    for i in range(n):
        up, dn = x[i] + h[i], x[i] - h[i]
        if up < upper[i] and dn > lower[i]:
            xp, xm = x.copy(), x.copy()
            xp[i], xm[i] = up, dn
            J[:, i] = (fun(xp) - fun(xm)) / (2 * h[i])
        else:
            hi = EPS ** 0.5 * max(1.0, abs(x[i]))
            xs = x.copy()
            if x[i] + hi < upper[i]:
                xs[i] = x[i] + hi
                J[:, i] = (fun(xs) - f0) / hi
            else:
                xs[i] = x[i] - hi
                J[:, i] = (f0 - fun(xs)) / hi
    return J


def _cl_scaling(x, g, lb, ub):
    """Coleman-Li scaling vector and its derivative sign."""
    v = np.ones_like(x)
    dv = np.zeros_like(x)
    mask = (g < 0) & np.isfinite(ub)
    v[mask] = ub[mask] - x[mask]
    dv[mask] = -1.0
    mask = (g > 0) & np.isfinite(lb)
    v[mask] = x[mask] - lb[mask]
    dv[mask] = 1.0
    return v, dv


def _step_to_bound(x, s, lb, ub):
    """Largest t with ``x + t s`` in the box and the mask of coordinates that hit first."""
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.where(s > 0, (ub - x) / s, np.where(s < 0, (lb - x) / s, np.inf))
    t = np.min(steps)
    return t, np.isclose(steps, t, rtol=1e-12, atol=0) & np.isfinite(steps)


def _to_trust_region(x, s, radius):
    """Positive root t of ``||x + t s|| = radius``."""
    a = s @ s
    if a == 0:
        return np.inf
    b = x @ s
    c = x @ x - radius**2
    disc = max(b * b - a * c, 0.0)
    return (-b + np.sqrt(disc)) / a


def _quad(J, g, s, diag):
    """Model value ``0.5 s'(J'J + diag)s + g's``."""
    Js = J @ s
    return 0.5 * (Js @ Js + s @ (diag * s)) + g @ s


def _min_quad_1d(J, g, s, s0, diag, lo, hi):
    """Minimize the model along ``s0 + t s`` for ``t`` in [lo, hi]."""
    Js = J @ s
    a = 0.5 * (Js @ Js + s @ (diag * s))
    b = g @ s + (J @ s0) @ Js + s0 @ (diag * s)
    cands = [lo, hi]
    if a > 0:
        t = -b / (2 * a)
        if lo < t < hi:
            cands.append(t)
    vals = [a * t * t + b * t for t in cands]
    k = int(np.argmin(vals))
    return cands[k], vals[k] + _quad(J, g, s0, diag)


def _lm_step(J, f, radius):
    """Minimizer of ``||J s + f||`` over ``||s|| <= radius`` via the secular equation."""
    U, sv, Vt = np.linalg.svd(J, full_matrices=False)
    uf = U.T @ f
    tiny = sv > sv[0] * EPS * max(J.shape) if sv.size and sv[0] > 0 else np.zeros_like(sv, bool)

    def p_of(alpha):
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(tiny, sv * uf / (sv**2 + alpha), 0.0)
        return -Vt.T @ coef

    if np.all(tiny):
        p = p_of(0.0)
        if np.linalg.norm(p) <= radius:
            return p
    grad_norm = np.linalg.norm(sv * uf)
    if grad_norm == 0:
        return np.zeros(J.shape[1])
    hi = grad_norm / radius
    lo = max(1e-300, 1e-14 * hi)

    def phi(alpha):
        return np.linalg.norm(p_of(alpha)) - radius

    if phi(lo) <= 0:
        return p_of(lo)
    if phi(hi) >= 0:
        # ||p(hi)|| <= radius holds exactly; only rounding can break the bracket
        alpha = hi
    else:
        alpha = brentq(phi, lo, hi, xtol=1e-14 * hi, rtol=1e-10, maxiter=200)
    p = p_of(alpha)
    nrm = np.linalg.norm(p)
    return p * (radius / nrm) if nrm > radius else p


def _select_step(x, J_h, diag_h, g_h, p, p_h, d, radius, lb, ub, theta):
    """Choose among truncated, reflected and scaled-gradient steps."""
    if np.all(x + p > lb) and np.all(x + p < ub):
        return p, p_h, -_quad(J_h, g_h, p_h, diag_h)

    p_stride, hits = _step_to_bound(x, p, lb, ub)
    r_h = p_h.copy()
    r_h[hits] *= -1
    r = d * r_h
    p = p * p_stride
    p_h = p_h * p_stride
    x_on_bound = x + p

    to_tr = _to_trust_region(p_h, r_h, radius)
    to_bound, _ = _step_to_bound(x_on_bound, r, lb, ub)
    r_stride = min(to_bound, to_tr)
    if r_stride > 0:
        r_lo = (1 - theta) * p_stride / r_stride
        r_hi = theta * to_bound if r_stride == to_bound else to_tr
    else:
        r_lo, r_hi = 0.0, -1.0
    if r_lo <= r_hi:
        t, r_value = _min_quad_1d(J_h, g_h, r_h, p_h, diag_h, r_lo, r_hi)
        r_h = p_h + t * r_h
        r = d * r_h
    else:
        r_value = np.inf

    p = p * theta
    p_h = p_h * theta
    p_value = _quad(J_h, g_h, p_h, diag_h)

    ag_h = -g_h
    ag = d * ag_h
    gn = np.linalg.norm(ag_h)
    to_tr = radius / gn if gn > 0 else 0.0
    to_bound, _ = _step_to_bound(x, ag, lb, ub)
    ag_stride = theta * to_bound if to_bound < to_tr else to_tr
    t, ag_value = _min_quad_1d(J_h, g_h, ag_h, np.zeros_like(ag_h), diag_h, 0.0, ag_stride)
    ag_h = ag_h * t
    ag = ag * t

    if p_value < r_value and p_value < ag_value:
        return p, p_h, -p_value
    if r_value < p_value and r_value < ag_value:
        return r, r_h, -r_value
    return ag, ag_h, -ag_value


def _strictly_inside(x, lb, ub):
    """Nudge coordinates that landed on a bound back into the interior."""
    x = x.copy()
    span = np.where(np.isfinite(ub - lb), ub - lb, np.inf)
    eps = np.minimum(1e-10 * np.maximum(1.0, np.abs(x)), 0.5 * span)
    lo_hit = x <= lb
    x[lo_hit] = lb[lo_hit] + eps[lo_hit]
    hi_hit = x >= ub
    x[hi_hit] = ub[hi_hit] - eps[hi_hit]
    return x


def trf_minimize(prob: NlsProblem):
    """
    Solve a bound-constrained least-squares problem.

    Returns
    -------
    p : ndarray
        Best point found (strictly inside the bounds).
    report : FitReport
        ``converged`` is true only if one of ``gtol`` (scaled gradient
        infinity norm), ``xtol`` (relative step) or ``ftol`` (relative cost
        decrease) was met within ``max_iter`` iterations.

    Raises
    ------
    NumericError
        Residual is non-finite at ``p0``.
    OptimizationFailure
        No finite trial point could be found from the current iterate.
    """
    fun = prob.residual
    lb, ub = prob.lower, prob.upper
    x = prob.p0.copy()
    f = np.asarray(fun(x), dtype=float).ravel()
    if not np.all(np.isfinite(f)):
        raise NumericError("residual is not finite at the start point")

    def jacobian(xx, ff):
        if prob.jac is not None:
            return np.atleast_2d(np.asarray(prob.jac(xx), dtype=float))
        return fd_jacobian(lambda z: np.asarray(fun(z), dtype=float).ravel(), xx, ff, lb, ub)

    J = jacobian(x, f)
    cost = 0.5 * f @ f
    g = J.T @ f
    scale_inv = np.linalg.norm(J, axis=0)
    scale_inv[scale_inv == 0] = 1.0
    scale = 1.0 / scale_inv
    # a start at (or next to) the origin would otherwise begin with a vanishing region
    radius = prob.initial_radius * max(np.linalg.norm(x * scale_inv), 1.0)

    history = [cost]
    iterates = [x.copy()]
    converged, message = False, "maximum number of iterations reached"
    iteration = 0
    while iteration < prob.max_iter:
        v, dv = _cl_scaling(x, g, lb, ub)
        g_norm = np.linalg.norm(g * v, ord=np.inf)
        if g_norm < prob.gtol:
            converged, message = True, "gradient tolerance satisfied"
            break
        iteration += 1
        # express bound distances in the Jacobian-scaled variables
        v[dv != 0] *= scale_inv[dv != 0]
        d = v**0.5 * scale
        g_h = d * g
        J_h = J * d
        diag_h = g * dv * scale
        J_aug = np.vstack([J_h, np.diag(np.sqrt(diag_h))])
        f_aug = np.concatenate([f, np.zeros(x.size)])
        theta = max(0.995, 1 - g_norm)

        accepted = False
        stop = None
        for _ in range(100):
            p_h = _lm_step(J_aug, f_aug, radius)
            p = d * p_h
            step, step_h, predicted = _select_step(x, J_h, diag_h, g_h, p, p_h, d, radius, lb, ub, theta)
            x_new = _strictly_inside(x + step, lb, ub)
            f_new = np.asarray(fun(x_new), dtype=float).ravel()
            step_h_norm = np.linalg.norm(step_h)
            if not np.all(np.isfinite(f_new)):
                radius = 0.25 * step_h_norm
                continue
            cost_new = 0.5 * f_new @ f_new
            actual = cost - cost_new
            ratio = actual / predicted if predicted > 0 else (1.0 if actual == 0 else -1.0)
            if ratio < 0.25:
                radius = 0.25 * step_h_norm
            elif ratio > 0.75 and step_h_norm > 0.95 * radius:
                radius *= 2.0
            step_norm = np.linalg.norm(step)
            if actual >= 0 and actual < prob.ftol * cost and ratio > 0.25:
                stop = "relative cost decrease below ftol"
            elif step_norm < prob.xtol * (prob.xtol + np.linalg.norm(x)):
                stop = "step below xtol"
            if actual > 0:
                accepted = True
                break
            if stop is not None or radius < EPS * max(1.0, np.linalg.norm(x * scale_inv)):
                stop = stop or "trust region collapsed"
                break
        else:
            raise OptimizationFailure("no admissible trial step found")

        if accepted:
            x, f, cost = x_new, f_new, cost_new
            J = jacobian(x, f)
            g = J.T @ f
            scale_inv = np.maximum(scale_inv, np.linalg.norm(J, axis=0))
            scale = 1.0 / scale_inv
            history.append(cost)
            iterates.append(x.copy())
        if stop is not None:
            converged, message = stop != "trust region collapsed", stop
            break

    report = FitReport(None, {f"p{i}": float(val) for i, val in enumerate(x)}, iteration,
                       float(np.sqrt(2 * cost)), converged, message,
                       cost_history=history, iterates=iterates)
    return x, report
