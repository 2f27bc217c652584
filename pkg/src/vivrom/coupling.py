"""
Partitioned fluid-structure coupling with a reduced-order force model.

The structural side is a :class:`~vivrom.beam.Newmark` integrator; the
"fluid" side is anything that maps a predicted structural state to nodal
loads. :func:`coupled_step` runs block Gauss-Seidel sub-iterations on the
interface velocity with Aitken relaxation. :class:`RomForceField` provides
strip-wise hydrodynamic loads from one wake oscillator and one linear drag
model per node, and :func:`run_full_scale` drives a complete riser run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import beam as bm
from . import ssmodel as ss
from .exceptions import (CouplingError, DivergenceError, MappingError,
                         ParameterError, StagnationError)
from .signals import TimeSeries
from .wake import ForcingKind, VdpParams, WakeState, rk4_step

WAKE_BLOWUP = 1e6


@dataclass(frozen=True)
class HydroParams:
    """Fluid density [kg/m^3], free-stream speed [m/s], diameter [m] and Strouhal number."""

    U: float
    D: float
    rho_f: float = 1000.0
    St: float = 0.2

    def __post_init__(self):
        if self.rho_f <= 0 or self.D <= 0 or self.U < 0:
            raise ParameterError("rho_f and D must be positive, U non-negative")
        if not 0.05 < self.St < 0.5:
            raise ParameterError("St must lie in (0.05, 0.5)")

    @property
    def force_scale(self) -> float:
        """``rho U^2 D / 2``: force per unit length for a unit coefficient."""
        return 0.5 * self.rho_f * self.U**2 * self.D


def strouhal_frequency(hydro: HydroParams) -> float:
    """Shedding frequency ``St U / D`` [Hz]."""
    return hydro.St * hydro.U / hydro.D


def coefficients_to_force(lc, dc, hydro: HydroParams, tributary):
    """
    Lift and drag coefficients to lumped nodal forces.

    Returns an array ``[..., 2]`` holding the drag (in-line) and lift
    (cross-flow) components.
    """
    trib = np.asarray(tributary, dtype=float)
    if np.any(trib <= 0):
        raise ParameterError("tributary length must be positive")
    s = hydro.force_scale * trib
    return np.stack([np.asarray(dc, dtype=float) * s, np.asarray(lc, dtype=float) * s], axis=-1)


@dataclass(frozen=True)
class InterfacePoint:
    """A point of the wetted surface tied to a beam element at natural coordinate ``xi``."""

    element: int
    xi: float
    r_s: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_s", np.asarray(self.r_s, dtype=float).reshape(3))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))


def shape_functions(xi: float) -> np.ndarray:
    return np.array([0.5 * (1.0 - xi), 0.5 * (1.0 + xi)])


def _check_mapping(points, element):
    for p in points:
        if p.element != element:
            raise MappingError(f"point mapped to element {p.element}, not {element}")
        if not abs(p.xi) <= 1.0:
            raise MappingError(f"natural coordinate {p.xi} outside [-1, 1]")


def transfer_forces(points, forces, element: int):
    """
    Lump interface forces onto the two nodes of ``element``.

    Returns ``(F, M)``, each of shape ``(2, 3)``: nodal forces
    ``sum_i I_j(xi_i) F_i`` and moments ``sum_i I_j(xi_i) r_i x F_i``.
    """
    _check_mapping(points, element)
    forces = np.asarray(forces, dtype=float).reshape(len(points), 3)
    F = np.zeros((2, 3))
    M = np.zeros((2, 3))
    for p, f in zip(points, forces):
        w = shape_functions(p.xi)
        F += w[:, None] * f[None, :]
        M += w[:, None] * np.cross(p.r_s, f)[None, :]
    return F, M


def transfer_displacements(points, du, dphi, element: int):
    """
    Move interface points with the nodal increments of ``element``.

    The centroid offset is interpolated linearly; the interpolated rotation
    increment is exponentiated and applied to the stored radius, so the
    section stays rigid.
    """
    _check_mapping(points, element)
    du = np.asarray(du, dtype=float).reshape(2, 3)
    dphi = np.asarray(dphi, dtype=float).reshape(2, 3)
    out = []
    for p in points:
        w = shape_functions(p.xi)
        r_new = bm.rot_exp(w @ dphi) @ p.r_s
        out.append(InterfacePoint(p.element, p.xi, r_new, p.position + w @ du + r_new - p.r_s))
    return out


def aitken_omega(res_prev, res_curr, omega_prev: float, lo: float = 0.01, hi: float = 2.0) -> float:
    """
    Aitken relaxation factor from two successive interface residuals.

    ``-omega_prev * r_prev.(r_curr - r_prev) / |r_curr - r_prev|^2``, clipped
    to ``[lo, hi]``. Raises StagnationError when the residuals coincide.
    """
    r0 = np.ravel(np.asarray(res_prev, dtype=float))
    r1 = np.ravel(np.asarray(res_curr, dtype=float))
    dr = r1 - r0
    den = float(dr @ dr)
    if np.sqrt(den) < 1e-14:
        raise StagnationError("residual did not change between sub-iterations")
    return float(np.clip(-omega_prev * float(r0 @ dr) / den, lo, hi))


@dataclass(frozen=True)
class CouplingConfig:
    """Sub-iteration controls. ``tol`` bounds the interface velocity residual [m/s, max norm]."""

    tol: float = 1e-6
    omega0: float = 0.7
    max_subiter: int = 50
    dt: float = 1e-3
    aitken: bool = True

    def __post_init__(self):
        if self.tol <= 0 or not 0 < self.omega0 <= 1 or self.max_subiter < 1 or self.dt <= 0:
            raise ParameterError("need tol > 0, 0 < omega0 <= 1, max_subiter >= 1, dt > 0")


@dataclass
class StepInfo:
    subiterations: int
    residuals: list
    forces: np.ndarray
    omegas: list = field(default_factory=list)


def coupled_step(state: bm.NewmarkState, integrator: bm.Newmark, provider, cfg: CouplingConfig,
                 v_prev=None, interface=None):
    """
    Advance one coupled step by Gauss-Seidel sub-iterations.

    Parameters
    ----------
    state : NewmarkState
        Converged structural state at the start of the step.
    integrator : Newmark
    provider : callable or object
        ``provider(state, predicted) -> F`` gives loads for a predicted end
        state; an optional ``provider.commit(predicted)`` is called once the
        step has converged.
    v_prev : array, optional
        Converged velocity one step earlier; enables the linear-extrapolation
        predictor.
    interface : index array, optional
        Entries of the velocity vector that make up the interface residual
        (all by default).

    Returns
    -------
    (NewmarkState, StepInfo)

    Raises
    ------
    CouplingError
        If ``cfg.max_subiter`` sub-iterations do not reach ``cfg.tol``.
    """
    evaluate = provider if callable(provider) else provider.forces
    sel = slice(None) if interface is None else interface
    v_pred = state.v.copy() if v_prev is None else 2.0 * state.v - np.asarray(v_prev)
    history, omegas = [], []
    res_old, F_old, s, omega = None, None, None, cfg.omega0
    for k in range(cfg.max_subiter):
        u_p, a_p = integrator.predict(state, v_pred)
        pred = bm.NewmarkState(u_p, v_pred, a_p, state.t + integrator.dt)
        F = np.asarray(evaluate(state, pred), dtype=float)
        if F_old is not None and np.array_equal(F, F_old):
            # same loads as the last solve: the structural answer cannot change
            return _accept(provider, pred, s, k, history, F, omegas)
        s = integrator.step(state, F)
        res = s.v[sel] - v_pred[sel]
        err = float(np.max(np.abs(res))) if res.size else 0.0
        history.append(err)
        if err <= cfg.tol:
            return _accept(provider, pred, s, k + 1, history, F, omegas)
        if k > 0 and cfg.aitken:
            try:
                omega = aitken_omega(res_old, res, omega)
            except StagnationError:
                return _accept(provider, pred, s, k + 1, history, F, omegas)
        omegas.append(omega)
        v_pred = v_pred.copy()
        v_pred[sel] = v_pred[sel] + omega * res
        res_old, F_old = res, F
    raise CouplingError(f"no convergence in {cfg.max_subiter} sub-iterations at t = {state.t:.6g} s "
                        f"(residual {history[-1]:.3e})", history, state.t)


def _accept(provider, pred, s, count, history, F, omegas):
    commit = getattr(provider, "commit", None)
    if commit is not None:
        commit(pred)
    return s, StepInfo(count, history, F, omegas)


def discretize_for(model: ss.StateSpaceModel, dt: float) -> ss.StateSpaceModel:
    """Bring a drag model to the coupling step, resampling through continuous time if needed."""
    if model.continuous_time:
        return ss.to_discrete(model, dt)
    if model.dt is None or abs(model.dt - dt) <= 1e-9 * dt:
        return model
    if model.order == 0:
        return ss.static_model(model.D, dt)
    return ss.to_discrete(ss.to_continuous(model), dt)


class RomForceField:
    """
    Strip-wise hydrodynamic loads on a two-plane beam.

    Every node carries its own wake oscillator (forced by that node's
    cross-flow motion) and its own copy of the drag model state driven by
    ``L_c**2`` (or ``L_c dL_c/dt``). Loads are lumped with the tributary
    lengths; the steady drag ``dcm`` is included in the in-line load.

    ``lift_sign`` orients the lift against the cross-flow axis used by the
    oscillator's forcing. With the default ``-1`` a positive acceleration
    gain behaves as fluid inertia (it opposes the motion that produced it);
    with ``+1`` it acts as negative added mass, and a strip whose gain times
    ``rho U^2 D / (2 m)`` exceeds ``omega0_sq`` loses static stability.
    """

    def __init__(self, model: bm.BeamModel, vdp: VdpParams, kind, drag: ss.StateSpaceModel | None,
                 hydro: HydroParams, dcm: float, dt: float, ic=(0.01, 0.0), inline_input="lc2",
                 include_steady: bool = True, lift_sign: float = -1.0):
        from .sysid.identify import InlineForcing
        self.model = model
        self.vdp = vdp
        self.kind = ForcingKind.parse(kind)
        self.hydro = hydro
        self.dcm = float(dcm)
        self.dt = float(dt)
        self.inline_input = InlineForcing.parse(inline_input)
        self.include_steady = include_steady
        if lift_sign not in (-1.0, 1.0):
            raise ParameterError("lift_sign must be +1 or -1")
        self.lift_sign = float(lift_sign)
        self.tributary = model.tributary_lengths()
        self.drag = discretize_for(drag if drag is not None else ss.static_model(0.0), self.dt)
        n = model.n_nodes
        ic = ic if isinstance(ic, WakeState) else WakeState(*ic)
        self.x1 = np.full(n, float(ic.x1))
        self.x2 = np.full(n, float(ic.x2))
        self.X = np.zeros((n, self.drag.order))
        self.f_in = self._input(self.x1, self.x2)
        self.dc = self._drag_out(self.X, self.f_in)
        self.time = 0.0
        self._pending = None

    @property
    def n_nodes(self) -> int:
        return self.model.n_nodes

    def _input(self, x1, x2):
        return x1 * x1 if self.inline_input.value == "lc2" else x1 * x2

    def _drag_out(self, X, f):
        D = self.drag
        return (X @ D.C if D.order else 0.0) + D.D * f

    def _cf_channel(self, s: bm.NewmarkState) -> np.ndarray:
        q = {ForcingKind.DISPLACEMENT: s.u, ForcingKind.VELOCITY: s.v,
             ForcingKind.ACCELERATION: s.a}[self.kind]
        return self.model.expand(q)[:, bm.CF]

    def nodal_loads(self, lc, dc) -> np.ndarray:
        """``(n_nodes, 2)`` loads [N] from coefficients."""
        total = dc + (self.dcm if self.include_steady else 0.0)
        return coefficients_to_force(self.lift_sign * lc, total, self.hydro, self.tributary)

    def steady_loads(self) -> np.ndarray:
        return coefficients_to_force(np.zeros(self.n_nodes), np.full(self.n_nodes, self.dcm),
                                     self.hydro, self.tributary)

    def to_free(self, nodal) -> np.ndarray:
        """Scatter nodal loads onto the free translational DOFs ``(n_free, 2)``."""
        pos = self.model.translation_dofs
        F = np.zeros((self.model.free_dofs.size, 2))
        F[pos[pos >= 0]] = nodal[pos >= 0]
        return F

    def current_loads(self) -> np.ndarray:
        return self.to_free(self.nodal_loads(self.x1, self.dc))

    def _advance(self, old: bm.NewmarkState, new: bm.NewmarkState):
        u0, u1 = self._cf_channel(old), self._cf_channel(new)
        x1, x2 = rk4_step(self.x1, self.x2, self.vdp, u0, u1, self.dt)
        bad = ~(np.isfinite(x1) & np.isfinite(x2) & (np.abs(x1) <= WAKE_BLOWUP)
                & (np.abs(x2) <= WAKE_BLOWUP))
        if np.any(bad):
            node = int(np.argmax(bad))
            t = self.time + self.dt
            raise DivergenceError(f"wake oscillator diverged at node {node}, t = {t:.6g} s",
                                  time=t, node=node)
        D = self.drag
        X = self.X @ D.A.T + np.outer(self.f_in, D.B) if D.order else self.X
        f = self._input(x1, x2)
        return x1, x2, X, f, self._drag_out(X, f)

    def forces(self, old: bm.NewmarkState, predicted: bm.NewmarkState) -> np.ndarray:
        """Loads at the end of the step for a predicted structural state."""
        x1, x2, X, f, dc = self._advance(old, predicted)
        self._pending = (x1, x2, X, f, dc)
        return self.to_free(self.nodal_loads(x1, dc))

    def __call__(self, old, predicted):
        return self.forces(old, predicted)

    def commit(self, predicted=None) -> None:
        """Keep the wake and drag states of the last evaluation."""
        if self._pending is None:
            raise ParameterError("nothing to commit")
        self.x1, self.x2, self.X, self.f_in, self.dc = self._pending
        self._pending = None
        self.time += self.dt


@dataclass
class FullScaleResult:
    times: np.ndarray
    z: np.ndarray
    displacement: np.ndarray
    velocity: np.ndarray
    lift: np.ndarray
    drag: np.ndarray
    subiterations: np.ndarray
    static_deflection: np.ndarray
    midpoint_node: int

    def midpoint(self, plane: int) -> TimeSeries:
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        return TimeSeries(float(self.times[0]), float(dt),
                          self.displacement[:, self.midpoint_node, plane])

    def write_midpoint(self, path, fmt: str = "%.10g") -> None:
        table = np.column_stack([self.times, self.displacement[:, self.midpoint_node, bm.IL],
                                 self.displacement[:, self.midpoint_node, bm.CF]])
        np.savetxt(Path(path), table, delimiter=",", header="time,d_IL,d_CF", comments="", fmt=fmt)


def run_full_scale(model: bm.BeamModel, rom: RomForceField, cfg: CouplingConfig, T: float,
                   snapshot: Callable | None = None, snapshot_every: int = 0) -> FullScaleResult:
    """
    Static preload under the steady drag, then coupled time marching for ``T`` seconds.

    ``snapshot(step, state)`` is called every ``snapshot_every`` steps
    (and at the last step) when given.

    Raises
    ------
    CouplingError
        With the residual history of the failing step.
    DivergenceError
        Naming the node and time of a wake blow-up.
    """
    if abs(rom.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise ParameterError("force field and coupling must share the time step")
    if T <= 0:
        raise ParameterError("T must be positive")
    nsteps = int(round(T / cfg.dt))
    M, K = bm.assemble(model)
    C = bm.damping_matrix(model, M, K)
    integ = bm.Newmark(M, C, K, cfg.dt)
    static_F = rom.to_free(rom.steady_loads()) if rom.include_steady else np.zeros((M.shape[0], 2))
    u_static = bm.static_solve(model, static_F)
    z0 = np.zeros_like(u_static)
    a0 = integ.initial_acceleration(u_static, z0, rom.current_loads())
    state = bm.NewmarkState(u_static, z0, a0, 0.0)
    nn = model.n_nodes
    disp = np.empty((nsteps + 1, nn, 2))
    vel = np.empty((nsteps + 1, nn, 2))
    lift = np.empty((nsteps + 1, nn))
    drag = np.empty((nsteps + 1, nn))
    subs = np.zeros(nsteps + 1, dtype=int)
    interface = model.translation_dofs[model.translation_dofs >= 0]

    def record(i, s):
        disp[i] = model.expand(s.u)
        vel[i] = model.expand(s.v)
        lift[i] = rom.x1
        drag[i] = rom.dc + rom.dcm

    record(0, state)
    if snapshot is not None and snapshot_every:
        snapshot(0, state)
    v_prev = None
    for i in range(1, nsteps + 1):
        new, info = coupled_step(state, integ, rom, cfg, v_prev, interface)
        v_prev = state.v
        state = new
        subs[i] = info.subiterations
        record(i, state)
        if snapshot is not None and snapshot_every and (i % snapshot_every == 0 or i == nsteps):
            snapshot(i, state)
    times = np.arange(nsteps + 1) * cfg.dt
    mid = int(np.argmin(np.abs(model.z - 0.5 * model.length)))
    return FullScaleResult(times, model.z, disp, vel, lift, drag, subs, model.expand(u_static), mid)
