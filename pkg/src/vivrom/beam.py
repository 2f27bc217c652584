"""
Structural model of a slender tensioned riser.

Two layers live here:

* rotation kinematics of a beam cross-section (exponential map on SO(3),
  multiplicative configuration updates, rigid-section material points);
* a linear finite-element model: cubic-Hermite Euler-Bernoulli elements with
  a geometric (tension) stiffness, two uncoupled transverse planes (in-line
  and cross-flow), and Newmark time stepping.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionError, NumericError, ParameterError

SMALL_ANGLE = 1e-6
REORTHO_EVERY = 100
IL, CF = 0, 1


def skew(v) -> np.ndarray:
    """Matrix ``S`` with ``S @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_exp(phi) -> np.ndarray:
    """
    Rotation matrix of the rotation vector ``phi`` (Rodrigues formula).

    Below ``|phi| = 1e-6`` the coefficients ``sin(t)/t`` and
    ``(1 - cos t)/t**2`` are replaced by their Taylor series.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (3,):
        raise DimensionError("rotation vector must have 3 components")
    if not np.all(np.isfinite(phi)):
        raise NumericError("non-finite rotation vector")
    t2 = float(phi @ phi)
    t = np.sqrt(t2)
    if t < SMALL_ANGLE:
        a = 1.0 - t2 / 6.0
        b = 0.5 - t2 / 24.0
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    S = skew(phi)
    return np.eye(3) + a * S + b * (S @ S)


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (polar factor)."""
    Q, _ = sla.polar(np.asarray(R, dtype=float))
    return Q


def is_rotation(R, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    return (R.shape == (3, 3) and np.linalg.norm(R.T @ R - np.eye(3)) < tol
            and abs(np.linalg.det(R) - 1.0) < tol)


@dataclass(frozen=True)
class ReferenceFrame:
    """Reference centroid position ``d_o``, section radius ``R_o`` and base vectors ``E`` (rows)."""

    d_o: np.ndarray
    R_o: np.ndarray
    E: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("d_o", "R_o"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        E = np.asarray(self.E, dtype=float)
        if E.shape != (3, 3) or np.linalg.norm(E @ E.T - np.eye(3)) > 1e-10:
            raise ParameterError("base vectors must be orthonormal")
        object.__setattr__(self, "E", E)

    @property
    def reference_point(self) -> np.ndarray:
        return self.d_o + self.R_o


def material_point(frame: ReferenceFrame, u, Lambda) -> np.ndarray:
    """Current position ``d_o + u + Lambda @ R_o`` of a particle of a rigid cross-section."""
    return frame.d_o + np.asarray(u, dtype=float) + np.asarray(Lambda, dtype=float) @ frame.R_o


@dataclass(frozen=True)
class BeamNodeState:
    """
    Centroid position ``d``, section rotation ``Lambda`` and 6-vector rates.

    ``velocity`` and ``acceleration`` stack translational then angular parts.
    """

    d: np.ndarray
    Lambda: np.ndarray = field(default_factory=lambda: np.eye(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(6))
    updates: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(3))
        object.__setattr__(self, "Lambda", np.asarray(self.Lambda, dtype=float).reshape(3, 3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(6))
        object.__setattr__(self, "acceleration",
                           np.asarray(self.acceleration, dtype=float).reshape(6))


def update_config(node: BeamNodeState, du, dphi) -> BeamNodeState:
    """
    ``d += du`` and ``Lambda = rot_exp(dphi) @ Lambda``.

    Every 100th update the rotation is projected back onto SO(3) to stop
    round-off drift.
    """
    d = node.d + np.asarray(du, dtype=float)
    Lam = rot_exp(dphi) @ node.Lambda
    count = node.updates + 1
    if count % REORTHO_EVERY == 0:
        Lam = orthonormalize(Lam)
    return replace(node, d=d, Lambda=Lam, updates=count)


@dataclass(frozen=True)
class BeamModel:
    """
    Uniform tensioned beam.

    ``I`` is the bending moment of area (same about both axes), ``J`` the
    torsion constant; torsion is constrained and does not enter the
    transverse model. ``boundary`` is ``"pinned"`` (both ends) or
    ``"cantilever"`` (clamped at ``z = 0``).
    """

    E: float
    A: float
    I: float
    rho: float
    length: float
    tension: float = 0.0
    n_elements: int = 50
    J: float | None = None
    boundary: str = "pinned"
    rayleigh_a: float = 0.0
    rayleigh_b: float = 0.0
    D: float | None = None

    def __post_init__(self):
        if min(self.E, self.A, self.I, self.rho, self.length) <= 0:
            raise ParameterError("E, A, I, rho and length must be positive")
        if self.tension < 0 or (self.J is not None and self.J <= 0):
            raise ParameterError("tension must be non-negative and J positive")
        if self.n_elements < 1 or (self.boundary == "pinned" and self.n_elements < 2):
            raise ParameterError("too few elements")
        if self.boundary not in ("pinned", "cantilever"):
            raise ParameterError(f"unknown boundary {self.boundary!r}")
        if self.rayleigh_a < 0 or self.rayleigh_b < 0:
            raise ParameterError("Rayleigh coefficients must be non-negative")

    @classmethod
    def riser(cls, n_elements: int = 50, **overrides) -> "BeamModel":
        """The 38 m laboratory riser (D = 27 mm, T = 3 kN); ``I`` taken equal to ``J``."""
        vals = dict(E=8.894e8, A=5.7e-4, I=4.2e-8, J=4.2e-8, rho=1630.0, length=38.0,
                    tension=3000.0, n_elements=n_elements, D=0.027)
        vals.update(overrides)
        return cls(**vals)

    @property
    def EI(self) -> float:
        return self.E * self.I

    @property
    def mass_per_length(self) -> float:
        return self.rho * self.A

    @property
    def element_length(self) -> float:
        return self.length / self.n_elements

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_nodes)

    @property
    def constrained_dofs(self) -> np.ndarray:
        """Indices into ``[w0, th0, w1, th1, ...]`` held at zero."""
        if self.boundary == "pinned":
            return np.array([0, 2 * self.n_elements])
        return np.array([0, 1])

    @property
    def free_dofs(self) -> np.ndarray:
        return np.setdiff1d(np.arange(2 * self.n_nodes), self.constrained_dofs)

    @property
    def translation_dofs(self) -> np.ndarray:
        """Positions of the nodal deflections within the free-DOF vector (one per node, -1 if fixed)."""
        pos = -np.ones(2 * self.n_nodes, dtype=int)
        pos[self.free_dofs] = np.arange(self.free_dofs.size)
        return pos[0::2]

    def expand(self, q) -> np.ndarray:
        """Nodal deflections ``(n_nodes, ...)`` from a free-DOF array, zeros at fixed nodes."""
        q = np.asarray(q, dtype=float)
        idx = self.translation_dofs
        out = np.zeros((self.n_nodes,) + q.shape[1:])
        out[idx >= 0] = q[idx[idx >= 0]]
        return out

    def tributary_lengths(self) -> np.ndarray:
        """Half the sum of the adjacent element lengths, per node."""
        le = np.full(self.n_elements, self.element_length)
        trib = np.zeros(self.n_nodes)
        trib[:-1] += 0.5 * le
        trib[1:] += 0.5 * le
        return trib


def element_matrices(EI: float, m: float, T: float, L: float):
    """Consistent mass and (bending + geometric) stiffness of one Hermite element."""
    L2 = L * L
    Kb = EI / L**3 * np.array([[12, 6 * L, -12, 6 * L],
                               [6 * L, 4 * L2, -6 * L, 2 * L2],
                               [-12, -6 * L, 12, -6 * L],
                               [6 * L, 2 * L2, -6 * L, 4 * L2]])
    Kg = T / (30 * L) * np.array([[36, 3 * L, -36, 3 * L],
                                  [3 * L, 4 * L2, -3 * L, -L2],
                                  [-36, -3 * L, 36, -3 * L],
                                  [3 * L, -L2, -3 * L, 4 * L2]])
    Me = m * L / 420 * np.array([[156, 22 * L, 54, -13 * L],
                                 [22 * L, 4 * L2, 13 * L, -3 * L2],
                                 [54, 13 * L, 156, -22 * L],
                                 [-13 * L, -3 * L2, -22 * L, 4 * L2]])
    return Me, Kb + Kg


def assemble(model: BeamModel, constrained: bool = True):
    """
    Mass and stiffness matrices of one transverse plane.

    DOFs per node are deflection and slope. With ``constrained`` the fixed
    DOFs are eliminated; otherwise the singular free-free matrices are
    returned.
    """
    nd = 2 * model.n_nodes
    M = np.zeros((nd, nd))
    K = np.zeros((nd, nd))
    Me, Ke = element_matrices(model.EI, model.mass_per_length, model.tension, model.element_length)
    for e in range(model.n_elements):
        s = slice(2 * e, 2 * e + 4)
        M[s, s] += Me
        K[s, s] += Ke
    if constrained:
        f = model.free_dofs
        M, K = M[np.ix_(f, f)], K[np.ix_(f, f)]
    return M, K


def damping_matrix(model: BeamModel, M, K) -> np.ndarray:
    return model.rayleigh_a * M + model.rayleigh_b * K


def natural_frequencies(model: BeamModel, count: int = 1) -> np.ndarray:
    """Lowest ``count`` natural frequencies [Hz] of the constrained model, ascending."""
    M, K = assemble(model)
    if not 1 <= count <= M.shape[0]:
        raise ParameterError(f"count must lie in [1, {M.shape[0]}]")
    try:
        lam = sla.eigh(K, M, eigvals_only=True, subset_by_index=[0, count - 1])
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"assembly produced an indefinite mass matrix: {exc}") from None
    if lam[0] <= 0:
        raise NumericError("assembly produced a non-positive stiffness eigenvalue")
    return np.sqrt(lam) / (2 * np.pi)


def tensioned_beam_frequency(model: BeamModel, mode: int = 1) -> float:
    """Closed-form pinned-pinned frequency [Hz] of mode ``mode``."""
    k = mode * np.pi / model.length
    m = model.mass_per_length
    return float(np.sqrt(k**2 * model.tension / m + k**4 * model.EI / m) / (2 * np.pi))


@dataclass(frozen=True)
class NewmarkState:
    """Displacement, velocity and acceleration arrays of matching shape, at time ``t``."""

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    t: float = 0.0

    @classmethod
    def at_rest(cls, shape, t: float = 0.0) -> "NewmarkState":
        z = np.zeros(shape)
        return cls(z, z.copy(), z.copy(), t)


class Newmark:
    """
    Newmark integrator with the effective stiffness factorized once.

    Works on any right-hand-side shape ``(ndof,)`` or ``(ndof, k)``, so both
    transverse planes march together.
    """

    def __init__(self, M, C, K, dt: float, beta: float = 0.25, gamma: float = 0.5):
        if dt <= 0:
            raise ParameterError("dt must be positive")
        if not (gamma >= 0.5 and 2 * beta >= gamma):
            raise ParameterError("need 2*beta >= gamma >= 1/2 for unconditional stability")
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        n = self.M.shape[0]
        self.C = np.zeros((n, n)) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
        self.dt, self.beta, self.gamma = float(dt), float(beta), float(gamma)
        a0 = 1.0 / (beta * dt * dt)
        a1 = gamma / (beta * dt)
        keff = self.K + a1 * self.C + a0 * self.M
        scale = np.abs(keff).max() if keff.size else 0.0
        if not scale > 0:
            raise ParameterError("singular effective stiffness")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self._lu = sla.lu_factor(keff, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise ParameterError(f"effective stiffness cannot be factorized: {exc}") from None
        if np.any(np.abs(np.diag(self._lu[0])) < 1e-14 * scale):
            raise ParameterError("singular effective stiffness")
        self._lu_m = None

    def initial_acceleration(self, u, v, F) -> np.ndarray:
        """``a0`` from the equation of motion at the start of a run."""
        if self._lu_m is None:
            self._lu_m = sla.lu_factor(self.M)
        return sla.lu_solve(self._lu_m, F - self.C @ v - self.K @ u)

    def predict(self, s: NewmarkState, v_new):
        """Displacement and acceleration consistent with a prescribed end-of-step velocity."""
        dt, b, g = self.dt, self.beta, self.gamma
        a_new = (v_new - s.v - dt * (1.0 - g) * s.a) / (g * dt)
        u_new = s.u + dt * s.v + dt * dt * ((0.5 - b) * s.a + b * a_new)
        return u_new, a_new

    def step(self, s: NewmarkState, F) -> NewmarkState:
        dt, b, g = self.dt, self.beta, self.gamma
        a0 = 1.0 / (b * dt * dt)
        rhs = (np.asarray(F, dtype=float)
               + self.M @ (a0 * s.u + s.v / (b * dt) + (0.5 / b - 1.0) * s.a)
               + self.C @ (g / (b * dt) * s.u + (g / b - 1.0) * s.v + dt * (0.5 * g / b - 1.0) * s.a))
        u = sla.lu_solve(self._lu, rhs)
        a = a0 * (u - s.u) - s.v / (b * dt) - (0.5 / b - 1.0) * s.a
        v = s.v + dt * ((1.0 - g) * s.a + g * a)
        return NewmarkState(u, v, a, s.t + dt)


def newmark_step(M, C, K, F_ext, state: NewmarkState, dt: float, beta: float = 0.25,
                 gamma: float = 0.5) -> NewmarkState:
    """One Newmark step. Builds a fresh factorization; use :class:`Newmark` in loops."""
    return Newmark(M, C, K, dt, beta, gamma).step(state, F_ext)


def energy(M, K, s: NewmarkState) -> float:
    """Kinetic plus strain energy, summed over all columns."""
    return float(0.5 * np.sum(s.v * (M @ s.v)) + 0.5 * np.sum(s.u * (K @ s.u)))


def static_solve(model: BeamModel, F) -> np.ndarray:
    """Constrained static deflection ``K^-1 F`` (free-DOF load vector)."""
    _, K = assemble(model)
    return sla.solve(K, np.asarray(F, dtype=float), assume_a="sym")


SNAPSHOT_HEADER = "z,displacement_IL,displacement_CF,velocity_IL,velocity_CF"


def write_snapshot(path, model: BeamModel, s: NewmarkState, fmt: str = "%.10g") -> None:
    """Per-node deflections and velocities of a two-plane state (columns IL, CF)."""
    if s.u.ndim != 2 or s.u.shape[1] != 2:
        raise DimensionError("snapshot needs a two-plane state of shape (ndof, 2)")
    d, v = model.expand(s.u), model.expand(s.v)
    table = np.column_stack([model.z, d[:, IL], d[:, CF], v[:, IL], v[:, CF]])
    np.savetxt(Path(path), table, delimiter=",", header=SNAPSHOT_HEADER, comments="", fmt=fmt)
