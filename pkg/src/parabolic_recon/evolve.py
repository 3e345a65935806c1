"""Discrete evolution family U(p, s) and its exact adjoint.

Each step is ``S_k = P_k^{-1} Q_k`` with symmetric ``P_k`` and ``Q_k``:

* backward Euler:  ``P_k = I + dt A_h(t_{k+1})``, ``Q_k = I``
* Crank-Nicolson:  ``P_k = I + dt/2 A_h(t_{k+1})``, ``Q_k = I - dt/2 A_h(t_k)``

so the adjoint ``U(p, s)^*`` is the reversed product of ``Q_k P_k^{-1}``.
A *mirrored* family runs the adjoint factors forward in time
(``S_k = Q'_k P'_k^{-1}`` with the time arguments swapped); the mirrored
family of the time-reflected field is then exactly ``U(T, 0)^*``.
"""

import csv
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import reflect_in_time
from .grid import assemble_stiffness, h1_norm, l2_inner, l2_norm
from .linalg import ConvergenceError, conjugate_gradient

SCHEMES = ("backward_euler", "crank_nicolson")
SCHEME_ALIASES = {"be": "backward_euler", "cn": "crank_nicolson"}


@dataclass(frozen=True)
class TimeMesh:
    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.steps < 1:
            raise ValueError("need at least one step")

    @property
    def dt(self):
        return (self.t_end - self.t_start) / self.steps

    @property
    def nodes(self):
        return self.t_start + np.arange(self.steps + 1) * self.dt

    def index_of(self, t):
        """Index of the first node with ``t_k >= t`` (up to rounding)."""
        return int(np.searchsorted(self.nodes, t - 1e-12 * max(1.0, abs(t))))


@dataclass(frozen=True)
class Trajectory:
    mesh: TimeMesh
    states: np.ndarray  # shape (steps + 1,) + grid.shape

    def __post_init__(self):
        if len(self.states) != self.mesh.steps + 1:
            raise ValueError("trajectory length does not match the mesh")

    @property
    def final(self):
        return self.states[-1]


class _StepFactor:
    """``c I + w A`` for a fixed ``A``, with a solve by CG or sparse LU."""

    def __init__(self, stiffness, weight, size, solver, tol):
        self.matrix = sp.csr_matrix(sp.identity(size) + weight * stiffness)
        self.solver = solver
        self.tol = tol
        self._lu = spla.splu(self.matrix.tocsc()) if solver == "direct" else None

    def apply(self, u):
        return (self.matrix @ u.ravel()).reshape(u.shape)

    def solve(self, u):
        if self._lu is not None:
            return self._lu.solve(u.ravel()).reshape(u.shape)
        x, _ = conjugate_gradient(self.apply, u, tol=self.tol)
        return x


@dataclass(frozen=True)
class EvolutionFamily:
    """Time-stepping realization of ``U(p, s)`` on a fixed mesh.

    Immutable after construction: step matrices (and LU factors when
    ``inner_solver="direct"``) are built once and only read afterwards.
    """

    field: object
    grid: object
    mesh: TimeMesh
    scheme: str = "backward_euler"
    inner_tol: float = 1e-14
    inner_solver: str = "cg"
    mirrored: bool = False
    _factors: Tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        scheme = SCHEME_ALIASES.get(self.scheme, self.scheme)
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", scheme)
        if self.inner_solver not in ("cg", "direct"):
            raise ValueError(f"unknown inner solver {self.inner_solver!r}")
        if self.field.dim != self.grid.dim:
            raise ValueError("field and grid dimensions differ")
        if self.mesh.t_start < 0 or self.mesh.t_end > self.field.horizon * (1 + 1e-12):
            raise ValueError("mesh extends beyond the field horizon")
        object.__setattr__(self, "_factors", self._build())

    def _build(self):
        mesh, n = self.mesh, self.grid.size
        t_nodes = mesh.nodes
        stiff = [assemble_stiffness(self.field, self.grid, min(t, self.field.horizon)) for t in t_nodes]
        dt = mesh.dt
        factors = []
        for k in range(mesh.steps):
            # implicit at the step's target time; mirrored families swap ends
            imp, exp = (k, k + 1) if self.mirrored else (k + 1, k)
            if self.scheme == "backward_euler":
                P = _StepFactor(stiff[imp], dt, n, self.inner_solver, self.inner_tol)
                Q = None
            else:
                P = _StepFactor(stiff[imp], 0.5 * dt, n, self.inner_solver, self.inner_tol)
                Q = sp.csr_matrix(sp.identity(n) - 0.5 * dt * stiff[exp])
            factors.append((P, Q))
        return tuple(factors)

    @property
    def steps(self):
        return self.mesh.steps

    @staticmethod
    def _apply_q(Q, u):
        return u if Q is None else (Q @ u.ravel()).reshape(u.shape)

    def step(self, k, u):
        """One forward step ``u -> S_k u``."""
        if not 0 <= k < self.steps:
            raise IndexError(f"step index {k} outside [0, {self.steps})")
        P, Q = self._factors[k]
        if self.mirrored:
            return self._apply_q(Q, P.solve(u))
        return P.solve(self._apply_q(Q, u))

    def step_adjoint(self, k, v):
        """``v -> S_k^* v``."""
        if not 0 <= k < self.steps:
            raise IndexError(f"step index {k} outside [0, {self.steps})")
        P, Q = self._factors[k]
        if self.mirrored:
            return P.solve(self._apply_q(Q, v))
        return self._apply_q(Q, P.solve(v))

    def _check_range(self, k_s, k_p):
        if k_p is None:
            k_p = self.steps
        if not 0 <= k_s <= k_p <= self.steps:
            raise ValueError(f"need 0 <= k_s <= k_p <= {self.steps}, got {k_s}, {k_p}")
        return k_p

    def apply_forward(self, u, k_s=0, k_p=None):
        """``U(t_{k_p}, t_{k_s}) u``; the identity when ``k_s == k_p``."""
        k_p = self._check_range(k_s, k_p)
        u = self.grid.check(u).copy()
        for k in range(k_s, k_p):
            u = self.step(k, u)
        return u

    def apply_adjoint(self, v, k_s=0, k_p=None):
        """``U(t_{k_p}, t_{k_s})^* v``, the discrete ``V(t_{k_s}, t_{k_p})``."""
        k_p = self._check_range(k_s, k_p)
        v = self.grid.check(v).copy()
        for k in reversed(range(k_s, k_p)):
            v = self.step_adjoint(k, v)
        return v

    def record(self, u0):
        states = np.empty((self.steps + 1,) + self.grid.shape)
        u = self.grid.check(u0).copy()
        states[0] = u
        for k in range(self.steps):
            u = self.step(k, u)
            states[k + 1] = u
        return Trajectory(self.mesh, states)

    def reflected(self):
        """Mirrored family of the time-reflected field on ``[T, 2T]``.

        Running it forward from ``g`` at ``T`` yields ``U(T, 0)^* g`` at ``2T``.
        """
        T = self.field.horizon
        if self.mesh.t_start != 0.0 or self.mesh.t_end != T:
            raise ValueError("reflection needs a mesh covering [0, T]")
        return EvolutionFamily(
            field=reflect_in_time(self.field),
            grid=self.grid,
            mesh=TimeMesh(T, 2.0 * T, self.steps),
            scheme=self.scheme,
            inner_tol=self.inner_tol,
            inner_solver=self.inner_solver,
            mirrored=not self.mirrored,
        )


def estimate_M(family, iterations=50, k_s=0, k_p=None, seed=0):
    """Power-iteration estimate of ``||U(t_{k_p}, t_{k_s})||`` in the discrete L2 norm.

    Returns the square root of the largest Rayleigh quotient of ``U^* U``
    seen over ``iterations`` sweeps, so the estimate never decreases with
    more iterations.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    k_p = family._check_range(k_s, k_p)
    grid = family.grid
    if k_s == k_p:
        return 1.0
    x = np.random.default_rng(seed).uniform(size=grid.shape)
    x /= l2_norm(grid, x)
    best = 0.0
    for _ in range(iterations):
        y = family.apply_forward(x, k_s, k_p)
        best = max(best, l2_inner(grid, y, y) / l2_inner(grid, x, x))
        z = family.apply_adjoint(y, k_s, k_p)
        nz = l2_norm(grid, z)
        if nz == 0.0:
            break
        x = z / nz
    return float(np.sqrt(best))


def write_trajectory_csv(path, traj, grid, norms=False):
    """Trajectory export.

    Header line ``t,u_0,...,u_{N-1}`` (nodal values, C order) or, with
    ``norms=True``, ``t,l2_norm,h1_norm``; one row per mesh node.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if norms:
            w.writerow(["t", "l2_norm", "h1_norm"])
            for t, u in zip(traj.mesh.nodes, traj.states):
                w.writerow([repr(float(t)), repr(l2_norm(grid, u)), repr(h1_norm(grid, u))])
        else:
            w.writerow(["t"] + [f"u_{i}" for i in range(grid.size)])
            for t, u in zip(traj.mesh.nodes, traj.states):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in u.ravel()])


__all__ = [
    "ConvergenceError",
    "EvolutionFamily",
    "TimeMesh",
    "Trajectory",
    "estimate_M",
    "write_trajectory_csv",
]
