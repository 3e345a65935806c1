"""Regularized reconstruction of the initial state from a final-time measurement.

The reconstruction ``u_{g,delta}`` solves

    alpha (A_h(0) u + u) + U(T,0)^* U(T,0) u = U(T,0)^* g,   alpha = delta M kappa,

i.e. it minimizes the Tikhonov functional

    (alpha/2) (a(0; u, u) + |u|^2) + (1/2) |U(T,0) u - g|^2.

The operator on the left is symmetric positive definite with
``<B u, u> >= alpha kappa |u|_{H1}^2`` and is only ever applied matrix-free.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .evolve import TimeMesh, Trajectory, estimate_M
from .grid import apply_stiffness, h1_norm, hminus1_norm, l2_inner, l2_norm
from .linalg import conjugate_gradient

ALPHA_FLOOR = 1e-14
OUTER_TOL = 1e-13


@dataclass
class ReconstructionProblem:
    family: object  # EvolutionFamily on [0, T]
    g: np.ndarray
    delta: float
    E: float
    alpha_floor: float = ALPHA_FLOOR
    outer_tol: float = OUTER_TOL
    max_outer_iter: Optional[int] = None
    M: Optional[float] = None  # None: 1 for backward Euler, power iteration otherwise

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if not self.E > 0:
            raise ValueError("E must be positive")
        self.g = self.family.grid.check(self.g)

    @property
    def grid(self):
        return self.family.grid

    @property
    def kappa(self):
        return self.family.field.kappa

    def evolution_bound(self):
        if self.M is None:
            if self.family.scheme == "backward_euler":
                self.M = 1.0
            else:
                self.M = estimate_M(self.family, iterations=50)
        return self.M


@dataclass
class ReconstructionResult:
    u0: np.ndarray
    alpha: float
    trajectory: Trajectory
    cg_iterations: int
    cg_residual: float
    functional_value: float
    M: float
    degenerate_alpha: bool = False
    energy_history: List[float] = field(default_factory=list)
    method: str = "normal_equation"

    def diagnostics(self):
        return {
            "method": self.method,
            "alpha": self.alpha,
            "M": self.M,
            "degenerate_alpha": self.degenerate_alpha,
            "cg_iterations": self.cg_iterations,
            "cg_residual": self.cg_residual,
            "functional_value": self.functional_value,
        }


def choose_alpha(delta, M, kappa, alpha_floor=ALPHA_FLOOR):
    """The a-priori rule ``alpha = delta M kappa``, floored at ``alpha_floor``."""
    if not M > 0:
        raise ValueError("M must be positive")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return max(delta * M * kappa, alpha_floor)


def regularization_term(problem, u):
    """``A_h(0) u + u``, the operator of ``a(0; ., .) + <., .>``."""
    fam = problem.family
    return apply_stiffness(fam.field, fam.grid, fam.mesh.t_start, u) + u


def apply_B_alpha(problem, alpha, u):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    fam = problem.family
    u = fam.grid.check(u)
    return alpha * regularization_term(problem, u) + fam.apply_adjoint(fam.apply_forward(u))


def right_hand_side(problem):
    """``U(T, 0)^* g``."""
    return problem.family.apply_adjoint(problem.g)


def functional(problem, alpha, u):
    grid = problem.grid
    misfit = problem.family.apply_forward(u) - problem.g
    reg = l2_inner(grid, regularization_term(problem, u), u)
    return 0.5 * alpha * reg + 0.5 * l2_inner(grid, misfit, misfit)


def functional_gradient(problem, alpha, u):
    return apply_B_alpha(problem, alpha, u) - right_hand_side(problem)


def _alpha_for(problem, alpha):
    M = problem.evolution_bound()
    if alpha is None:
        alpha = choose_alpha(problem.delta, M, problem.kappa, problem.alpha_floor)
    degenerate = problem.delta * M * problem.kappa < problem.alpha_floor
    return alpha, M, degenerate


def solve(problem, alpha=None):
    """Matrix-free CG on the normal equation; ``alpha`` defaults to the a-priori rule."""
    alpha, M, degenerate = _alpha_for(problem, alpha)
    rhs = right_hand_side(problem)
    u0, info = conjugate_gradient(
        lambda u: apply_B_alpha(problem, alpha, u),
        rhs,
        tol=problem.outer_tol,
        maxiter=problem.max_outer_iter,
        track_energy=True,
    )
    return ReconstructionResult(
        u0=u0,
        alpha=alpha,
        trajectory=problem.family.record(u0),
        cg_iterations=info.iterations,
        cg_residual=info.residual,
        functional_value=functional(problem, alpha, u0),
        M=M,
        degenerate_alpha=degenerate,
        energy_history=info.energy,
    )


def qbv_reconstruct(problem, alpha=None):
    """Nonlocal quasi-boundary value route to the same reconstruction.

    1. Reflect the coefficients to ``[0, 2T]``.
    2. Evolve ``eta(T) = g`` forward over ``[T, 2T]``; ``g2 = eta(2T)``.
    3. Solve ``alpha (B(0) w(0) + w(0)) + w(2T) = g2`` for ``w(0)``, where
       ``w`` solves the reflected equation on ``[0, 2T]``.

    The returned trajectory is ``w`` on the ``2K + 1`` nodes of ``[0, 2T]``.
    """
    alpha, M, degenerate = _alpha_for(problem, alpha)
    fam = problem.family
    second_half = fam.reflected()
    g2 = second_half.apply_forward(problem.g)

    def nonlocal_operator(w0):
        w_T = fam.apply_forward(w0)
        return alpha * regularization_term(problem, w0) + second_half.apply_forward(w_T)

    w0, info = conjugate_gradient(
        nonlocal_operator, g2, tol=problem.outer_tol, maxiter=problem.max_outer_iter,
        track_energy=True,
    )
    first = fam.record(w0).states
    second = second_half.record(first[-1]).states
    T = fam.mesh.t_end
    traj = Trajectory(TimeMesh(fam.mesh.t_start, 2.0 * T, 2 * fam.steps), np.concatenate([first, second[1:]]))
    return ReconstructionResult(
        u0=w0,
        alpha=alpha,
        trajectory=traj,
        cg_iterations=info.iterations,
        cg_residual=info.residual,
        functional_value=functional(problem, alpha, w0),
        M=M,
        degenerate_alpha=degenerate,
        energy_history=info.energy,
        method="quasi_boundary_value",
    )


def qbv_rhs(problem):
    """``g2 = eta(2T)`` from the forward problem on the reflected interval."""
    return problem.family.reflected().apply_forward(problem.g)


def lax_milgram_bound(problem, alpha, rhs=None):
    """``||U^* g||_{H^-1} / (kappa alpha)``, the a-priori H1 bound on the solution."""
    if rhs is None:
        rhs = right_hand_side(problem)
    return hminus1_norm(problem.grid, rhs) / (problem.kappa * alpha)


def error_bounds(problem, result, u_true_trajectory):
    """Both a-priori error estimates for a run with known ground truth.

    Returns a dict with left- and right-hand sides of

    * ``|u(0) - ubar(0)|_{H1} <= (1 + E) / kappa^2``
    * ``|u(T) - ubar(T)|_2 <= sqrt(M) / kappa (1 + E) sqrt(delta)``

    and the quantity ``sqrt(M)/kappa (1+E) sqrt(delta)`` that has to stay
    below the stability threshold for the logarithmic rate to apply.
    """
    grid, kappa, E = problem.grid, problem.kappa, problem.E
    M = result.M
    h1_lhs = h1_norm(grid, result.u0 - u_true_trajectory.states[0])
    h1_rhs = (1.0 + E) / kappa ** 2
    l2_lhs = l2_norm(grid, result.trajectory.states[problem.family.steps] - u_true_trajectory.states[-1])
    l2_rhs = math.sqrt(M) / kappa * (1.0 + E) * math.sqrt(problem.delta)
    return {
        "h1_bound_lhs": h1_lhs,
        "h1_bound_rhs": h1_rhs,
        "h1_bound_ok": bool(h1_lhs <= h1_rhs),
        "l2T_bound_lhs": l2_lhs,
        "l2T_bound_rhs": l2_rhs,
        "l2T_bound_ok": bool(l2_lhs <= l2_rhs),
        "smallness_lhs": l2_rhs,
    }
