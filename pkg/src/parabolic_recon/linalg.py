"""Conjugate gradients shared by the step solves and the outer normal equation."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np


class ConvergenceError(RuntimeError):
    """CG hit its iteration cap or met non-positive curvature."""

    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, relative residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass
class CGInfo:
    iterations: int
    residual: float  # true relative residual ||b - Ax|| / ||b|| at exit
    energy: List[float] = field(default_factory=list)


def conjugate_gradient(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float = 1e-10,
    maxiter: Optional[int] = None,
    track_energy: bool = False,
):
    """Solve ``apply(x) = b`` for a symmetric positive definite operator.

    Zero initial guess, relative-residual stopping. When the recursive
    residual reports convergence the true residual is recomputed; if it has
    drifted above ``tol`` the iteration restarts from the current iterate.

    With ``track_energy`` the quadratic ``0.5 <Ax, x> - <b, x>`` is recorded
    after every iteration; for exact arithmetic it is strictly decreasing.

    Returns
    -------
    x : ndarray
    info : CGInfo
    """
    shape = b.shape
    b = np.asarray(b, dtype=float).ravel()
    n = b.size
    if maxiter is None:
        maxiter = 10 * n
    bnorm = np.sqrt(b @ b)
    x = np.zeros_like(b)
    info = CGInfo(iterations=0, residual=0.0)
    if bnorm == 0.0:
        return x.reshape(shape), info

    def op(v):
        return np.asarray(apply(v.reshape(shape)), dtype=float).ravel()

    threshold = tol * bnorm
    r = b.copy()
    p = r.copy()
    rr = r @ r
    it = 0
    while True:
        while it < maxiter and np.sqrt(rr) > threshold:
            q = op(p)
            curvature = p @ q
            if not curvature > 0.0:
                raise ConvergenceError("non-positive curvature", it, np.sqrt(rr) / bnorm)
            step = rr / curvature
            x += step * p
            r -= step * q
            rr_new = r @ r
            p = r + (rr_new / rr) * p
            rr = rr_new
            it += 1
            if track_energy:
                info.energy.append(-0.5 * (r @ x + b @ x))
        r = b - op(x)
        rr = r @ r
        true_res = np.sqrt(rr) / bnorm
        if true_res <= tol:
            break
        if it >= maxiter:
            raise ConvergenceError("CG did not converge", it, true_res)
        p = r.copy()
    info.iterations = it
    info.residual = float(true_res)
    return x.reshape(shape), info
