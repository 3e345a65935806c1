"""Manufactured-solution harness, noise injection, rate fits and the spectral oracle."""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import h1_norm, l2_norm
from .reconstruct import ReconstructionProblem, error_bounds, solve

DEFAULT_DELTAS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
DEFAULT_SEEDS = (0, 1, 2)


# ---------------------------------------------------------------------------
# ground truth


def initial_state(kind, grid, seed=0, **params):
    """Named initial states used as ground truth.

    ``sine`` (``wavenumber``), ``tent`` (periodic triangle wave, Fourier
    coefficients ~ m^-2), ``bump`` (smooth periodic bump) and ``random``
    (seeded, Fourier coefficients decaying like ``m^-decay``).
    """
    x = grid.coordinates()[..., 0]
    k = 2.0 * math.pi / grid.side
    if kind == "zero":
        return np.zeros(grid.shape)
    if kind == "sine":
        return np.sin(k * float(params.get("wavenumber", 1)) * x)
    if kind == "tent":
        r = np.mod(x / grid.side, 1.0)
        return float(params.get("height", 1.0)) * (1.0 - 2.0 * np.abs(2.0 * r - 1.0))
    if kind == "bump":
        width = float(params.get("width", 4.0))
        return np.exp(width * (np.cos(k * x) - 1.0))
    if kind == "random":
        decay = float(params.get("decay", 2.0))
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        m = np.sqrt(sum(np.meshgrid(*[np.fft.fftfreq(grid.n, 1.0 / grid.n) ** 2] * grid.dim, indexing="ij")))
        coeffs *= np.where(m > 0, np.maximum(m, 1.0) ** -decay, 0.0)
        u = np.real(np.fft.ifftn(coeffs))
        return u / np.max(np.abs(u))
    raise ValueError(f"unknown initial state {kind!r}")


@dataclass
class ManufacturedCase:
    family: object
    u0_true: np.ndarray

    @property
    def field(self):
        return self.family.field

    @property
    def grid(self):
        return self.family.grid

    @property
    def mesh(self):
        return self.family.mesh

    @property
    def E(self):
        return h1_norm(self.grid, self.u0_true)


def manufacture(case):
    """Ground-truth trajectory and its a-priori bound ``E = |ubar(0)|_{H1}``."""
    traj = case.family.record(case.u0_true)
    return traj, h1_norm(case.grid, traj.states[0])


@dataclass(frozen=True)
class NoiseSpec:
    seed: int
    target_delta: float


def add_noise(grid, uT, spec):
    """``g = uT + delta xi / |xi|_2`` with seeded standard-normal ``xi``; ``|g - uT|_2 = delta``."""
    if not spec.target_delta > 0:
        raise ValueError("delta must be positive")
    seed = spec.seed
    while True:
        xi = np.random.default_rng(seed).standard_normal(grid.shape)
        nxi = l2_norm(grid, xi)
        if nxi > 0:
            break
        seed += 1
    return uT + spec.target_delta * xi / nxi


def error_metrics(grid, u, u_bar, t_star):
    if u.mesh != u_bar.mesh:
        raise ValueError("trajectories live on different meshes")
    per_node = np.array([l2_norm(grid, a - b) for a, b in zip(u.states, u_bar.states)])
    tail = per_node[u.mesh.nodes >= t_star - 1e-12 * max(1.0, abs(t_star))]
    return float(per_node.max()), float(tail.max()) if tail.size else 0.0, per_node


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class LogRateFit:
    K: float
    theta: float
    residual: float
    no_decay: bool = False


@dataclass
class HoelderFit:
    C: float
    beta: float
    residual: float


@dataclass
class IntermediateRateFit:
    K: float
    N: float
    mu: float
    residual: float
    non_monotone: bool = False


def _fit_inputs(deltas, errors, minimum):
    d = np.asarray(deltas, dtype=float)
    e = np.asarray(errors, dtype=float)
    if d.shape != e.shape or d.ndim != 1:
        raise ValueError("deltas and errors must be aligned 1-D sequences")
    if d.size < minimum:
        raise ValueError(f"need at least {minimum} points, got {d.size}")
    if np.any(d <= 0) or np.any(d >= 1):
        raise ValueError("deltas must lie in (0, 1)")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    return d, e


def _rms(r):
    return float(np.sqrt(np.mean(np.square(r))))


def fit_log_rate(deltas, errors):
    """Least squares for ``log e = log K - theta log|log delta|``."""
    d, e = _fit_inputs(deltas, errors, 3)
    X = np.column_stack([np.ones_like(d), np.log(np.abs(np.log(d)))])
    coef, *_ = np.linalg.lstsq(X, np.log(e), rcond=None)
    resid = np.log(e) - X @ coef
    theta = float(-coef[1])
    no_decay = abs(theta) < 1e-12 * max(1.0, abs(coef[0]))
    if no_decay:
        theta = 0.0
    return LogRateFit(K=float(math.exp(coef[0])), theta=theta, residual=_rms(resid), no_decay=bool(no_decay))


def fit_hoelder_rate(deltas, errors):
    """Least squares for ``log e = log C + beta log delta``."""
    d, e = _fit_inputs(deltas, errors, 2)
    X = np.column_stack([np.ones_like(d), np.log(d)])
    coef, *_ = np.linalg.lstsq(X, np.log(e), rcond=None)
    return HoelderFit(C=float(math.exp(coef[0])), beta=float(coef[1]), residual=_rms(np.log(e) - X @ coef))


def _intermediate_given_K(logK, ld, le):
    y = np.log(logK - le)
    X = np.column_stack([np.ones_like(ld), np.log(ld)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    N, mu = math.exp(coef[0]), float(coef[1])
    resid = le - (logK - N * ld ** mu)
    return N, mu, _rms(resid)


def fit_intermediate_rate(deltas, errors, monotone_slack=0.1):
    """Fit ``e = K exp(-N |log delta|^mu)``.

    For fixed ``K`` the model is linear in ``log(log K - log e)``; ``K`` is
    then refined by a bounded one-dimensional search (seeded at 1.5 times
    the largest error) minimizing the RMS residual in ``log e``.
    """
    d, e = _fit_inputs(deltas, errors, 4)
    order = np.argsort(-d)
    d, e = d[order], e[order]
    ld, le = np.abs(np.log(d)), np.log(e)
    non_monotone = bool(np.any(e[1:] > e[:-1] * (1 + monotone_slack)))
    top = float(le.max())

    # log K = top + exp(s): K stays strictly above every error
    def objective(s):
        return _intermediate_given_K(top + math.exp(s), ld, le)[2]

    lo, hi = -20.0, 6.0
    spacing = (hi - lo) / 260
    candidates = np.append(np.linspace(lo, hi, 261), math.log(math.log(1.5)))
    vals = [objective(s) for s in candidates]
    best = candidates[int(np.argmin(vals))]
    res = minimize_scalar(
        objective, bounds=(max(lo, best - spacing), min(hi, best + spacing)),
        method="bounded", options={"xatol": 1e-12, "maxiter": 1000},
    )
    s_best = res.x if res.fun <= min(vals) else best
    logK = top + math.exp(s_best)
    N, mu, r = _intermediate_given_K(logK, ld, le)
    return IntermediateRateFit(K=float(math.exp(logK)), N=float(N), mu=float(mu), residual=r, non_monotone=non_monotone)


# ---------------------------------------------------------------------------
# spectral oracle


def step_amplification(symbol, dt, steps, scheme):
    """Per-mode amplification ``sigma`` of ``steps`` constant-coefficient steps."""
    if scheme in ("backward_euler", "be"):
        per_step = 1.0 / (1.0 + dt * symbol)
    elif scheme in ("crank_nicolson", "cn"):
        per_step = (1.0 - 0.5 * dt * symbol) / (1.0 + 0.5 * dt * symbol)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return per_step ** steps


def spectral_oracle(alpha, g, fld, grid, mesh, scheme="backward_euler"):
    """Closed-form reconstruction for a constant scalar field, mode by mode.

    ``u0_k = sigma_k g_k / (alpha (1 + lambda_k) + sigma_k^2)`` with
    ``lambda_k`` the symbol of the discrete stiffness and ``sigma_k`` the
    amplification of the whole time-stepping sweep.
    """
    if not fld.is_constant:
        raise ValueError("the spectral oracle needs a constant field")
    lam = grid.laplacian_symbol(fld.params["c"])
    sigma = step_amplification(lam, mesh.dt, mesh.steps, scheme)
    gh = np.fft.fftn(grid.check(g))
    uh = sigma * gh / (alpha * (1.0 + lam) + sigma ** 2)
    return np.real(np.fft.ifftn(uh))


# ---------------------------------------------------------------------------
# stability probe


def stability_probe(family, u0, v0s, thetas=(0.05, 0.1, 0.25, 0.5, 1.0), t_star=None):
    """Empirical conditional-stability table for pairs ``(u0, v0)``.

    For every ``v0`` records the final gap ``|u(T) - v(T)|_2``, the sup gap
    over ``[0, T]`` and ``sup_gap |log final_gap|^theta`` for each theta.
    A theta is reported as bounded when the ratio does not grow as the
    final gap shrinks.
    """
    grid = family.grid
    u_traj = family.record(u0)
    rows = []
    for v0 in v0s:
        v_traj = family.record(v0)
        sup_gap, tail_gap, _ = error_metrics(grid, u_traj, v_traj, family.mesh.t_end if t_star is None else t_star)
        final = l2_norm(grid, u_traj.final - v_traj.final)
        row = {"final_gap": final, "sup_gap": sup_gap, "tail_gap": tail_gap, "flag_final_gap_ge_1": final >= 1.0}
        for th in thetas:
            if final == 0.0:
                row[f"ratio_theta_{th}"] = 0.0
            elif final >= 1.0:
                row[f"ratio_theta_{th}"] = float("nan")
            else:
                row[f"ratio_theta_{th}"] = sup_gap * abs(math.log(final)) ** th
        rows.append(row)
    rows.sort(key=lambda r: -r["final_gap"])
    bounded = {}
    for th in thetas:
        vals = [r[f"ratio_theta_{th}"] for r in rows if 0 < r["final_gap"] < 1]
        bounded[th] = bool(len(vals) < 2 or vals[-1] <= vals[0] * (1 + 1e-9))
    return {"rows": rows, "bounded": bounded}


# ---------------------------------------------------------------------------
# delta sweeps

SWEEP_COLUMNS = (
    "delta", "seed", "alpha", "sup_error", "tail_error",
    "h1_bound_lhs", "h1_bound_rhs", "l2T_bound_lhs", "l2T_bound_rhs", "cg_iters",
)


@dataclass
class RateFitReport:
    deltas: List[float]
    errors_sup: List[float]
    errors_tail: List[float]
    fitted_log: LogRateFit
    fitted_hoelder: HoelderFit
    fitted_intermediate: Optional[IntermediateRateFit]
    t_star: float
    tail_ratios: List[float] = field(default_factory=list)

    def to_dict(self):
        out = {
            "deltas": self.deltas,
            "errors_sup": self.errors_sup,
            "errors_tail": self.errors_tail,
            "tail_ratios": self.tail_ratios,
            "t_star": self.t_star,
            "fitted_log": vars(self.fitted_log),
            "fitted_hoelder": vars(self.fitted_hoelder),
            "fitted_intermediate": None if self.fitted_intermediate is None else vars(self.fitted_intermediate),
        }
        out["log_beats_hoelder"] = self.fitted_log.residual < self.fitted_hoelder.residual
        return out


def run_point(case, truth, delta, seed, t_star):
    """Reconstruct from one noisy measurement and score it against the truth."""
    grid = case.grid
    g = add_noise(grid, truth.final, NoiseSpec(seed, delta))
    problem = ReconstructionProblem(case.family, g, delta, E=max(case.E, 1e-300))
    result = solve(problem)
    sup_err, tail_err, _ = error_metrics(grid, result.trajectory, truth, t_star)
    bounds = error_bounds(problem, result, truth)
    return {
        "delta": delta,
        "seed": seed,
        "alpha": result.alpha,
        "sup_error": sup_err,
        "tail_error": tail_err,
        "h1_bound_lhs": bounds["h1_bound_lhs"],
        "h1_bound_rhs": bounds["h1_bound_rhs"],
        "l2T_bound_lhs": bounds["l2T_bound_lhs"],
        "l2T_bound_rhs": bounds["l2T_bound_rhs"],
        "cg_iters": result.cg_iterations,
    }


def sweep(case, deltas=DEFAULT_DELTAS, seeds=DEFAULT_SEEDS, t_star=None, jobs=1):
    """Reconstruction errors over a grid of noise levels and seeds.

    Points are independent; with ``jobs > 1`` they run on a thread pool and
    are merged back in (delta, seed) order.
    """
    if t_star is None:
        t_star = 0.25 * case.mesh.t_end
    truth, _ = manufacture(case)
    tasks = [(float(d), int(s)) for d in deltas for s in seeds]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda ds: run_point(case, truth, ds[0], ds[1], t_star), tasks))
    else:
        rows = [run_point(case, truth, d, s, t_star) for d, s in tasks]
    return rows


def summarize(rows, t_star):
    """Average errors per delta and fit the rate models."""
    deltas = sorted({r["delta"] for r in rows}, reverse=True)
    sup = [float(np.mean([r["sup_error"] for r in rows if r["delta"] == d])) for d in deltas]
    tail = [float(np.mean([r["tail_error"] for r in rows if r["delta"] == d])) for d in deltas]
    inter = fit_intermediate_rate(deltas, tail) if len(deltas) >= 4 else None
    return RateFitReport(
        deltas=deltas,
        errors_sup=sup,
        errors_tail=tail,
        fitted_log=fit_log_rate(deltas, sup),
        fitted_hoelder=fit_hoelder_rate(deltas, sup),
        fitted_intermediate=inter,
        t_star=t_star,
        tail_ratios=[t / s for t, s in zip(tail, sup)],
    )


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])


def read_sweep_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SWEEP_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            row = {c: float(rec[c]) for c in SWEEP_COLUMNS}
            row["seed"] = int(row["seed"])
            row["cg_iters"] = int(row["cg_iters"])
            rows.append(row)
    return rows
