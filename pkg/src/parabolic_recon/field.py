"""Time-dependent coefficient fields a_jk(t, x) on a periodic box.

A field is a symmetric matrix-valued evaluator together with the constants
that the reconstruction and its error bounds depend on: the ellipticity
constant ``kappa``, the Log-Lipschitz seminorm in time and the spatial
Lipschitz/amplitude bound. Built-in families are small picklable callables
so fields can be shared between threads and processes.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


def log_lip_modulus(s):
    """Log-Lipschitz modulus ``s (1 + |log s|)`` on ``[0, 1]``, zero at ``s = 0``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
        raise ValueError("log_lip_modulus is defined on [0, 1] only")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s_arr > 0.0, s_arr * (1.0 - np.log(np.where(s_arr > 0.0, s_arr, 1.0))), 0.0)
    if np.ndim(s) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric, uniformly elliptic coefficient matrix on ``[0, horizon] x torus``.

    ``entries(t, x)`` takes a scalar time and points of shape ``(..., dim)``
    and returns matrices of shape ``(..., dim, dim)``.
    """

    dim: int
    horizon: float
    kappa: float
    entries: Callable[[float, np.ndarray], np.ndarray]
    declared_A_LL: float
    declared_A: float
    side: float = TWO_PI
    family: str = "custom"
    params: Dict[str, float] = dc_field(default_factory=dict)
    # times at which the time modulus is tight; sampling plans include them
    special_times: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.declared_A_LL < 0 or self.declared_A < 0:
            raise ValueError("declared bounds must be nonnegative")

    def __call__(self, t, x):
        return self.entries(t, np.asarray(x, dtype=float))

    @property
    def is_constant(self):
        return self.family == "constant"


# ---------------------------------------------------------------------------
# built-in families


def _scalar_to_matrix(values, dim):
    return values[..., None, None] * np.eye(dim)


@dataclass(frozen=True)
class _Constant:
    c: float
    dim: int

    def __call__(self, t, x):
        return _scalar_to_matrix(np.full(x.shape[:-1], self.c), self.dim)


@dataclass(frozen=True)
class _Autonomous:
    mean: float
    amp: float
    wavenumber: float
    side: float
    dim: int
    shear: float = 0.0

    def __call__(self, t, x):
        k = TWO_PI * self.wavenumber / self.side
        s = self.mean + self.amp * np.sin(k * x[..., 0])
        out = _scalar_to_matrix(s, self.dim)
        if self.dim == 2 and self.shear:
            off = self.shear * np.cos(k * x[..., 1])
            out[..., 0, 1] = off
            out[..., 1, 0] = off
        return out


@dataclass(frozen=True)
class _LipschitzT:
    beta: float
    amp: float
    wavenumber: float
    side: float
    dim: int

    def __call__(self, t, x):
        k = TWO_PI * self.wavenumber / self.side
        s = 1.0 + self.beta * t + self.amp * np.sin(k * x[..., 0])
        return _scalar_to_matrix(s, self.dim)


@dataclass(frozen=True)
class _LogLipT:
    beta: float
    t0: float
    amp: float
    wavenumber: float
    side: float
    dim: int

    def __call__(self, t, x):
        k = TWO_PI * self.wavenumber / self.side
        bump = self.beta * log_lip_modulus(min(abs(t - self.t0), 1.0))
        s = 1.0 + bump + self.amp * np.sin(k * x[..., 0])
        return _scalar_to_matrix(s, self.dim)


def _check_amp(amp):
    if not 0.0 <= amp < 1.0:
        raise ValueError(f"amp must lie in [0, 1) to keep the field elliptic, got {amp}")


def builtin(kind, dim=1, horizon=1.0, side=TWO_PI, **params):
    """Construct one of the test families with correctly declared constants.

    Families
    --------
    constant(c)
        ``a = c I``.
    autonomous(mean=1, amp=0.5, wavenumber=1, shear=0)
        ``a = (mean + amp sin(k x_1)) I`` plus an optional off-diagonal
        ``shear cos(k x_2)`` in 2D.
    lipschitz_t(beta=1, amp=0, wavenumber=1)
        ``a = (1 + beta t + amp sin(k x_1)) I``.
    loglip_t(beta=0.5, t0=horizon/2, amp=0, wavenumber=1)
        ``a = (1 + beta mu(min(|t - t0|, 1)) + amp sin(k x_1)) I`` with ``mu``
        the Log-Lipschitz modulus; Log-Lipschitz in t but not Lipschitz at t0.
    """
    common = dict(dim=dim, horizon=float(horizon), side=float(side), family=kind)
    if kind == "constant":
        c = float(params.pop("c", 1.0))
        _no_extra(kind, params)
        if c <= 0:
            raise ValueError("constant field needs c > 0")
        return CoefficientField(
            kappa=min(c, 1.0 / c), entries=_Constant(c, dim), declared_A_LL=0.0,
            declared_A=c, params={"c": c}, **common,
        )

    amp = float(params.pop("amp", 0.5 if kind == "autonomous" else 0.0))
    wavenumber = float(params.pop("wavenumber", 1.0))
    _check_amp(amp)
    k = TWO_PI * wavenumber / side

    if kind == "autonomous":
        mean = float(params.pop("mean", 1.0))
        shear = float(params.pop("shear", 0.0))
        _no_extra(kind, params)
        if shear and dim != 2:
            raise ValueError("shear is only meaningful for dim=2")
        lo, hi = mean - amp - abs(shear), mean + amp + abs(shear)
        if lo <= 0:
            raise ValueError("autonomous field is not elliptic for these parameters")
        return CoefficientField(
            kappa=min(lo, 1.0 / hi, 1.0),
            entries=_Autonomous(mean, amp, wavenumber, side, dim, shear),
            declared_A_LL=0.0,
            declared_A=max(mean + amp, abs(shear), (amp + abs(shear)) * k),
            params={"mean": mean, "amp": amp, "wavenumber": wavenumber, "shear": shear},
            **common,
        )

    if kind == "lipschitz_t":
        beta = float(params.pop("beta", 1.0))
        _no_extra(kind, params)
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        hi = 1.0 + beta * horizon + amp
        return CoefficientField(
            kappa=min(1.0 - amp, 1.0 / hi),
            entries=_LipschitzT(beta, amp, wavenumber, side, dim),
            declared_A_LL=beta,
            declared_A=max(hi, amp * k),
            params={"beta": beta, "amp": amp, "wavenumber": wavenumber},
            **common,
        )

    if kind == "loglip_t":
        beta = float(params.pop("beta", 0.5))
        t0 = float(params.pop("t0", 0.5 * horizon))
        _no_extra(kind, params)
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 0.0 <= t0 <= horizon:
            raise ValueError("t0 must lie in [0, horizon]")
        hi = 1.0 + beta + amp
        return CoefficientField(
            kappa=min(1.0 - amp, 1.0 / hi),
            entries=_LogLipT(beta, t0, amp, wavenumber, side, dim),
            declared_A_LL=beta,
            declared_A=max(hi, amp * k),
            params={"beta": beta, "t0": t0, "amp": amp, "wavenumber": wavenumber},
            special_times=(t0,),
            **common,
        )

    raise ValueError(f"unknown field family {kind!r}")


def _no_extra(kind, params):
    if params:
        raise ValueError(f"unexpected parameters for {kind}: {sorted(params)}")


# ---------------------------------------------------------------------------
# time reflection


@dataclass(frozen=True)
class _Reflected:
    base: Callable
    horizon: float

    def __call__(self, t, x):
        if t <= self.horizon:
            return self.base(t, x)
        return self.base(2.0 * self.horizon - t, x)


def reflect_in_time(fld):
    """Extend ``fld`` to ``[0, 2T]`` by ``b(t) = a(2T - t)`` for ``t > T``.

    Reflection does not increase the Log-Lipschitz seminorm, so the declared
    constants carry over unchanged.
    """
    T = fld.horizon
    return CoefficientField(
        dim=fld.dim,
        horizon=2.0 * T,
        kappa=fld.kappa,
        entries=_Reflected(fld.entries, T),
        declared_A_LL=fld.declared_A_LL,
        declared_A=fld.declared_A,
        side=fld.side,
        family=f"reflected_{fld.family}",
        params=dict(fld.params),
        special_times=tuple(fld.special_times) + tuple(2.0 * T - s for s in fld.special_times),
    )


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class SamplingPlan:
    times: np.ndarray
    points: np.ndarray  # shape (npts, dim)
    directions: np.ndarray  # unit vectors, shape (ndir, dim)
    gaps: np.ndarray  # time gaps added to every sampled time

    @classmethod
    def default(cls, fld, n_times=64, n_points=64, n_directions=16, n_gaps=20, seed=0):
        T, L, d = fld.horizon, fld.side, fld.dim
        times = np.union1d(np.linspace(0.0, T, n_times), np.asarray(fld.special_times, dtype=float))
        if d == 1:
            points = (np.arange(n_points) * (L / n_points))[:, None]
        else:
            m = max(int(round(math.sqrt(n_points))), 2)
            g = np.arange(m) * (L / m)
            points = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        axes = np.vstack([np.eye(d), -np.eye(d)])
        rng = np.random.default_rng(seed)
        rand = rng.standard_normal((max(n_directions - len(axes), 0), d))
        rand /= np.linalg.norm(rand, axis=1, keepdims=True)
        directions = np.vstack([axes, rand])[:max(n_directions, len(axes))]
        # smaller gaps lose the quotient to cancellation in a(t) - a(s)
        gaps = 2.0 ** -np.arange(n_gaps)
        return cls(times=times, points=points, directions=directions, gaps=gaps)


@dataclass
class ValidationReport:
    symmetry_defect: float
    lower_margin: float  # min  xi^T a xi - kappa |xi|^2
    upper_margin: float  # min  |xi|^2 / kappa - xi^T a xi
    max_time_quotient: float  # against the Log-Lipschitz modulus
    max_lipschitz_quotient: float  # plain |a(t) - a(s)| / |t - s|, informational
    max_space_quotient: float
    max_amplitude: float
    passed: Dict[str, bool]
    notes: str = (
        "time gaps > 1 use the plain Lipschitz quotient against declared_A_LL"
    )

    @property
    def ok(self):
        return all(self.passed.values())

    def to_dict(self):
        return {
            "symmetry_defect": self.symmetry_defect,
            "lower_margin": self.lower_margin,
            "upper_margin": self.upper_margin,
            "max_time_quotient": self.max_time_quotient,
            "max_lipschitz_quotient": self.max_lipschitz_quotient,
            "max_space_quotient": self.max_space_quotient,
            "max_amplitude": self.max_amplitude,
            "passed": dict(self.passed),
            "ok": self.ok,
            "notes": self.notes,
        }


def validate(fld, plan=None, rtol=1e-9, atol=1e-12):
    """Check the structural hypotheses on a deterministic sample.

    Never raises on a violation; failures are recorded in the report.
    """
    if plan is None:
        plan = SamplingPlan.default(fld)
    T = fld.horizon
    pts = plan.points
    values = np.stack([fld(t, pts) for t in plan.times])  # (nt, npts, d, d)

    sym = float(np.max(np.abs(values - np.swapaxes(values, -1, -2))))
    xi = plan.directions
    quad = np.einsum("id,tpde,ie->tpi", xi, values, xi)
    xi2 = np.sum(xi * xi, axis=1)
    lower = float(np.min(quad - fld.kappa * xi2))
    upper = float(np.min(xi2 / fld.kappa - quad))

    # time quotients: all pairs of sampled times plus dyadic gaps
    t_pairs = [(plan.times[i], plan.times[j]) for i in range(len(plan.times)) for j in range(i)]
    for t in plan.times:
        for gap in plan.gaps:
            if t + gap <= T:
                t_pairs.append((t + gap, t))
    cache = {float(t): v for t, v in zip(plan.times, values)}

    def at(t):
        key = float(t)
        if key not in cache:
            cache[key] = fld(key, pts)
        return cache[key]

    q_ll = 0.0
    q_lip = 0.0
    for t, s in t_pairs:
        gap = abs(t - s)
        if gap == 0.0:
            continue
        diff = float(np.max(np.abs(at(t) - at(s))))
        q_lip = max(q_lip, diff / gap)
        denom = log_lip_modulus(gap) if gap <= 1.0 else gap
        q_ll = max(q_ll, diff / denom)

    # spatial difference quotients between neighbouring sample points
    q_x = 0.0
    if fld.dim == 1:
        order = np.argsort(pts[:, 0])
        nb = np.roll(order, -1)
        dx = np.mod(pts[nb, 0] - pts[order, 0], fld.side)
        d = np.max(np.abs(values[:, nb] - values[:, order]), axis=(-1, -2))
        q_x = float(np.max(d / dx))
    else:
        m = int(round(math.sqrt(len(pts))))
        grid_vals = values.reshape(len(plan.times), m, m, 2, 2)
        h = fld.side / m
        for axis in (1, 2):
            d = np.abs(np.roll(grid_vals, -1, axis=axis) - grid_vals)
            q_x = max(q_x, float(np.max(d)) / h)
    amp = float(np.max(np.abs(values)))

    tol_ll = fld.declared_A_LL * (1 + rtol) + atol
    tol_a = fld.declared_A * (1 + rtol) + atol
    passed = {
        "symmetry": sym <= atol,
        "ellipticity_lower": lower >= -atol,
        "ellipticity_upper": upper >= -atol,
        "time_modulus": q_ll <= tol_ll,
        "space_lipschitz": q_x <= tol_a,
        "amplitude": amp <= tol_a,
    }
    return ValidationReport(
        symmetry_defect=sym,
        lower_margin=lower,
        upper_margin=upper,
        max_time_quotient=q_ll,
        max_lipschitz_quotient=q_lip,
        max_space_quotient=q_x,
        max_amplitude=amp,
        passed=passed,
    )
