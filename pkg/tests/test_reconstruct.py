import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parabolic_recon.evolve import EvolutionFamily, TimeMesh
from parabolic_recon.experiment import add_noise, initial_state, NoiseSpec, spectral_oracle
from parabolic_recon.field import builtin
from parabolic_recon.grid import PeriodicGrid, h1_norm, l2_inner, l2_norm
from parabolic_recon.reconstruct import (
    ALPHA_FLOOR,
    ReconstructionProblem,
    apply_B_alpha,
    choose_alpha,
    error_bounds,
    functional,
    functional_gradient,
    lax_milgram_bound,
    qbv_reconstruct,
    qbv_rhs,
    right_hand_side,
    solve,
)
from tests.conftest import FAMILIES, make_family


def noisy_problem(kind="loglip_t", delta=1e-3, n=32, steps=16, scheme="be", seed=0, **kw):
    fam = make_family(kind, n=n, steps=steps, scheme=scheme, inner_solver="direct")
    u0 = initial_state("tent", fam.grid)
    g = add_noise(fam.grid, fam.apply_forward(u0), NoiseSpec(seed, delta))
    return ReconstructionProblem(fam, g, delta, E=h1_norm(fam.grid, u0), **kw), u0


# -- regularization parameter -----------------------------------------------------


def test_choose_alpha_rule():
    assert choose_alpha(1e-3, 1.0, 0.5) == pytest.approx(5e-4)
    assert choose_alpha(1e-3, 2.0, 1.0) == pytest.approx(2e-3)
    assert choose_alpha(0.0, 1.0, 1.0) == ALPHA_FLOOR
    assert choose_alpha(1e-20, 1.0, 1.0, alpha_floor=1e-16) == 1e-16


@pytest.mark.parametrize("args", [(1e-3, 0.0, 0.5), (1e-3, 1.0, 0.0), (1e-3, 1.0, 1.5), (-1.0, 1.0, 1.0)])
def test_choose_alpha_rejects(args):
    with pytest.raises(ValueError):
        choose_alpha(*args)


def test_problem_validation():
    fam = make_family(n=16, steps=4)
    with pytest.raises(ValueError):
        ReconstructionProblem(fam, np.zeros(16), 1e-3, E=0.0)
    with pytest.raises(ValueError):
        ReconstructionProblem(fam, np.zeros(16), -1e-3, E=1.0)
    with pytest.raises(ValueError):
        ReconstructionProblem(fam, np.zeros(17), 1e-3, E=1.0)


def test_degenerate_alpha_is_flagged():
    prob, _ = noisy_problem()
    prob.delta = 0.0
    res = solve(prob)
    assert res.alpha == ALPHA_FLOOR and res.degenerate_alpha
    assert not solve(noisy_problem()[0]).degenerate_alpha


def test_M_defaults():
    assert noisy_problem()[0].evolution_bound() == 1.0
    M = noisy_problem(scheme="cn")[0].evolution_bound()
    assert abs(M - 1.0) <= 1e-10


# -- the normal operator ----------------------------------------------------------


@pytest.mark.parametrize("kind", FAMILIES)
@pytest.mark.parametrize("alpha", [1e-2, 1e-6])
def test_B_alpha_symmetric(kind, alpha, rng):
    prob, _ = noisy_problem(kind)
    u, v = rng.standard_normal((2, 32))
    lhs = l2_inner(prob.grid, apply_B_alpha(prob, alpha, u), v)
    rhs = l2_inner(prob.grid, u, apply_B_alpha(prob, alpha, v))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(FAMILIES), st.sampled_from([1e-2, 1e-4, 1e-6]), st.integers(0, 2 ** 32 - 1))
def test_B_alpha_coercive_and_bounded(kind, alpha, seed):
    prob, _ = noisy_problem(kind, n=16, steps=8)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 16))
    grid, kappa, M = prob.grid, prob.kappa, prob.evolution_bound()
    hu, hv = h1_norm(grid, u), h1_norm(grid, v)
    assert l2_inner(grid, apply_B_alpha(prob, alpha, u), u) >= alpha * kappa * hu ** 2 * (1 - 1e-12)
    assert abs(l2_inner(grid, apply_B_alpha(prob, alpha, u), v)) <= (alpha / kappa + M ** 2) * hu * hv * (1 + 1e-12)


def test_B_alpha_requires_positive_alpha():
    prob, _ = noisy_problem()
    with pytest.raises(ValueError):
        apply_B_alpha(prob, 0.0, np.zeros(32))


# -- solution properties ----------------------------------------------------------


def test_zero_measurement_gives_zero():
    fam = make_family(n=16, steps=4)
    res = solve(ReconstructionProblem(fam, np.zeros(16), 1e-3, E=1.0))
    assert res.cg_iterations == 0 and not res.u0.any()
    assert res.functional_value == 0.0


@pytest.mark.parametrize("alpha", [1e-2, 1e-4, 1e-6])
def test_lax_milgram_bound(alpha):
    prob, _ = noisy_problem()
    res = solve(prob, alpha=alpha)
    assert h1_norm(prob.grid, res.u0) <= lax_milgram_bound(prob, alpha) * (1 + 1e-10)


def test_functional_is_exact_quadratic(rng):
    prob, _ = noisy_problem()
    alpha = 1e-3
    u, v = rng.standard_normal((2, 32))
    grid = prob.grid
    J = functional(prob, alpha, u + v)
    expansion = (
        functional(prob, alpha, u)
        + l2_inner(grid, functional_gradient(prob, alpha, u), v)
        + 0.5 * l2_inner(grid, apply_B_alpha(prob, alpha, v), v)
    )
    assert J == pytest.approx(expansion, rel=1e-10)


@pytest.mark.parametrize("kind", ["loglip_t", "lipschitz_t"])
def test_gradient_matches_finite_differences(kind, rng):
    prob, _ = noisy_problem(kind)
    alpha, eps = 1e-3, 1e-5
    u, v = rng.standard_normal((2, 32))
    fd = (functional(prob, alpha, u + eps * v) - functional(prob, alpha, u - eps * v)) / (2 * eps)
    exact = l2_inner(prob.grid, functional_gradient(prob, alpha, u), v)
    assert fd == pytest.approx(exact, rel=1e-6)


def test_solution_minimizes_functional(rng):
    prob, _ = noisy_problem()
    res = solve(prob)
    grid = prob.grid
    assert l2_norm(grid, functional_gradient(prob, res.alpha, res.u0)) <= 10 * prob.outer_tol * l2_norm(
        grid, right_hand_side(prob))
    J0 = res.functional_value
    for _ in range(10):
        v = rng.standard_normal(32)
        for eps in (1e-1, 1e-3):
            assert functional(prob, res.alpha, res.u0 + eps * v) >= J0


def test_cg_energy_is_monotone():
    prob, _ = noisy_problem(n=64, steps=32, delta=1e-5)
    e = np.array(solve(prob).energy_history)
    assert len(e) > 5
    assert np.all(np.diff(e) <= 1e-12 * np.max(np.abs(e)))


@pytest.mark.parametrize("scheme", ["be", "cn"])
@pytest.mark.parametrize("alpha", [1e-2, 1e-4, 1e-6])
def test_constant_field_matches_spectral_oracle(scheme, alpha):
    grid = PeriodicGrid(1, 64)
    fld = builtin("constant", c=1.0, horizon=0.1)
    mesh = TimeMesh(0.0, 0.1, 32)
    fam = EvolutionFamily(fld, grid, mesh, scheme=scheme, inner_solver="direct")
    u0 = initial_state("tent", grid)
    g = add_noise(grid, fam.apply_forward(u0), NoiseSpec(1, 1e-3))
    res = solve(ReconstructionProblem(fam, g, 1e-3, E=1.0), alpha=alpha)
    oracle = spectral_oracle(alpha, g, fld, grid, mesh, scheme=fam.scheme)
    assert l2_norm(grid, res.u0 - oracle) <= 1e-8 * max(1.0, l2_norm(grid, oracle))


def test_spectral_oracle_rejects_variable_field():
    fam = make_family("autonomous", n=16, steps=4)
    with pytest.raises(ValueError):
        spectral_oracle(1e-3, np.zeros(16), fam.field, fam.grid, fam.mesh)


# -- nonlocal route ---------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["be", "cn"])
@pytest.mark.parametrize("kind", ["loglip_t", "autonomous"])
def test_qbv_agrees_with_normal_equation(kind, scheme):
    prob, _ = noisy_problem(kind, scheme=scheme)
    a = solve(prob)
    b = qbv_reconstruct(prob)
    assert b.method == "quasi_boundary_value"
    assert l2_norm(prob.grid, a.u0 - b.u0) <= 1e-8 * l2_norm(prob.grid, a.u0)
    np.testing.assert_allclose(qbv_rhs(prob), right_hand_side(prob), atol=1e-13)
    traj = b.trajectory
    assert traj.mesh.t_end == pytest.approx(0.2) and len(traj.states) == 33
    np.testing.assert_allclose(traj.states[16], a.trajectory.final, atol=1e-8)


# -- error estimates --------------------------------------------------------------


@pytest.mark.parametrize("delta", [1e-2, 1e-4, 1e-6])
def test_error_bounds_hold(delta):
    prob, u0 = noisy_problem(delta=delta, n=64, steps=32)
    res = solve(prob)
    truth = prob.family.record(u0)
    b = error_bounds(prob, res, truth)
    assert b["h1_bound_ok"] and b["l2T_bound_ok"]
    assert b["h1_bound_rhs"] == pytest.approx((1 + prob.E) / prob.kappa ** 2)
