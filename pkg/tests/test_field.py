import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parabolic_recon.field import (
    CoefficientField,
    SamplingPlan,
    builtin,
    log_lip_modulus,
    reflect_in_time,
    validate,
)
from tests.conftest import FAMILIES, make_field


# -- log_lip_modulus ----------------------------------------------------------


def test_modulus_at_one():
    assert log_lip_modulus(1.0) == 1.0


def test_modulus_at_zero_and_limit():
    assert log_lip_modulus(0.0) == 0.0
    assert log_lip_modulus(1e-300) < 1e-297


def test_modulus_at_inverse_e():
    # e^-1 (1 + 1) evaluated by hand
    assert log_lip_modulus(math.exp(-1)) == pytest.approx(2 * math.exp(-1), rel=1e-15)
    assert log_lip_modulus(math.exp(-1)) == pytest.approx(0.735759, abs=1e-6)


@pytest.mark.parametrize("s", [-1e-9, 1.0 + 1e-9, 2.0])
def test_modulus_rejects_outside_unit_range(s):
    with pytest.raises(ValueError):
        log_lip_modulus(s)


@given(st.floats(1e-12, 1.0), st.floats(1e-12, 1.0))
def test_modulus_increasing_and_ratio_decreasing(a, b):
    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1e-9 * hi:
        return
    assert log_lip_modulus(lo) < log_lip_modulus(hi)
    assert log_lip_modulus(lo) / lo > log_lip_modulus(hi) / hi


def test_modulus_vectorized():
    s = np.array([0.0, 0.25, 1.0])
    expected = [0.0, 0.25 * (1 + math.log(4)), 1.0]
    np.testing.assert_allclose(log_lip_modulus(s), expected, rtol=1e-15)


# -- builtin families -------------------------------------------------------------


def test_constant_one():
    f = builtin("constant", c=1.0)
    assert f.kappa == 1.0 and f.declared_A_LL == 0.0
    np.testing.assert_array_equal(f(0.3, np.zeros((5, 1))), np.ones((5, 1, 1)))


def test_autonomous_half_sine_kappa():
    # extremes of 1 + sin(x)/2 are 1/2 and 3/2; kappa = 1/2 satisfies both bounds
    f = builtin("autonomous", mean=1.0, amp=0.5)
    assert f.kappa == 0.5
    assert f.declared_A_LL == 0.0
    assert validate(f).ok


def test_loglip_is_loglip_but_not_lipschitz():
    f = builtin("loglip_t", horizon=1.0, beta=0.1, t0=0.5)
    x = np.zeros((1, 1))
    gaps = 2.0 ** -np.arange(1, 25)
    diffs = np.array([abs(f(0.5 + g, x) - f(0.5, x)).item() for g in gaps])
    ll = diffs / log_lip_modulus(gaps)
    lip = diffs / gaps
    assert np.all(ll <= 0.1 * (1 + 1e-8))
    # Lipschitz quotient grows like |log gap|
    assert lip[-1] > 10 * lip[0]
    assert np.all(np.diff(lip) > 0)


@pytest.mark.parametrize("kind", FAMILIES)
def test_builtins_validate_on_default_plan(kind):
    report = validate(make_field(kind, horizon=1.0))
    assert report.ok, report.to_dict()


@pytest.mark.parametrize("kind,params", [("autonomous", {"shear": 0.2}), ("loglip_t", {"amp": 0.3}),
                                         ("lipschitz_t", {"amp": 0.1}), ("constant", {"c": 2.0})])
def test_builtins_validate_in_2d(kind, params):
    report = validate(builtin(kind, dim=2, horizon=0.5, **params))
    assert report.ok, report.to_dict()


@pytest.mark.parametrize("kind,params", [
    ("constant", {"c": 0.0}),
    ("autonomous", {"amp": 1.2}),
    ("loglip_t", {"amp": -0.1}),
    ("loglip_t", {"beta": -1.0}),
    ("lipschitz_t", {"gamma": 1.0}),
    ("nonsense", {}),
])
def test_builtin_rejects_bad_parameters(kind, params):
    with pytest.raises(ValueError):
        builtin(kind, **params)


def test_field_rejects_bad_kappa():
    with pytest.raises(ValueError):
        CoefficientField(1, 1.0, 1.5, lambda t, x: None, 0.0, 1.0)


# -- validate ---------------------------------------------------------------------


def _diag2(kappa):
    return CoefficientField(
        dim=1, horizon=1.0, kappa=kappa,
        entries=lambda t, x: np.full(x.shape[:-1] + (1, 1), 2.0),
        declared_A_LL=0.0, declared_A=2.0,
    )


def test_validate_identity_passes():
    report = validate(builtin("constant", c=1.0))
    assert report.ok
    assert report.lower_margin >= 0 and report.upper_margin >= 0


def test_validate_diag2_upper_bound():
    bad = validate(_diag2(1.0))
    assert not bad.passed["ellipticity_upper"]
    assert bad.passed["ellipticity_lower"]
    assert bad.lower_margin == pytest.approx(1.0)
    assert validate(_diag2(0.5)).ok


def test_validate_flags_asymmetry_and_time_violation():
    def entries(t, x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = out[..., 1, 1] = 1.0 + t
        out[..., 0, 1] = 0.1
        return out

    f = CoefficientField(2, 1.0, 0.5, entries, declared_A_LL=0.5, declared_A=2.0)
    report = validate(f)
    assert not report.passed["symmetry"]
    assert not report.passed["time_modulus"]  # slope 1 > declared 0.5
    assert not report.ok


def test_validate_loglip_quotient_matches_beta():
    f = builtin("loglip_t", horizon=1.0, beta=0.1, t0=0.5)
    report = validate(f, SamplingPlan.default(f))
    assert report.max_time_quotient <= 0.1 * (1 + 1e-9)
    assert report.max_time_quotient == pytest.approx(0.1, rel=1e-6)
    assert report.max_lipschitz_quotient > 1.0


# -- reflection -------------------------------------------------------------------


def test_reflection_endpoints_and_seam():
    f = make_field("loglip_t", horizon=1.0)
    b = reflect_in_time(f)
    x = np.linspace(0, 2 * math.pi, 7)[:, None]
    assert b.horizon == 2.0
    np.testing.assert_array_equal(b(2.0, x), f(0.0, x))
    np.testing.assert_array_equal(b(1.0, x), f(1.0, x))
    np.testing.assert_allclose(b(1.0 + 1e-12, x), f(1.0, x), atol=1e-10)
    np.testing.assert_array_equal(b(1.5, x), f(0.5, x))
    assert b.kappa == f.kappa


@given(st.floats(0.0, 1.0))
def test_reflection_restricts_to_original(t):
    f = make_field("lipschitz_t", horizon=1.0, amp=0.2)
    x = np.linspace(0, 2 * math.pi, 5)[:, None]
    np.testing.assert_array_equal(reflect_in_time(f)(t, x), f(t, x))


def test_reflected_field_validates_with_same_constants():
    assert validate(reflect_in_time(make_field("loglip_t", horizon=1.0))).ok
