import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from kernellab.asymptotics import (
    WkbModel,
    agmon_J,
    barrier_g,
    bound_B,
    c0_coefficient,
    comparator_psi_hat,
    default_k,
    h_fun,
    log_barrier_derivative,
    log_barrier_g,
    log_bound_B,
    log_comparator,
    loglog_slope,
    recursion_residuals,
    residual_slope,
    simplified_bound_B_tilde,
    solve_recursion,
    tilde_exponent,
    tilde_integrand_gap,
    wkb_coefficients,
    wkb_residual_g1,
)
from kernellab.model import validate_params
from kernellab.quadrature import composite_gauss_legendre

REF = validate_params(3, 3, 4, 0, 1)

# frozen from composite Gauss-Legendre, 1e4 uniform panels of order 8
J10_ORACLE = 20.149580317826434
J20_ORACLE = 58.68939702192023


def _zero_model(p):
    return WkbModel(p, 0.0, 3, (0.0, 0.0, 0.0, 0.0))


def test_h_fun_values():
    assert h_fun(REF, 1.0) == 0.5
    assert h_fun(validate_params(3, 5, 7), 1.0) == 0.5
    assert h_fun(REF, 2.0) == pytest.approx(16 / 9, rel=1e-15)
    assert h_fun(REF, 1e-6) < 1e-20


def test_agmon_J_at_one_is_zero():
    assert agmon_J(REF, 1.0) == 0.0


# [DERIVED] dense-quadrature oracle
def test_agmon_J_against_dense_oracle():
    dense = composite_gauss_legendre(lambda s: np.sqrt(h_fun(REF, s)), 1.0, 10.0, panels=10_000)
    assert dense == pytest.approx(J10_ORACLE, rel=1e-13)
    assert agmon_J(REF, 10.0) == pytest.approx(J10_ORACLE, rel=1e-8)
    assert agmon_J(REF, 20.0) == pytest.approx(J20_ORACLE, rel=1e-8)


def test_agmon_J_rejects_bad_input():
    with pytest.raises(ValueError):
        agmon_J(REF, 0.5)
    with pytest.raises(ValueError):
        agmon_J(REF, 2.0, rel_tol=0.1)


@given(st.floats(2.1, 6.0), st.floats(1.0 + 1e-6, 40.0))
def test_agmon_J_below_r_minus_one_when_alpha_equals_beta(a, r):
    assert agmon_J(validate_params(3, a, a), r) < r - 1


def test_default_k_reference():
    assert default_k(REF) == 3
    # xi = 1: k xi + 2 - alpha > 1 needs k > alpha - 1
    assert default_k(validate_params(3, 5, 5)) == 5


# [DERIVED] hand substitution: (0.25)^2 + 0.25
def test_c0_reference():
    assert c0_coefficient(REF) == 0.3125
    assert wkb_coefficients(REF, 0.0).coeffs[0] == 0.3125


# [DERIVED] hand-unrolled recursion
def test_synthetic_recursion():
    c = solve_recursion(1.0, 0.0, 2.0, 3)
    assert np.array_equal(c, [0.0, 1.0, -1.0, 1.0])


@given(st.floats(0.3, 4.0), st.floats(-3, 3), st.floats(-20, 20), st.integers(3, 9))
def test_recursion_residuals_vanish(xi, c0, lam, k):
    c = solve_recursion(xi, c0, lam, k)
    assert np.allclose(recursion_residuals(xi, c, lam), 0.0, atol=1e-9 * max(1.0, np.abs(c).max()))


def test_lambda_equal_c0_kills_linear_terms():
    m = wkb_coefficients(REF, c0_coefficient(REF), 6)
    assert np.all(np.asarray(m.coeffs[1:]) == 0.0)


def test_k_lower_limit_enforced():
    with pytest.raises(ValueError):
        wkb_coefficients(REF, 0.0, 2)


# [DERIVED] quadrature oracle for the closed-form v-integral
def test_v_integral_closed_form():
    m = wkb_coefficients(validate_params(3, 3, 4, 1, 1), 0.0, 4)
    ref, _ = quad(m.v, 1.0, 5.0, epsabs=0, epsrel=1e-13)
    assert m.v_integral(5.0) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("b", [-1.0, 0.0, 1.0])
def test_barrier_at_one(b):
    p = REF.with_b(b)
    g = barrier_g(wkb_coefficients(p, -3.0), 1.0)
    assert g == pytest.approx(2**0.25 * 2 ** (-b / 6), rel=1e-14)
    assert comparator_psi_hat(p, 1.0) == pytest.approx(2 ** (-b / 6), rel=1e-14)


def test_zero_series_barrier_form():
    r = np.array([1.5, 4.0, 9.0])
    g = barrier_g(_zero_model(REF), r)
    expected = r**-1.0 * h_fun(REF, r) ** -0.25 * np.exp(-agmon_J(REF, r))
    assert np.allclose(g, expected, rtol=1e-12)


def test_comparator_over_barrier_algebraic_limit():
    r = np.geomspace(1, 200, 9)
    ratio = np.exp(log_comparator(REF, r) - log_barrier_g(_zero_model(REF), r))
    assert np.allclose(ratio, (r**3 / (1 + r**3)) ** 0.25, rtol=1e-12)
    assert ratio[-1] == pytest.approx(1.0, abs=1e-6)


# [DERIVED] composition with the dense Agmon oracle
def test_comparator_b_minus_one_at_ten():
    p = REF.with_b(-1.0)
    J = composite_gauss_legendre(lambda s: np.sqrt(h_fun(p, s)), 1.0, 10.0, panels=10_000)
    expected = 10**-1.25 * 1001 ** (1 / 6) * np.exp(-J)
    assert comparator_psi_hat(p, 10.0) == pytest.approx(expected, rel=1e-10)


# [DERIVED] g1 against 4th-order finite differences of log g
@pytest.mark.parametrize("b, lam", [(0.0, -4.5), (1.0, 0.0), (-1.0, 2.0)])
def test_residual_g1_against_finite_differences(b, lam):
    p = REF.with_b(b)
    m = wkb_coefficients(p, lam, 4)
    r = np.array([2.0, 3.0, 5.0])
    hs = 1e-3
    L = lambda x: log_barrier_g(m, x, rel_tol=1e-13)
    d1 = (-L(r + 2 * hs) + 8 * L(r + hs) - 8 * L(r - hs) + L(r - 2 * hs)) / (12 * hs)
    d2 = (-L(r + 2 * hs) + 16 * L(r + hs) - 30 * L(r) + 16 * L(r - hs) - L(r - 2 * hs)) / (12 * hs**2)
    drift = (p.dim_N - 1) / r + p.b * r ** (p.alpha - 1) / (1 + r**p.alpha)
    g1_fd = d2 + d1**2 + drift * d1 - h_fun(p, r)
    assert np.allclose(log_barrier_derivative(m, r), d1, rtol=1e-9)
    assert np.allclose(wkb_residual_g1(m, r), g1_fd, atol=1e-6)


# anchored at the display g1 = lambda/r^2 + O(r^{-k xi - 2}) + O(r^{-alpha - 2})
def test_residual_tends_to_lambda_monotonically():
    m = wkb_coefficients(REF, 1.0, 4)
    err = [abs(r**2 * wkb_residual_g1(m, r) - 1.0) for r in (10.0, 20.0, 40.0)]
    assert err[0] > err[1] > err[2]
    assert err[2] < 1e-4


def test_residual_slope_lambda_zero():
    assert residual_slope(wkb_coefficients(REF, 0.0)) == pytest.approx(-3.0, abs=0.3)


def test_residual_slope_synthetic_xi_one():
    p = validate_params(3, 3, 3)
    assert p.xi == 1.0
    m = wkb_coefficients(p, 2.0, 3, c0=0.0)
    assert residual_slope(m) == pytest.approx(-3.0, abs=0.3)


def test_loglog_slope_of_power():
    x = np.geomspace(1, 10, 20)
    assert loglog_slope(x, 3 * x**-2.5) == pytest.approx(-2.5, abs=1e-12)


def test_bound_B_at_one():
    for b in (-1.0, 0.0, 1.0):
        assert bound_B(REF.with_b(b), 1.0, 1.0) == pytest.approx(0.5, rel=1e-15)
        assert simplified_bound_B_tilde(REF.with_b(b), 1.0, 1.0) == pytest.approx(0.5, rel=1e-15)


@settings(max_examples=40)
@given(st.floats(-2, 2), st.floats(1, 20), st.floats(1, 20))
def test_bound_B_swap_identity(b, rx, ry):
    p = REF.with_b(b)
    lhs = log_bound_B(p, rx, ry) - log_bound_B(p, ry, rx)
    ax, ay = np.log1p(rx**3), np.log1p(ry**3)
    rhs = b / 3 * (ay - ax) + ax - ay
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_bound_B_decreasing_in_rx():
    rx = np.linspace(1, 20, 200)
    for ry in (1.0, 5.0, 15.0):
        assert np.all(np.diff(bound_B(REF, rx, ry)) < 0)


def test_tilde_integrand_values():
    assert tilde_integrand_gap(REF, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert np.sqrt(2 * h_fun(REF, 8.0)) == pytest.approx(np.sqrt(8192 / 513), rel=1e-15)
    assert tilde_integrand_gap(REF, 8.0) == pytest.approx(np.sqrt(8192 / 513) - 8**0.5, rel=1e-14)


@given(st.floats(3, 5), st.floats(0.1, 4), st.floats(1, 30))
def test_tilde_exponent_below_J(a, db, r):
    p = validate_params(3, a, a + db)
    assert tilde_integrand_gap(p, r) >= -1e-12
    assert tilde_exponent(p, r) <= agmon_J(p, r) * (1 + 1e-9) + 1e-12


@settings(max_examples=30)
@given(st.floats(-2, 2), st.floats(1, 20), st.floats(1, 20))
def test_B_below_B_tilde(b, rx, ry):
    p = REF.with_b(b)
    assert bound_B(p, rx, ry) <= simplified_bound_B_tilde(p, rx, ry) * (1 + 1e-9)
