import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernellab.model import (
    FieldKind,
    HypothesisError,
    ScalarField,
    drift_coefficient,
    mu_density,
    potential_U,
    validate_params,
    weight_phi,
)


def _d1(f, r, h=1e-3):
    return (-f(r + 2 * h) + 8 * f(r + h) - 8 * f(r - h) + f(r - 2 * h)) / (12 * h)


def _d2(f, r, h=1e-3):
    return (-f(r + 2 * h) + 16 * f(r + h) - 30 * f(r) + 16 * f(r - h) - f(r - 2 * h)) / (12 * h * h)


admissible = st.builds(
    lambda N, a, db, b, c: validate_params(N, a, a - 2 + db, b, c),
    st.integers(3, 6),
    st.floats(2.05, 6.0),
    st.floats(0.05, 6.0),
    st.floats(-3.0, 3.0),
    st.floats(0.1, 4.0),
)


# [TRIVIAL] direct substitution into the definitions of xi and gamma
def test_reference_parameters_accepted():
    p = validate_params(3, 3, 4, 0, 1)
    assert p.xi == 1.5
    assert p.gamma == pytest.approx(0.6, abs=1e-15)
    assert p.decay_power == 1.25


@pytest.mark.parametrize(
    "args, hypothesis",
    [
        ((3, 3, 1, 0, 1), "beta > alpha - 2"),
        ((2, 3, 4, 0, 1), "N > 2"),
        ((3, 2, 4, 0, 1), "alpha > 2"),
        ((3, 3, 4, 0, 0), "c > 0"),
    ],
)
def test_hypothesis_violations_name_the_hypothesis(args, hypothesis):
    with pytest.raises(HypothesisError, match=hypothesis.replace("+", r"\+")):
        validate_params(*args)


def test_non_integer_dimension_rejected():
    with pytest.raises(HypothesisError):
        validate_params(3.5, 3, 4)


def test_with_b_revalidates():
    p = validate_params(3, 3, 4, 0, 1).with_b(2.0)
    assert p.b == 2.0 and p.xi == 1.5


# [TRIVIAL] drift term vanishes at b = 0
def test_potential_b0_is_power():
    assert potential_U(validate_params(3, 3, 4, 0, 1), 2.0) == 16.0
    assert potential_U(validate_params(5, 2.5, 4, 0, 1), 2.0) == 16.0


# [DERIVED] hand evaluation: 1*1*[(1/2)(1-3) + 4] + 1
def test_potential_hand_value():
    assert potential_U(validate_params(3, 3, 4, 2, 1), 1.0) == pytest.approx(4.0, abs=1e-15)


@given(admissible)
def test_potential_vanishes_at_origin(p):
    assert potential_U(p, 0.0) == 0.0


# [TRIVIAL] zero exponent, base 1, hand value 2^{6/6}
def test_weight_phi_values():
    assert np.all(weight_phi(validate_params(3, 3, 4, 0, 1), np.linspace(0, 30, 7)) == 1.0)
    assert weight_phi(validate_params(3, 3, 4, 5, 1), 0.0) == 1.0
    assert weight_phi(validate_params(3, 3, 4, 6, 1), 1.0) == pytest.approx(2.0, abs=1e-15)


def test_mu_density_values():
    p = validate_params(3, 3, 4)
    assert mu_density(p, 0.0) == 1.0
    assert mu_density(p, 1.0) == 0.5
    assert mu_density(p, 2.0) == pytest.approx(1 / 9, abs=1e-16)


def test_drift_coefficient():
    assert drift_coefficient(validate_params(3, 3, 4, 2, 1), 2.0) == 8.0


def test_scalar_field_dispatch():
    p = validate_params(3, 3, 4, 1, 1)
    r = np.linspace(0.1, 5, 9)
    assert np.array_equal(ScalarField(FieldKind.POTENTIAL_U, p)(r), potential_U(p, r))
    assert np.array_equal(ScalarField(FieldKind.WEIGHT_PHI, p)(r), weight_phi(p, r))


# [DERIVED] ground-state transform: A u = phi^{-1} H(phi u) with
# H v = (1+r^a)(v'' + (N-1)/r v') - U v, checked by 4th-order finite differences
@pytest.mark.parametrize("b", [-1.0, 0.5, 1.0, 2.5])
def test_similarity_identity_pointwise(b):
    p = validate_params(3, 3, 4, b, 1.3)
    r = np.linspace(0.5, 3.0, 11)
    u = lambda x: np.exp(-x) * (1 + x**2)
    v = lambda x: weight_phi(p, x) * u(x)
    lap = lambda f: _d2(f, r) + (p.dim_N - 1) / r * _d1(f, r)
    Au = (1 + r**p.alpha) * lap(u) + p.b * r ** (p.alpha - 1) * _d1(u, r) - p.c * r**p.beta * u(r)
    Hv = (1 + r**p.alpha) * lap(v) - potential_U(p, r) * v(r)
    assert np.max(np.abs(Hv / weight_phi(p, r) - Au) / np.abs(Au)) < 1e-7


@settings(max_examples=50)
@given(admissible, st.floats(0.0, 50.0))
def test_fields_positive_and_finite(p, r):
    assert weight_phi(p, r) > 0
    assert 0 < mu_density(p, r) <= 1
    assert np.isfinite(potential_U(p, r))


@given(admissible)
def test_potential_bounded_below_on_grid(p):
    r = np.linspace(0, 40, 400)
    assert np.isfinite(potential_U(p, r).min())
