"""Jet calculus: chain-rule exactness, symmetry, finite-difference oracle."""

import math

import numpy as np
import pytest

from qklab.jets import (
    ChartPoint,
    EvaluationError,
    Jet2,
    constant_field,
    cos,
    cosh,
    exp,
    finite_difference_check,
    lift_coordinate,
    ln,
    precompose_coordinate,
    sample_box,
    sin,
    sinh,
    sqrt,
)


def pt(*coords):
    return ChartPoint(np.array(coords, dtype=float))


def test_lift_coordinate_values():
    x0 = lift_coordinate(0, 2)
    x1 = lift_coordinate(1, 2)
    j = x0(pt(3.0, 5.0))
    assert j.value == 3.0
    assert np.allclose(j.grad, [1.0, 0.0])
    assert np.allclose(j.hess, 0.0)
    k = x1(pt(3.0, 5.0))
    assert k.value == 5.0
    assert np.allclose(k.grad, [0.0, 1.0])


def test_lift_coordinate_out_of_range():
    with pytest.raises(ValueError):
        lift_coordinate(2, 2)
    with pytest.raises(ValueError):
        lift_coordinate(-1, 2)


def test_sum_of_lifts_linearity():
    f = sum(lift_coordinate(i, 3) for i in range(3)) + constant_field(0.0, 3)
    j = f(pt(1.0, 2.0, 3.0))
    assert j.value == 6.0
    assert np.allclose(j.grad, 1.0)
    assert np.allclose(j.hess, 0.0)


def test_exp_of_constant_zero():
    j = exp(constant_field(0.0, 1))(pt(0.0))
    assert j.value == 1.0
    assert np.allclose(j.grad, 0.0)
    assert np.allclose(j.hess, 0.0)


def test_square_jet():
    x = lift_coordinate(0, 1)
    j = (x * x)(pt(3.0))
    assert j.value == 9.0
    assert np.allclose(j.grad, [6.0])
    assert np.allclose(j.hess, [[2.0]])


def test_exp_two_t():
    # closed-form oracle: d/dt e^{2t} = 2e^{2t}, d^2/dt^2 = 4e^{2t}
    t = lift_coordinate(0, 1)
    f = exp(2.0 * t)
    j = f(pt(0.5))
    e1 = math.e
    assert j.value == pytest.approx(e1, rel=1e-14)
    assert j.grad[0] == pytest.approx(2 * e1, rel=1e-14)
    assert j.hess[0, 0] == pytest.approx(4 * e1, rel=1e-14)


def test_division_and_reciprocal():
    x = lift_coordinate(0, 1)
    f = 1.0 / (1.0 + x * x)
    j = f(pt(2.0))
    assert j.value == pytest.approx(0.2)
    # d/dx (1+x^2)^-1 = -2x/(1+x^2)^2
    assert j.grad[0] == pytest.approx(-4.0 / 25.0, rel=1e-13)


def test_domain_errors():
    x = lift_coordinate(0, 1)
    with pytest.raises(EvaluationError):
        ln(x)(pt(-1.0))
    with pytest.raises(EvaluationError):
        sqrt(x)(pt(-2.0))
    with pytest.raises(EvaluationError):
        (1.0 / x)(pt(0.0))


def test_noninteger_power_positive_base():
    t = lift_coordinate(0, 1)
    f = t ** 0.25
    j = f(pt(2.0))
    assert j.value == pytest.approx(2.0 ** 0.25, rel=1e-14)
    assert j.grad[0] == pytest.approx(0.25 * 2.0 ** -0.75, rel=1e-13)
    with pytest.raises(EvaluationError):
        f(pt(-1.0))


def test_integer_power_negative_base_ok():
    x = lift_coordinate(0, 1)
    j = (x ** 3)(pt(-2.0))
    assert j.value == -8.0
    assert j.grad[0] == 12.0
    assert j.hess[0, 0] == -12.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_polynomial_chain_rule(seed):
    # degree <= 4 polynomial compositions versus hand-evaluated derivatives
    rng = np.random.default_rng(seed)
    c = rng.uniform(-2, 2, size=5)
    x = lift_coordinate(0, 2)
    y = lift_coordinate(1, 2)
    f = c[0] + c[1] * x + c[2] * y * y + c[3] * x * y + c[4] * (x * x) * (y * y)
    for _ in range(10):
        a, b = rng.uniform(-1.5, 1.5, size=2)
        j = f(pt(a, b))
        val = c[0] + c[1] * a + c[2] * b * b + c[3] * a * b + c[4] * a * a * b * b
        gx = c[1] + c[3] * b + 2 * c[4] * a * b * b
        gy = 2 * c[2] * b + c[3] * a + 2 * c[4] * a * a * b
        hxx = 2 * c[4] * b * b
        hxy = c[3] + 4 * c[4] * a * b
        hyy = 2 * c[2] + 2 * c[4] * a * a
        scale = max(1.0, abs(val))
        assert abs(j.value - val) <= 1e-12 * scale
        assert np.allclose(j.grad, [gx, gy], atol=1e-12, rtol=1e-12)
        assert np.allclose(j.hess, [[hxx, hxy], [hxy, hyy]], atol=1e-12, rtol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hessian_symmetry(seed):
    x = lift_coordinate(0, 3)
    y = lift_coordinate(1, 3)
    z = lift_coordinate(2, 3)
    f = exp(x * y) * sin(y * z) + cosh(x) * sinh(z) / (2.0 + cos(y))
    for p in sample_box([(-1, 1)] * 3, 20, seed):
        h = f(p).hess
        assert np.array_equal(h, h.T) or np.allclose(h, h.T, atol=0.0)


def test_finite_difference_polynomial():
    x = lift_coordinate(0, 1)
    f = x * x * x
    assert finite_difference_check(f, pt(1.0), 1e-4) < 1e-6


def test_finite_difference_constant():
    f = constant_field(4.2, 2)
    assert finite_difference_check(f, pt(0.3, -0.2), 1e-4) < 1e-12


def test_finite_difference_exp():
    t = lift_coordinate(0, 1)
    assert finite_difference_check(exp(2.0 * t), pt(0.0), 1e-4) < 1e-6


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_finite_difference_smooth_library(seed):
    x = lift_coordinate(0, 2)
    y = lift_coordinate(1, 2)
    f = sinh(x) * sinh(x) * cosh(y) * cosh(y) + ln(2.0 + sin(x * y))
    for p in sample_box([(-0.8, 0.8)] * 2, 10, seed):
        assert finite_difference_check(f, p, 1e-4) < 1e-6


def test_partial_degrades_order():
    x = lift_coordinate(0, 2)
    y = lift_coordinate(1, 2)
    j = (x * x * y)(pt(1.5, 2.0))
    d0 = j.partial(0)
    assert d0.value == pytest.approx(2 * 1.5 * 2.0)
    assert d0.grad is not None and d0.hess is None
    d00 = d0.partial(0)
    assert d00.value == pytest.approx(2 * 2.0)
    assert d00.grad is None
    with pytest.raises(EvaluationError):
        d00.partial(0)


def test_degraded_arithmetic_propagates():
    x = lift_coordinate(0, 1)
    full = (x * x)(pt(2.0))
    once = full.partial(0)
    prod = full * once
    assert prod.grad is not None
    assert prod.hess is None


def test_precompose_coordinate():
    t = lift_coordinate(0, 1)
    profile = exp(2.0 * t)
    lifted = precompose_coordinate(profile, 1, 3)
    j = lifted(pt(9.0, 0.25, -3.0))
    assert j.value == pytest.approx(math.exp(0.5))
    g = np.zeros(3)
    g[1] = 2 * math.exp(0.5)
    assert np.allclose(j.grad, g)
    assert j.hess[1, 1] == pytest.approx(4 * math.exp(0.5))
    assert j.hess[0, 0] == 0.0


def test_sample_box_reproducible():
    a = sample_box([(-1, 1), (0, 2)], 5, 42)
    b = sample_box([(-1, 1), (0, 2)], 5, 42)
    for p, q in zip(a, b):
        assert np.array_equal(p.coords, q.coords)


def test_chart_point_rejects_nonfinite():
    with pytest.raises(ValueError):
        ChartPoint(np.array([1.0, np.nan]))
