import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathgap.bounds import lambda_c
from pathgap.optimize import (
    CurveKind,
    OptimizationError,
    QuadratureError,
    SearchPolicy,
    SearchRangeError,
    TimeCurve,
    _golden,
    as_curve,
    inf_over_c,
    sup_over_t,
    tilde_lambda_c,
    tilde_lambda_sweep,
)

from oracles import tilde_lambda_quad


def test_curve_kinds_evaluate():
    c = TimeCurve.constant(2.5)
    assert c.is_constant and c(0.3) == 2.5 and c.derivative(0.3) == 0.0
    pl = TimeCurve.piecewise_linear([0, 1, 2], [0, 2, 0])
    assert pl(0.5) == pytest.approx(1.0)
    assert pl.derivative(1.5) == pytest.approx(-2.0)
    tab = TimeCurve.tabulated(np.linspace(0, 1, 21), np.sin(np.linspace(0, 1, 21)))
    assert tab.kind is CurveKind.TABULATED
    assert tab(0.37) == pytest.approx(math.sin(0.37), abs=1e-5)
    assert tab.derivative(0.37) == pytest.approx(math.cos(0.37), abs=1e-3)
    fn = TimeCurve.function(np.cos)
    assert fn.derivative(0.4) == pytest.approx(-math.sin(0.4), abs=1e-8)
    assert as_curve(3.0).value == 3.0


def test_curve_validation():
    with pytest.raises(ValueError):
        TimeCurve.piecewise_linear([0, 0], [1, 2])
    with pytest.raises(ValueError):
        TimeCurve.piecewise_linear([0, 1, 2], [1, 2])
    assert not TimeCurve.piecewise_linear([0, 1], [0, 1]).covers(2.0)


def test_combine_and_sup_norm():
    a = TimeCurve.piecewise_linear([0, 1], [-3, 1])
    b = TimeCurve.constant(2.0)
    s = TimeCurve.combine(lambda x, y: x + y, a, b)
    assert s(0.5) == pytest.approx(1.0)
    assert a.sup_norm(1.0) == pytest.approx(3.0)


def test_policy_validation():
    with pytest.raises(ValueError):
        SearchPolicy(tol=0.0)
    with pytest.raises(ValueError):
        SearchPolicy(c_range=(1.0, -1.0))
    with pytest.raises(ValueError):
        SearchPolicy(t_grid=4)
    assert SearchPolicy().resolved_c_range(1.0) == (-10.0, 10.0)


def test_golden_section_finds_interior_extremum():
    x, v, width = _golden(lambda t: -(t - 0.3) ** 2, 0.0, 1.0, 60, maximize=True)
    assert x == pytest.approx(0.3, abs=1e-9)
    assert width < 1e-10


def test_sup_over_t_matches_dense_grid():
    f = lambda t: np.sin(3 * t) * np.exp(-t)
    t, v = sup_over_t(f, 2.0)
    grid = np.linspace(0, 2, 200001)
    assert v == pytest.approx(f(grid).max(), abs=1e-10)
    assert t == pytest.approx(math.atan(3) / 3, abs=1e-6)


def test_sup_over_t_endpoint_and_ties():
    t, v = sup_over_t(lambda t: np.asarray(t) * 1.0, 1.5)
    assert t == 1.5 and v == 1.5
    t, v = sup_over_t(lambda t: np.zeros_like(np.asarray(t, dtype=float)), 1.0)
    assert t == 0.0


def test_inf_over_c():
    c, v = inf_over_c(lambda c: (c - 0.7) ** 2 + 1.0, (-5, 5))
    assert c == pytest.approx(0.7, abs=1e-6) and v == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(SearchRangeError):
        inf_over_c(lambda c: c, (1.0, 2.0))
    with pytest.raises(OptimizationError):
        inf_over_c(lambda c: float("nan"), (-1.0, 1.0))


def test_inf_over_c_never_worse_than_zero():
    g = lambda c: abs(math.sin(40 * c)) + 0.01 * c * c
    c, v = inf_over_c(g, (-3, 3))
    assert v <= g(0.0)


@settings(max_examples=40, deadline=None)
@given(T=st.floats(0.05, 3.0), K1=st.floats(-2.0, 2.0), K2=st.floats(0.0, 3.0), c=st.floats(-1.5, 1.5),
       frac=st.floats(0.0, 1.0))
def test_tilde_lambda_constant_curves_reduce(T, K1, K2, c, frac):
    t = frac * T
    assert tilde_lambda_c(t, T, K1, K2, c) == pytest.approx(float(lambda_c(t, T, K1, K2, c)), abs=1e-8)


def test_tilde_lambda_against_nested_quadrature():
    k1 = lambda s: 0.5 - 0.8 * s
    k2 = lambda s: 1.0 + 0.5 * math.sin(2 * s)
    c = lambda s: 0.2 * s
    K1 = TimeCurve.function(lambda s: 0.5 - 0.8 * np.asarray(s))
    K2 = TimeCurve.function(lambda s: 1.0 + 0.5 * np.sin(2 * np.asarray(s)))
    C = TimeCurve.function(lambda s: 0.2 * np.asarray(s))
    for t in (0.0, 0.31, 0.9, 1.2):
        assert tilde_lambda_c(t, 1.2, K1, K2, C) == pytest.approx(tilde_lambda_quad(t, 1.2, k1, k2, c), abs=1e-8)


def test_tilde_lambda_ramp_value():
    # K1(t) = t, K2 = 1, c = 0, T = 1: value at t = 0 is 1 + (1/2) int_0^1 exp(-s^2/4) ds
    K1 = TimeCurve.piecewise_linear([0.0, 1.0], [0.0, 1.0])
    exact = 1.0 + 0.5 * math.sqrt(math.pi) * math.erf(0.5)
    assert tilde_lambda_quad(0.0, 1.0, lambda s: s, lambda s: 1.0, lambda s: 0.0) == pytest.approx(exact, abs=1e-10)
    assert tilde_lambda_c(0.0, 1.0, K1, 1.0, 0.0) == pytest.approx(exact, abs=1e-9)


def test_tilde_lambda_errors():
    with pytest.raises(ValueError):
        tilde_lambda_c(2.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        tilde_lambda_c(0.5, 2.0, TimeCurve.piecewise_linear([0, 1], [0, 0]), 1.0)
    wild = TimeCurve.function(lambda s: 40 * np.sign(np.sin(300 * np.asarray(s))))
    with pytest.raises(QuadratureError):
        tilde_lambda_c(0.5, 1.0, 0.0, wild, n=64, tol=1e-14, max_n=256)


def test_sweep_shape_and_k2_zero():
    s, v = tilde_lambda_sweep(1.0, 1.0, 0.0, 0.0, n=64)
    assert s.shape == v.shape == (65,)
    np.testing.assert_allclose(v, 1.0)
