import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize as sopt

from pathgap.bounds import (
    BoundBranch,
    ConstantPinching,
    DomainError,
    asymptotic_bound,
    asymptotic_coefficients,
    big_c,
    branch_coefficients,
    explicit_expansions,
    h_bound,
    lambda_c,
    lambda_closed,
    s_value,
    tilde_h,
    tilde_s,
)
from pathgap.cli import compare_asymptotics, fitted_t2
from pathgap.optimize import OptimizationError, SearchMode, SearchPolicy, TimeCurve

from oracles import grid_sup, lambda_c_quad

OPT = SearchPolicy(SearchMode.OPTIMIZE_C)


@pytest.mark.parametrize("T,K1,K2,c,t", [
    (1.0, 1.0, 1.0, 0.0, 0.4),
    (2.0, -0.7, 1.3, 0.3, 1.1),
    (0.5, 0.0, 2.0, -0.4, 0.5),
    (1.5, 2.0, 0.5, 1.0, 0.0),
    (1.0, 1e-9, 1.0, 0.5, 0.7),
    (3.0, 0.8, 4.0, 0.4, 2.2),  # a*T and b*T cross the series/recurrence switch
])
def test_lambda_c_matches_nested_quadrature(T, K1, K2, c, t):
    assert float(lambda_c(t, T, K1, K2, c)) == pytest.approx(lambda_c_quad(t, T, K1, K2, c), rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(T=st.floats(0.01, 4.0), K1=st.floats(-3.0, 3.0), K2=st.floats(0.0, 4.0), frac=st.floats(0, 1))
def test_lambda_closed_is_lambda_c_at_zero(T, K1, K2, frac):
    t = frac * T
    assert float(lambda_closed(t, T, K1, K2)) == pytest.approx(float(lambda_c(t, T, K1, K2, 0.0)), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(T=st.floats(0.01, 4.0), K1=st.floats(-3.0, 3.0), K2=st.floats(0.0, 4.0))
def test_big_c_is_grid_supremum(T, K1, K2):
    ref = grid_sup(lambda t: lambda_closed(t, T, K1, K2), T)
    assert big_c(T, K1, K2) == pytest.approx(ref, rel=1e-9)


def test_big_c_frozen_values():
    # C(1,1,1) from the grid oracle; K1 < 0 case has the (1 + e^T)/2 form when K2 = -K1
    assert big_c(1.0, 1.0, 1.0) == pytest.approx(1.515099681468636, rel=1e-14)
    assert big_c(1.0, -1.0, 1.0) == pytest.approx((1 + math.e) / 2, rel=1e-14)
    assert big_c(2.0, 0.0, 1.0) == pytest.approx(1 + 1 + 0.5)


def test_big_c_large_beta_uses_stable_form():
    v = big_c(1.0, 1e-4, 1e3)
    assert v == pytest.approx(grid_sup(lambda t: lambda_closed(t, 1.0, 1e-4, 1e3), 1.0), rel=1e-9)
    assert v == pytest.approx(125494.7377612, rel=1e-10)


def test_big_c_continuous_at_k1_zero():
    for K1 in (1e-8, -1e-8):
        assert big_c(1.3, K1, 2.0) == pytest.approx(big_c(1.3, 0.0, 2.0), rel=1e-8)


def test_domain_errors():
    with pytest.raises(DomainError):
        ConstantPinching(2.0, 1.0)
    with pytest.raises(DomainError):
        big_c(-1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        big_c(1.0, 0.0, -1.0)
    with pytest.raises(DomainError):
        h_bound(0.0, ConstantPinching(0.0, 1.0))
    with pytest.raises(DomainError):
        ConstantPinching(float("nan"), 1.0)


@settings(max_examples=40, deadline=None)
@given(T=st.floats(0.01, 3.0), k1=st.floats(-2.0, 2.0), gap=st.floats(0.0, 3.0))
def test_h_is_min_of_branches_and_at_least_one(T, k1, gap):
    r = h_bound(T, ConstantPinching(k1, k1 + gap))
    assert r.h == min(r.fang_wu, r.product)
    assert r.branch is (BoundBranch.FANG_WU if r.fang_wu <= r.product else BoundBranch.PRODUCT)
    assert r.h >= 1.0 - 1e-12


@settings(max_examples=30, deadline=None)
@given(T=st.floats(0.05, 2.0), dT=st.floats(0.01, 1.0), K1=st.floats(-2.0, 2.0), K2=st.floats(0.0, 3.0))
def test_big_c_monotone_in_T(T, dT, K1, K2):
    assert big_c(T + dT, K1, K2) >= big_c(T, K1, K2) - 1e-12


def test_flat_case_is_one():
    assert h_bound(2.0, ConstantPinching(0.0, 0.0)).h == 1.0


def test_negative_sum_branch():
    for T in (0.25, 1.0, 2.0):
        assert h_bound(T, ConstantPinching(-1.0, -1.0)).h == pytest.approx((1 + math.exp(T)) / 2, rel=1e-13)


@pytest.mark.parametrize("k1,k2", [(0.5, 2.0), (0.0, 1.5), (-0.5, 1.0), (-1.0, 0.5), (1.0, 1.0)])
@pytest.mark.parametrize("T", [0.2, 1.0, 2.5])
def test_explicit_expansions_match_composition(k1, k2, T):
    pin = ConstantPinching(k1, k2)
    r = h_bound(T, pin)
    fw, pr = explicit_expansions(T, pin)
    assert fw == pytest.approx(r.fang_wu, rel=1e-12)
    assert pr == pytest.approx(r.product, rel=1e-12)


def test_optimized_s_matches_independent_search():
    T, K1, K2 = 1.0, -1.0, 1.0
    c, v = s_value(T, K1, K2, OPT)
    grid = np.linspace(0, T, 4001)

    def sup(cc):
        return max(float(np.max(lambda_c(grid, T, K1, K2, cc))), 0.0)

    ref = sopt.minimize_scalar(sup, bounds=(-3, 3), method="bounded", options={"xatol": 1e-10})
    assert v == pytest.approx(ref.fun, rel=1e-6)
    assert c == pytest.approx(ref.x, abs=1e-3)
    assert v <= big_c(T, K1, K2)


def test_optimize_never_worse_than_closed_form():
    for pin in (ConstantPinching(0.0, 2.0), ConstantPinching(1.0, 1.0), ConstantPinching(-1.0, 0.5)):
        a = h_bound(1.0, pin)
        b = h_bound(1.0, pin, OPT)
        assert b.h <= a.h + 1e-9
        assert len(b.c_stars) == 3


def test_optimize_failure_carries_fallback(monkeypatch):
    import pathgap.bounds as bounds

    monkeypatch.setattr(bounds, "inf_over_c", lambda g, r, tol: (0.0, 1e9))
    with pytest.raises(OptimizationError) as info:
        h_bound(1.0, ConstantPinching(0.0, 1.0), OPT)
    assert info.value.fallback == h_bound(1.0, ConstantPinching(0.0, 1.0))


@pytest.mark.parametrize("k1,k2", [(0.0, 2.0), (1.0, 3.0), (-0.5, 1.5), (-1.0, 0.5), (-2.0, -1.0)])
def test_short_time_t2_coefficient(k1, k2):
    pin = ConstantPinching(k1, k2)
    a, c2 = asymptotic_coefficients(pin)
    rows = compare_asymptotics(k1, k2, np.linspace(1e-3, 1e-2, 10))
    assert fitted_t2(rows, "h", a) == pytest.approx(c2, rel=0.05, abs=1e-6)


def test_k1_zero_and_fang_wu_coefficients():
    pin = ConstantPinching(0.0, 2.0)
    assert asymptotic_coefficients(pin)[1] == pytest.approx(5 / 48 * 4)
    rows = compare_asymptotics(0.0, 2.0, np.linspace(1e-3, 1e-2, 10))
    assert fitted_t2(rows, "fang_wu", 1.0) == pytest.approx(4 / 8, rel=0.05)
    assert branch_coefficients(pin)["fang_wu"] == pytest.approx(0.5)


@pytest.mark.parametrize("k1,k2", [(0.5, 2.0), (-0.5, 1.0), (-1.5, 0.5)])
def test_branch_coefficients_match_fits(k1, k2):
    pin = ConstantPinching(k1, k2)
    bc = branch_coefficients(pin)
    rows = compare_asymptotics(k1, k2, np.linspace(1e-3, 1e-2, 10))
    a_fw = k2 / 2 if k1 >= 0 or k1 + k2 >= 0 else -k1 / 2
    assert fitted_t2(rows, "fang_wu", a_fw) == pytest.approx(bc["fang_wu"], rel=0.05)


def test_asymptotic_bound_close_for_small_T():
    pin = ConstantPinching(0.5, 1.5)
    for T in (1e-3, 5e-3):
        assert h_bound(T, pin).h - asymptotic_bound(T, pin) == pytest.approx(0.0, abs=T**2)
    with pytest.raises(DomainError):
        compare_asymptotics(0.0, 1.0, [0.5])


def test_tilde_h_constant_curves_reduce():
    for k1, k2 in ((0.0, 2.0), (1.0, 1.0), (-1.0, 0.5)):
        a = h_bound(0.8, ConstantPinching(k1, k2))
        b = tilde_h(0.8, TimeCurve.constant(k1), TimeCurve.constant(k2))
        assert b.h == pytest.approx(a.h, rel=1e-8)


def test_tilde_h_zero_curvature_is_one():
    assert tilde_h(0.5, 0.0, 0.0).h == 1.0
    with pytest.raises(DomainError):
        tilde_h(1.0, 1.0, TimeCurve.piecewise_linear([0, 1], [2, 0]))


def test_tilde_s_optimized_not_worse():
    K1 = TimeCurve.piecewise_linear([0, 1], [1.0, -0.5])
    K2 = TimeCurve.constant(1.5)
    _, base = tilde_s(1.0, K1, K2)
    _, opt = tilde_s(1.0, K1, K2, OPT)
    _, pl = tilde_s(1.0, K1, K2, SearchPolicy(SearchMode.OPTIMIZE_C, c_knots=3))
    assert opt <= base + 1e-9
    assert pl <= base + 1e-9


def test_time_varying_bound_between_constant_envelopes():
    K1 = TimeCurve.piecewise_linear([0, 1], [0.5, 1.0])
    lo = tilde_h(1.0, TimeCurve.constant(1.0), TimeCurve.constant(1.0)).h
    mid = tilde_h(1.0, K1, TimeCurve.constant(1.0)).h
    hi = tilde_h(1.0, TimeCurve.constant(0.5), TimeCurve.constant(1.0)).h
    assert lo - 1e-9 <= mid <= hi + 1e-9
