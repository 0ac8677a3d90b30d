"""Closed-form spectral-gap bounds for the path-space Ornstein-Uhlenbeck operator.

Notation follows the curvature pinching ``k1 <= Ric^Z <= k2``.  ``C`` is the
closed-form supremum of the weight function at c = 0, ``S`` the inf over c of
the sup over t, and ``H`` the minimum of the Fang-Wu branch and the product
branch.  The time-dependent variants (``tilde_s``, ``tilde_h``) take
curvature bounds as :class:`~pathgap.optimize.TimeCurve` objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .optimize import (
    OptimizationError,
    SearchMode,
    SearchPolicy,
    TimeCurve,
    _golden,
    as_curve,
    inf_over_c,
    sup_over_t,
    tilde_lambda_c,
    tilde_lambda_sweep,
)

# below this |K1| the K1 = 0 branch is used (beta = K2/K1 is never formed)
K1_ZERO = 1e-12
# linear-limit branch for vanishing exponents in the Lambda^c integrals
EXPONENT_ZERO = 1e-12
# K1 > 0 literal formula loses ~eps * beta^2; beyond this the maximiser is used
BETA_LITERAL_MAX = 100.0


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantPinching:
    k1: float
    k2: float

    def __post_init__(self):
        if not (math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise DomainError("pinching bounds must be finite")
        if self.k1 > self.k2:
            raise DomainError(f"need k1 <= k2, got k1={self.k1}, k2={self.k2}")

    @property
    def kmax(self) -> float:
        return max(abs(self.k1), abs(self.k2))

    @property
    def case(self) -> str:
        """Which short-time regime applies: 'i' (k1>=0), 'ii' or 'iii' (k1+k2<0)."""
        if self.k1 >= 0:
            return "i"
        if self.k1 + self.k2 >= 0:
            return "ii"
        return "iii"

    def fang_wu_args(self) -> tuple[float, float]:
        return (self.k1, self.kmax)

    def product_args(self) -> tuple[tuple[float, float], tuple[float, float]]:
        k1, k2 = self.k1, self.k2
        return (k1, (k2 - k1) / 2.0), ((k1 + k2) / 2.0, abs(k1 + k2) / 2.0)


class BoundBranch(str, Enum):
    FANG_WU = "FangWu"
    PRODUCT = "Product"


@dataclass(frozen=True)
class BoundReport:
    T: float
    fang_wu: float
    product: float
    h: float
    branch: BoundBranch
    c_star: float = 0.0
    # c for each S factor: (fang_wu, product first, product second)
    c_stars: tuple = field(default=(0.0, 0.0, 0.0))

    def as_row(self) -> dict:
        return {
            "T": self.T,
            "fang_wu": self.fang_wu,
            "product": self.product,
            "h": self.h,
            "branch": self.branch.value,
            "c_star": self.c_star,
        }


def _report(T, fw, pr, cs) -> BoundReport:
    branch = BoundBranch.FANG_WU if fw <= pr else BoundBranch.PRODUCT
    c_star = cs[0] if branch is BoundBranch.FANG_WU else cs[1]
    return BoundReport(T=T, fang_wu=fw, product=pr, h=min(fw, pr), branch=branch, c_star=c_star, c_stars=tuple(cs))


# --------------------------------------------------------------------------
# exponential integrals


def _E(x: float, L):
    """int_0^L exp(-x u) du, elementwise in L."""
    L = np.asarray(L, dtype=float)
    if abs(x) < EXPONENT_ZERO:
        return L - 0.5 * x * L * L
    return -np.expm1(-x * L) / x


def _moments(a: float, t: np.ndarray, kmax: int) -> np.ndarray:
    """M_k = int_0^t u^k exp(-a u) du for k = 0..kmax; shape (kmax+1, *t.shape)."""
    t = np.asarray(t, dtype=float)
    out = np.empty((kmax + 1,) + t.shape)
    ks = np.arange(kmax + 1).reshape((-1,) + (1,) * t.ndim)
    use_series = (a <= 0.0) | (a * t < 2.0)
    if np.any(use_series):
        ts = np.where(use_series, t, 0.0)
        x = -a * ts
        nterms = int(np.max(np.abs(x))) * 3 + 40 if ts.size else 40
        term = np.ones_like(ts)  # x^n / n!
        acc = np.zeros((kmax + 1,) + t.shape)
        for n in range(nterms):
            acc += term / (n + ks + 1)
            term = term * x / (n + 1)
        series = acc * ts ** (ks + 1)
        out[:] = series
    if not np.all(use_series):
        tr = np.where(use_series, 1.0, t)
        ea = np.exp(-a * tr)
        m = -np.expm1(-a * tr) / a
        rec = [m]
        for k in range(1, kmax + 1):
            m = (k * m - tr**k * ea) / a
            rec.append(m)
        rec = np.stack(rec)
        out = np.where(use_series, out, rec)
    return out


_JN = 10


def _J(a: float, b: float, t):
    """int_0^t exp(-a u) * _E(b, u) du, stable when b is small."""
    t = np.asarray(t, dtype=float)
    tau = t if a <= 0 else np.minimum(t, 1.0 / a)
    small = np.abs(b) * tau < 1e-2
    out = np.empty_like(t)
    if np.any(small):
        M = _moments(a, np.where(small, t, 0.0), _JN + 1)
        # _E(b, u) = sum_n (-b)^n u^(n+1) / (n+1)!
        acc = np.zeros_like(t)
        for n in range(_JN + 1):
            acc = acc + (-b) ** n / math.factorial(n + 1) * M[n + 1]
        out = np.where(small, acc, 0.0)
    if not np.all(small):
        with np.errstate(invalid="ignore", divide="ignore"):
            big = (_E(a, t) - _E(a + b, t)) / b
        out = np.where(small, out, big)
    return out


def _check_domain(T, K2, t=None):
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    if K2 < 0:
        raise DomainError(f"K2 must be nonnegative, got {K2}")
    if t is not None:
        tt = np.asarray(t, dtype=float)
        if np.any(tt < 0) or np.any(tt > T):
            raise DomainError("t must lie in [0, T]")


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


# --------------------------------------------------------------------------
# weight functions


def lambda_closed(t, T: float, K1: float, K2: float):
    """Weight function at c = 0, elementwise in ``t``.

    Uses the grouping 1 + A + B + A*B + q*A**2/2 of the two-case closed
    form, with A = (K2/K1)(1 - e^{-K1 t/2}), B the same with T - t and
    q = e^{-K1 (T-t)/2}.  Every term is nonnegative, so nothing cancels
    as K1 -> 0.
    """
    _check_domain(T, K2, t)
    t = np.asarray(t, dtype=float)
    if abs(K1) < K1_ZERO:
        return _ret(1.0 + K2 * T / 2.0 + K2**2 / 8.0 * (2.0 * T * t - t * t))
    x = K1 / 2.0
    A = K2 / 2.0 * _E(x, t)
    B = K2 / 2.0 * _E(x, T - t)
    q = np.exp(-x * (T - t))
    return _ret(1.0 + A + B + A * B + 0.5 * q * A * A)


def lambda_c(t, T: float, K1: float, K2: float, c: float):
    """Weight function for a constant c, elementwise in ``t``.

    beta(t) = 1 + K2/2 E(b, T-t) and the convolution with exp(-a (t-s)) is
    integrated exactly, with a = K1/2 + c and b = K1/2 - c.
    """
    _check_domain(T, K2, t)
    t = np.asarray(t, dtype=float)
    a, b = K1 / 2.0 + c, K1 / 2.0 - c
    half = K2 / 2.0
    Eb = _E(b, T - t)
    Ea = _E(a, t)
    beta = 1.0 + half * Eb
    conv = Ea + half * (Eb * Ea + np.exp(-b * (T - t)) * _J(a, b, t))
    return _ret(beta + half * conv)


def big_c(T: float, K1: float, K2: float) -> float:
    """Three-case closed form of sup_t of the c = 0 weight function."""
    _check_domain(T, K2)
    if abs(K1) < K1_ZERO:
        return 1.0 + K2 * T / 2.0 + K2**2 * T**2 / 8.0
    beta = K2 / K1
    if K1 < 0:
        return 0.5 + 0.5 * (1.0 + beta * -math.expm1(-K1 * T / 2.0)) ** 2
    s = -math.expm1(-K1 * T / 2.0)
    if beta <= BETA_LITERAL_MAX:
        root = math.sqrt((2.0 + beta) * (2.0 + beta + beta * s))
        return (1.0 + beta) ** 2 - beta * root * math.exp(-K1 * T / 4.0)
    # the literal value is the weight function at its interior maximiser
    t_star = T / 2.0 + math.log1p(K2 * s / (2.0 * K1 + K2)) / K1
    return float(lambda_closed(min(max(t_star, 0.0), T), T, K1, K2))


def s_value(T: float, K1: float, K2: float, policy: SearchPolicy | None = None) -> tuple[float, float]:
    """(c*, inf_c sup_t Lambda^c) by numeric search; (0, C) for ClosedFormOnly."""
    policy = policy or SearchPolicy()
    if policy.mode is SearchMode.CLOSED_FORM_ONLY:
        return 0.0, big_c(T, K1, K2)
    _check_domain(T, K2)
    if K2 == 0.0:
        return 0.0, 1.0

    def g(c):
        return sup_over_t(lambda t: lambda_c(t, T, K1, K2, c), T, policy.t_grid, policy.refinement_iters, stages=1)[1]

    c_range = policy.resolved_c_range(max(abs(K1), abs(K2)))
    c, v = inf_over_c(g, c_range, policy.tol)
    cf = big_c(T, K1, K2)
    if v > cf + 1e-8 * max(1.0, cf):
        raise OptimizationError(f"numeric S={v} exceeds closed form C={cf}")
    return float(c), float(v)


def h_bound(T: float, pin: ConstantPinching, c_search: SearchPolicy | None = None) -> BoundReport:
    """H(T, k1, k2): the smaller of the Fang-Wu and product branches."""
    policy = c_search or SearchPolicy()
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    (a1, a2), (b1, b2) = pin.product_args()
    try:
        c0, fw = s_value(T, *pin.fang_wu_args(), policy)
        c1, p1 = s_value(T, a1, a2, policy)
        c2, p2 = s_value(T, b1, b2, policy)
    except OptimizationError as exc:
        if policy.mode is SearchMode.CLOSED_FORM_ONLY:
            raise
        raise OptimizationError(str(exc), fallback=h_bound(T, pin)) from exc
    return _report(T, fw, p1 * p2, (c0, c1, c2))


# --------------------------------------------------------------------------
# short-time behaviour


def asymptotic_coefficients(pin: ConstantPinching) -> tuple[float, float]:
    """(first-order, second-order) coefficients of the short-time expansion of H."""
    k1, k2 = pin.k1, pin.k2
    if pin.case == "i":
        if 3.0 * k1 + k2 == 0.0:
            return 0.0, 0.0
        return k2 / 2.0, (k2**2 - (7 * k1 + k2) * (k1 + k2) * k2 / (6.0 * (3 * k1 + k2))) / 8.0
    if pin.case == "ii":
        return k2 / 2.0, (k2**2 + (2 * k1**2 - k2**2 - 5 * k1 * k2) / 6.0) / 8.0
    return -k1 / 2.0, (k1**2 + (3 * k1**2 + k2**2) / 4.0) / 8.0


def asymptotic_bound(T: float, pin: ConstantPinching) -> float:
    """Second-order short-time polynomial for H (no remainder term)."""
    a, c2 = asymptotic_coefficients(pin)
    return 1.0 + a * T + c2 * T * T


def branch_coefficients(pin: ConstantPinching) -> dict:
    """T^2 coefficients of each branch, as printed in the expansion of C.

    The first-order coefficient is shared by both branches.
    """
    k1, k2 = pin.k1, pin.k2
    a, prod = asymptotic_coefficients(pin)
    if pin.case == "i":
        fw = k2**2 / 8.0 - (k1 * k2 * (k1 + k2) / (8.0 * (2 * k1 + k2)) if 2 * k1 + k2 else 0.0)
    elif pin.case == "ii":
        fw = k2**2 / 8.0 - k1 * k2 / 8.0
    else:
        fw = k1**2 / 8.0 + k1**2 / 8.0
    return {"first_order": a, "fang_wu": fw, "product": prod}


def explicit_expansions(T: float, pin: ConstantPinching) -> tuple[float, float]:
    """Fully expanded four-case forms of both branches (gamma = k2/k1)."""
    k1, k2 = pin.k1, pin.k2
    e = math.exp
    if k1 + k2 >= 0:
        # C(T, k, k) with k = (k1+k2)/2, i.e. beta = 1
        k_sum = k1 + k2
        second = 4.0 - math.sqrt(12.0 - 3.0 * e(-k_sum * T / 4.0)) * e(-k_sum * T / 8.0)
    else:
        second = 0.5 * (1.0 + e(-(k1 + k2) * T / 2.0))
    if k1 == 0.0:
        fw = 1.0 + k2 * T / 2.0 + k2**2 * T**2 / 8.0
        prod = (1.0 + k2 * T / 4.0 + k2**2 * T**2 / 32.0) * second
        return fw, prod
    g = k2 / k1
    if k1 > 0:
        fw = (g + 1) ** 2 - g * math.sqrt((2 + g) * (2 * g + 2 - g * e(-k1 * T / 2))) * e(-k1 * T / 4)
        first = 0.25 * ((g + 1) ** 2 - (g - 1) * math.sqrt(g + 3) * math.sqrt(2 * g + 2 - (g - 1) * e(-k1 * T / 2)) * e(-k1 * T / 4))
        return fw, first * second
    inner = 1.0 + 0.25 * (g + 1 - (g - 1) * e(-k1 * T / 2)) ** 2
    if k1 + k2 >= 0:
        fw = 0.5 + 0.5 * (1 + g - g * e(-k1 * T / 2)) ** 2
        return fw, 0.5 * inner * second
    fw = 0.5 * (1 + e(-k1 * T))
    return fw, 0.5 * inner * second


# --------------------------------------------------------------------------
# time-dependent bounds


def _tilde_sup(T, K1, K2, c, n, iters):
    s, vals = tilde_lambda_sweep(T, K1, K2, c, n)
    i = int(np.argmax(vals))
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, n)]
    t, v, _ = _golden(lambda x: tilde_lambda_c(x, T, K1, K2, c, n=n), lo, hi, iters, maximize=True)
    if vals[i] >= v:
        return float(s[i]), float(vals[i])
    return t, v


def tilde_s(T: float, K1, K2, policy: SearchPolicy | None = None, n: int = 1024) -> tuple[object, float]:
    """inf over c of sup_t of the time-dependent weight function.

    c ranges over constants (or piecewise-linear curves with
    ``policy.c_knots`` knots); any c gives a valid bound, so the restriction
    only costs sharpness.
    """
    policy = policy or SearchPolicy()
    K1, K2 = as_curve(K1), as_curve(K2)
    if K2.is_constant and K2.value == 0.0:
        return 0.0, 1.0
    if policy.mode is SearchMode.CLOSED_FORM_ONLY:
        return 0.0, _tilde_sup(T, K1, K2, TimeCurve.constant(0.0), n, policy.refinement_iters)[1]

    def coarse(c):
        return float(np.max(tilde_lambda_sweep(T, K1, K2, c, n)[1]))

    kmax = max(K1.sup_norm(T), K2.sup_norm(T))
    c_range = policy.resolved_c_range(kmax)
    c_best, _ = inf_over_c(coarse, c_range, max(policy.tol, 1e-7))
    c_curve = TimeCurve.constant(c_best)
    if policy.c_knots > 0:
        knots = np.linspace(0.0, T, policy.c_knots)
        vals = np.full(policy.c_knots, c_best)
        for _sweep in range(2):
            for j in range(policy.c_knots):
                def obj(x, j=j):
                    trial = vals.copy()
                    trial[j] = x
                    return coarse(TimeCurve.piecewise_linear(knots, trial))
                x, v, _ = _golden(obj, c_range[0], c_range[1], 40, maximize=False)
                if v < obj(vals[j]):
                    vals[j] = x
        c_curve = TimeCurve.piecewise_linear(knots, vals)
        if coarse(c_curve) > coarse(c_best):
            c_curve = TimeCurve.constant(c_best)
    value = _tilde_sup(T, K1, K2, c_curve, n, policy.refinement_iters)[1]
    zero = _tilde_sup(T, K1, K2, TimeCurve.constant(0.0), n, policy.refinement_iters)[1]
    if zero <= value:
        return 0.0, zero
    return (c_curve.value if c_curve.is_constant else c_curve), float(value)


def tilde_h(T: float, k1, k2, policy: SearchPolicy | None = None, n: int = 1024) -> BoundReport:
    """Time-dependent analogue of :func:`h_bound` for curvature-bound curves."""
    if not T > 0:
        raise DomainError(f"T must be positive, got {T}")
    k1, k2 = as_curve(k1), as_curve(k2)
    grid = np.linspace(0.0, T, 257)
    if np.any(k1(grid) > k2(grid) + 1e-12):
        raise DomainError("need k1(t) <= k2(t) on [0, T]")
    kmax = TimeCurve.combine(lambda a, b: np.maximum(np.abs(a), np.abs(b)), k1, k2)
    half_gap = TimeCurve.combine(lambda a, b: (b - a) / 2.0, k1, k2)
    mid = TimeCurve.combine(lambda a, b: (a + b) / 2.0, k1, k2)
    abs_mid = TimeCurve.combine(lambda a, b: np.abs(a + b) / 2.0, k1, k2)
    c0, fw = tilde_s(T, k1, kmax, policy, n)
    c1, p1 = tilde_s(T, k1, half_gap, policy, n)
    c2, p2 = tilde_s(T, mid, abs_mid, policy, n)
    cs = tuple(c if isinstance(c, float) else float("nan") for c in (c0, c1, c2))
    return _report(T, fw, p1 * p2, cs)
