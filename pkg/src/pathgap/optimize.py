"""Scalar search and quadrature behind the S / S-tilde bound functions.

``sup_over_t`` and ``inf_over_c`` are generic (grid scan followed by
golden-section refinement).  ``tilde_lambda_c`` evaluates the
time-dependent weight function for curvature bounds given as curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class QuadratureError(RuntimeError):
    """Successive grid refinements did not agree to the requested tolerance."""


class SearchRangeError(ValueError):
    pass


class OptimizationError(RuntimeError):
    """The c-search failed; ``fallback`` holds the closed-form-only answer if known."""

    def __init__(self, message, fallback=None):
        super().__init__(message)
        self.fallback = fallback


# --------------------------------------------------------------------------
# time curves


class CurveKind(str, Enum):
    CONSTANT = "Constant"
    PIECEWISE_LINEAR = "PiecewiseLinear"
    TABULATED = "Tabulated"
    FUNCTION = "Function"


@dataclass
class TimeCurve:
    """A continuous real function of time on [0, T].

    Build with the classmethods rather than the constructor.  ``FUNCTION``
    curves wrap a vectorised callable and are what pointwise combinations
    of other curves produce.
    """

    kind: CurveKind
    value: float = 0.0
    knots: tuple = ()
    values: tuple = ()
    fn: Callable | None = None
    dfn: Callable | None = None
    _spline: CubicSpline | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind in (CurveKind.PIECEWISE_LINEAR, CurveKind.TABULATED):
            k = np.asarray(self.knots, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if k.ndim != 1 or k.shape != v.shape or k.size < 2:
                raise ValueError("knots and values must be 1-d arrays of equal length >= 2")
            if np.any(np.diff(k) <= 0):
                raise ValueError("knots must be strictly increasing")
            if self.kind is CurveKind.TABULATED:
                self._spline = CubicSpline(k, v)
        elif self.kind is CurveKind.FUNCTION and self.fn is None:
            raise ValueError("FUNCTION curve needs fn")

    @classmethod
    def constant(cls, value: float) -> "TimeCurve":
        return cls(CurveKind.CONSTANT, value=float(value))

    @classmethod
    def piecewise_linear(cls, knots: Sequence[float], values: Sequence[float]) -> "TimeCurve":
        return cls(CurveKind.PIECEWISE_LINEAR, knots=tuple(map(float, knots)), values=tuple(map(float, values)))

    @classmethod
    def tabulated(cls, knots: Sequence[float], values: Sequence[float]) -> "TimeCurve":
        return cls(CurveKind.TABULATED, knots=tuple(map(float, knots)), values=tuple(map(float, values)))

    @classmethod
    def function(cls, fn: Callable, dfn: Callable | None = None) -> "TimeCurve":
        return cls(CurveKind.FUNCTION, fn=fn, dfn=dfn)

    @property
    def is_constant(self) -> bool:
        return self.kind is CurveKind.CONSTANT

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is CurveKind.CONSTANT:
            out = np.full_like(t, self.value)
        elif self.kind is CurveKind.PIECEWISE_LINEAR:
            out = np.interp(t, self.knots, self.values)
        elif self.kind is CurveKind.TABULATED:
            out = self._spline(t)
        else:
            out = np.broadcast_to(np.asarray(self.fn(t), dtype=float), t.shape).copy()
        return out if out.ndim else float(out)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is CurveKind.CONSTANT:
            out = np.zeros_like(t)
        elif self.kind is CurveKind.PIECEWISE_LINEAR:
            k = np.asarray(self.knots)
            slopes = np.diff(self.values) / np.diff(k)
            idx = np.clip(np.searchsorted(k, t, side="right") - 1, 0, slopes.size - 1)
            out = slopes[idx]
        elif self.kind is CurveKind.TABULATED:
            out = self._spline(t, 1)
        elif self.dfn is not None:
            out = np.broadcast_to(np.asarray(self.dfn(t), dtype=float), t.shape).copy()
        else:
            eps = 1e-6
            out = (np.asarray(self.fn(t + eps)) - np.asarray(self.fn(t - eps))) / (2 * eps)
        return out if np.ndim(out) else float(out)

    def covers(self, T: float) -> bool:
        if self.kind in (CurveKind.PIECEWISE_LINEAR, CurveKind.TABULATED):
            return self.knots[0] <= 0.0 and self.knots[-1] >= T
        return True

    def sup_norm(self, T: float, n: int = 513) -> float:
        if self.is_constant:
            return abs(self.value)
        return float(np.max(np.abs(self(np.linspace(0.0, T, n)))))

    @staticmethod
    def combine(op: Callable, *curves: "TimeCurve") -> "TimeCurve":
        """Pointwise ``op(c1(t), c2(t), ...)``; stays constant if all inputs are."""
        if all(c.is_constant for c in curves):
            return TimeCurve.constant(float(op(*[np.float64(c.value) for c in curves])))
        return TimeCurve.function(lambda t: op(*[c(t) for c in curves]))


def as_curve(x) -> TimeCurve:
    return x if isinstance(x, TimeCurve) else TimeCurve.constant(float(x))


# --------------------------------------------------------------------------
# search


class SearchMode(str, Enum):
    CLOSED_FORM_ONLY = "ClosedFormOnly"
    OPTIMIZE_C = "OptimizeC"


@dataclass(frozen=True)
class SearchPolicy:
    mode: SearchMode = SearchMode.CLOSED_FORM_ONLY
    c_range: tuple[float, float] | None = None  # None: +-5 (1 + |K|_inf)
    t_grid: int = 256
    refinement_iters: int = 40
    tol: float = 1e-9
    c_knots: int = 0  # >0: piecewise-linear c with this many knots (time-dependent bounds only)

    def __post_init__(self):
        if not 0.0 < self.tol <= 1e-2:
            raise ValueError("tol must lie in (0, 1e-2]")
        if self.t_grid < 16 or self.refinement_iters < 1:
            raise ValueError("t_grid must be >= 16 and refinement_iters >= 1")
        if self.c_range is not None:
            lo, hi = self.c_range
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError("c_range must be a finite nonempty interval")
        if not 0 <= self.c_knots <= 8:
            raise ValueError("c_knots must be between 0 and 8")

    def resolved_c_range(self, kmax: float) -> tuple[float, float]:
        if self.c_range is not None:
            return self.c_range
        w = 5.0 * (1.0 + abs(kmax))
        return (-w, w)


def _golden(f, lo, hi, iters, maximize):
    sign = -1.0 if maximize else 1.0
    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = sign * f(x1), sign * f(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = sign * f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = sign * f(x2)
    if f1 <= f2:
        return x1, sign * f1, b - a
    return x2, sign * f2, b - a


def _scalar(f):
    return lambda x: float(np.asarray(f(np.asarray([x], dtype=float))).reshape(-1)[0])


def sup_over_t(f: Callable, T: float, grid: int = 256, iters: int = 40, stages: int = 3):
    """Maximise a vectorised ``f`` over [0, T].

    A ``grid``-interval scan picks the ``stages`` best cells; each is
    refined by golden section for ``iters`` iterations.  Ties resolve to
    the smallest t.
    """
    if grid < 16:
        raise ValueError("grid must be >= 16")
    ts = np.linspace(0.0, T, grid + 1)
    vals = np.asarray(f(ts), dtype=float)
    order = np.argsort(-vals, kind="stable")
    best_t, best_v = float(ts[order[0]]), float(vals[order[0]])
    fs = _scalar(f)
    seen = set()
    for i in order[: max(stages, 1)]:
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, grid)]
        if (lo, hi) in seen:
            continue
        seen.add((lo, hi))
        t, v, _ = _golden(fs, lo, hi, iters, maximize=True)
        if v > best_v or (v == best_v and t < best_t):
            best_t, best_v = t, v
    return best_t, best_v


def inf_over_c(g: Callable[[float], float], c_range: tuple[float, float], tol: float = 1e-9,
               scan: int = 64, max_iter: int = 200):
    """Minimise scalar ``g`` over ``c_range`` (which must contain 0).

    The returned value never exceeds ``g(0)``: zero is always one of the
    scanned candidates.
    """
    lo, hi = c_range
    if not lo <= 0.0 <= hi:
        raise SearchRangeError(f"c_range {c_range} must contain 0")
    cs = np.unique(np.concatenate([np.linspace(lo, hi, scan), [0.0]]))
    vals = np.array([g(float(c)) for c in cs])
    if not np.isfinite(vals).any():
        raise OptimizationError("objective is not finite anywhere on the c grid")
    vals = np.where(np.isfinite(vals), vals, np.inf)
    i = int(np.argmin(vals))
    best_c, best_v = float(cs[i]), float(vals[i])
    a, b = cs[max(i - 1, 0)], cs[min(i + 1, cs.size - 1)]
    iters = 0
    while b - a > tol and iters < max_iter:
        # one golden pass per outer loop; bracket shrinks by INV_PHI**20
        c, v, width = _golden(g, a, b, 20, maximize=False)
        iters += 20
        if not math.isfinite(v):
            raise OptimizationError(f"objective not finite near c={c}")
        if v < best_v:
            best_c, best_v = c, v
        a, b = max(a, c - width), min(b, c + width)
        if width <= tol:
            break
    if b - a > tol and iters >= max_iter:
        raise OptimizationError(f"c-search did not converge in {max_iter} iterations")
    return best_c, best_v


# --------------------------------------------------------------------------
# time-dependent weight function


def _cumint(y, x):
    if x.size >= 3:
        return cumulative_simpson(y, x=x, initial=0.0)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def _tail_int(y, x):
    """int_{x_i}^{x_end} y for every node."""
    rev = _cumint(y[::-1], -x[::-1])
    return rev[::-1]


def tilde_lambda_on_grid(s: np.ndarray, K1: TimeCurve, K2: TimeCurve, c: TimeCurve) -> np.ndarray:
    """Weight function at every node of the grid ``s`` (s[0] = 0, s[-1] = T)."""
    k1, k2, cc = K1(s), K2(s), c(s)
    P = _cumint(0.5 * (k1 - 2.0 * cc), s)
    R = _cumint(0.5 * (k1 + 2.0 * cc), s)
    p0 = P.min()
    tail = _tail_int(k2 * np.exp(-(P - p0)), s)
    alpha = 1.0 + 0.5 * np.exp(P - p0) * tail
    r0 = R.min()
    conv = np.exp(-(R - r0)) * _cumint(alpha * np.exp(R - r0), s)
    return alpha + 0.5 * k2 * conv


def _split_grid(t: float, T: float, n: int) -> tuple[np.ndarray, int]:
    if t <= 0.0:
        return np.linspace(0.0, T, n + 1), 0
    if t >= T:
        return np.linspace(0.0, T, n + 1), n
    m = int(round(n * t / T))
    m = min(max(m + (m % 2), 2), n - 2)
    left = np.linspace(0.0, t, m + 1)
    right = np.linspace(t, T, n - m + 1)
    return np.concatenate([left, right[1:]]), m


def tilde_lambda_sweep(T: float, K1, K2, c=0.0, n: int = 1024):
    """Grid and weight-function values on a uniform ``n``-interval grid."""
    s = np.linspace(0.0, T, n + 1)
    return s, tilde_lambda_on_grid(s, as_curve(K1), as_curve(K2), as_curve(c))


def tilde_lambda_c(t: float, T: float, K1, K2, c=0.0, n: int = 1024, tol: float = 1e-9,
                   max_n: int = 1 << 16) -> float:
    """Time-dependent weight function at a single t.

    Composite Simpson on a grid with ``t`` as a node; the grid is doubled
    until two successive values agree to ``tol`` (relative to max(1, |value|)).
    """
    if T <= 0.0 or not 0.0 <= t <= T:
        raise ValueError(f"need 0 <= t <= T and T > 0, got t={t}, T={T}")
    K1, K2, c = as_curve(K1), as_curve(K2), as_curve(c)
    for curve in (K1, K2, c):
        if not curve.covers(T):
            raise ValueError("curve knots do not cover [0, T]")
    prev = None
    while n <= max_n:
        s, i = _split_grid(t, T, n)
        val = float(tilde_lambda_on_grid(s, K1, K2, c)[i])
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        n *= 2
    raise QuadratureError(f"no quadrature convergence at t={t} up to n={max_n}")
