"""Cylindrical functionals on path space, their gradients and MC estimators.

All path-space gradients are computed in frame coordinates: the base
gradient of the i-th argument contributes ``g_i = u(t_i)^T grad f_i``, which
is also the frame representation at any earlier time of its inverse
parallel transport.  The indicator is the strict one, ``t < t_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .optimize import as_curve
from .pathsim import PathEnsemble


class FunctionalError(ValueError):
    pass


class EntropyDomainError(FunctionalError):
    pass


# --------------------------------------------------------------------------
# base functions on the ambient space


@dataclass(frozen=True)
class BaseFunction:
    """f and its ambient gradient, both vectorised over points of shape (n, D)."""

    name: str
    f: Callable
    grad: Callable
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.f(np.atleast_2d(x))

    def spec(self):
        return {"kind": self.name, **self.params}


def linear(v) -> BaseFunction:
    v = np.asarray(v, dtype=float)
    return BaseFunction("linear", lambda x: x @ v, lambda x: np.broadcast_to(v, x.shape).copy(), {"v": v.tolist()})


def exp_linear(v, scale: float = 1.0) -> BaseFunction:
    v = np.asarray(v, dtype=float)

    def f(x):
        return np.exp(scale * (x @ v))

    return BaseFunction("exp_linear", f, lambda x: scale * f(x)[:, None] * v, {"v": v.tolist(), "scale": scale})


def bump(center, width: float = 1.0, amplitude: float = 1.0, offset: float = 1.0) -> BaseFunction:
    """offset + amplitude * exp(-|x - center|^2 / (2 width^2)) in ambient coordinates."""
    c = np.asarray(center, dtype=float)

    def g(x):
        return np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width**2))

    return BaseFunction(
        "bump",
        lambda x: offset + amplitude * g(x),
        lambda x: -amplitude * g(x)[:, None] * (x - c) / width**2,
        {"center": c.tolist(), "width": width, "amplitude": amplitude, "offset": offset},
    )


def base_from_spec(spec: dict) -> BaseFunction:
    kind = spec.get("kind")
    if kind == "linear":
        return linear(spec["v"])
    if kind == "exp_linear":
        return exp_linear(spec["v"], float(spec.get("scale", 1.0)))
    if kind == "bump":
        return bump(spec["center"], float(spec.get("width", 1.0)), float(spec.get("amplitude", 1.0)),
                    float(spec.get("offset", 1.0)))
    raise FunctionalError(f"unknown base function kind {kind!r}")


# --------------------------------------------------------------------------
# cylindrical functions


@dataclass(frozen=True)
class CylindricalFunction:
    """F(gamma) = combine(f_1(gamma_{t_1}), ..., f_n(gamma_{t_n})).

    ``combine`` is "product" or "sum" of the factors; a single factor is
    just f(gamma_t).
    """

    times: tuple
    factors: tuple
    combine: str = "product"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size < 1 or t.size != len(self.factors):
            raise FunctionalError("need one factor per time and at least one time")
        if np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise FunctionalError("times must be strictly increasing in (0, T]")
        if self.combine not in ("product", "sum"):
            raise FunctionalError("combine must be 'product' or 'sum'")

    @classmethod
    def single(cls, f: BaseFunction, t: float) -> "CylindricalFunction":
        return cls((float(t),), (f,))

    @classmethod
    def product(cls, fs: Sequence[BaseFunction], ts: Sequence[float]) -> "CylindricalFunction":
        return cls(tuple(map(float, ts)), tuple(fs), "product")

    @classmethod
    def sum(cls, fs: Sequence[BaseFunction], ts: Sequence[float]) -> "CylindricalFunction":
        return cls(tuple(map(float, ts)), tuple(fs), "sum")

    def evaluate_points(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        vals = [f(x) for f, x in zip(self.factors, xs)]
        return np.prod(vals, axis=0) if self.combine == "product" else np.sum(vals, axis=0)

    def gradients_points(self, xs: Sequence[np.ndarray]) -> list:
        """Ambient gradients with respect to each argument."""
        grads = [f.grad(x) for f, x in zip(self.factors, xs)]
        if self.combine == "sum" or len(grads) == 1:
            return grads
        vals = [f(x) for f, x in zip(self.factors, xs)]
        out = []
        for i, g in enumerate(grads):
            others = np.prod([v for j, v in enumerate(vals) if j != i], axis=0) if len(vals) > 1 else 1.0
            out.append(np.asarray(others)[:, None] * g)
        return out

    def _xs(self, ens: PathEnsemble):
        return [ens.x[:, ens.index(t)] for t in self.times]

    def value(self, ens: PathEnsemble) -> np.ndarray:
        return self.evaluate_points(self._xs(ens))

    def frame_gradients(self, ens: PathEnsemble) -> np.ndarray:
        """Frame components g_i = u(t_i)^T grad f_i, shape (n, k, d)."""
        xs = self._xs(ens)
        grads = self.gradients_points(xs)
        return np.stack([np.einsum("nia,ni->na", ens.u[:, ens.index(t)], g) for t, g in zip(self.times, grads)], axis=1)

    def spec(self) -> dict:
        return {"times": list(self.times), "factors": [f.spec() for f in self.factors], "combine": self.combine}


def cylindrical_from_spec(spec: dict) -> CylindricalFunction:
    return CylindricalFunction(tuple(map(float, spec["times"])), tuple(base_from_spec(f) for f in spec["factors"]),
                               spec.get("combine", "product"))


def gradient_fd_error(F: CylindricalFunction, model, seed: int = 0, n: int = 8, eps: float = 1e-6) -> float:
    """Max gap between analytic gradients and central differences along geodesics."""
    rng = np.random.default_rng(seed)
    xs = [model.sample_points(rng, n, spread=1.0) for _ in F.times]
    grads = F.gradients_points(xs)
    worst = 0.0
    for i in range(len(F.times)):
        X = model.project(xs[i], rng.standard_normal(xs[i].shape))
        plus, minus = list(xs), list(xs)
        plus[i] = model.exp_transport(xs[i], eps * X)[0]
        minus[i] = model.exp_transport(xs[i], -eps * X)[0]
        fd = (F.evaluate_points(plus) - F.evaluate_points(minus)) / (2 * eps)
        an = np.sum(grads[i] * X, axis=-1)
        worst = max(worst, float(np.max(np.abs(fd - an) / (1 + np.abs(an)))))
    return worst


# --------------------------------------------------------------------------
# gradients


class GradientKind(str, Enum):
    INTRINSIC = "Intrinsic"
    DAMPED = "Damped"
    MODIFIED = "Modified"


def _kbar(pinch):
    """K(t) = int_0^t (k1 + k2)/2 as a callable, from a certificate or a (k1, k2) pair."""
    if pinch is None:
        raise FunctionalError("the modified gradient needs pinching bounds")
    if hasattr(pinch, "k1"):
        k1, k2 = as_curve(pinch.k1), as_curve(pinch.k2)
    else:
        k1, k2 = as_curve(pinch[0]), as_curve(pinch[1])
    if k1.is_constant and k2.is_constant:
        kb = 0.5 * (k1.value + k2.value)
        return lambda t: kb * np.asarray(t, dtype=float), kb
    cache = {}

    def K(t):
        t = np.asarray(t, dtype=float)
        tmax = float(np.max(t)) if t.size else 0.0
        key = round(tmax, 12)
        if key not in cache:
            s = np.linspace(0.0, max(tmax, 1e-12), 4097)
            cache[key] = (s, cumulative_simpson(0.5 * (k1(s) + k2(s)), x=s, initial=0.0))
        s, v = cache[key]
        return np.interp(t, s, v)

    return K, None


def gradient_coords(F: CylindricalFunction, ens: PathEnsemble, t: float, kind: GradientKind = GradientKind.INTRINSIC,
                    pinch=None) -> np.ndarray:
    """Path-space gradient at partition time t in frame coordinates, shape (n, d)."""
    kind = GradientKind(kind)
    ens.index(t)
    g = F.frame_gradients(ens)
    out = np.zeros((ens.n_paths, ens.d))
    if kind is GradientKind.MODIFIED:
        K, _ = _kbar(pinch)
        Kt = float(K(t))
    for i, ti in enumerate(F.times):
        if not t < ti:
            continue
        if kind is GradientKind.INTRINSIC:
            out += g[:, i]
        elif kind is GradientKind.DAMPED:
            out += np.einsum("nab,nb->na", ens.q_matrix(t, ti), g[:, i])
        else:
            out += math.exp(-0.5 * (float(K(ti)) - Kt)) * g[:, i]
    return out


def gradient_at(F, ens, t, kind=GradientKind.INTRINSIC, pinch=None) -> np.ndarray:
    """Path-space gradient at x(t) as ambient tangent vectors, shape (n, D)."""
    c = gradient_coords(F, ens, t, kind, pinch)
    return np.einsum("nia,na->ni", ens.u[:, ens.index(t)], c)


# --------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    std_error: float
    n_paths: int
    estimator: str = ""
    bias: float | None = None

    def to_dict(self) -> dict:
        d = {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths, "estimator": self.estimator}
        if self.bias is not None:
            d["bias"] = self.bias
        return d


def _estimate(samples, estimator, bias=None) -> EnergyEstimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return EnergyEstimate(float(samples.mean()), se, n, estimator, bias)


def _interval_bounds(F):
    t = np.asarray(F.times)
    return np.concatenate([[0.0], t[:-1]]), t


def _exp_integral(K, kb, a, b):
    """int_a^b exp(K(s)) ds."""
    if kb is not None:
        if kb == 0.0:
            return b - a
        return math.exp(kb * a) * math.expm1(kb * (b - a)) / kb
    s = np.linspace(a, b, 257)
    return float(simpson(np.exp(K(s)), x=s))


def energy_samples(F: CylindricalFunction, ens: PathEnsemble, kind=GradientKind.INTRINSIC, pinch=None) -> np.ndarray:
    """Per-path int_0^T |gradient_t F|^2 dt."""
    kind = GradientKind(kind)
    g = F.frame_gradients(ens)
    n, k, d = g.shape
    if kind is GradientKind.DAMPED:
        return _damped_energy(F, ens, g)
    lo, hi = _interval_bounds(F)
    out = np.zeros(n)
    if kind is GradientKind.INTRINSIC:
        tail = np.cumsum(g[:, ::-1], axis=1)[:, ::-1]
        for m in range(k):
            out += (hi[m] - lo[m]) * np.sum(tail[:, m] ** 2, axis=1)
        return out
    K, kb = _kbar(pinch)
    w = np.exp(-0.5 * np.asarray(K(np.asarray(F.times))))
    tail = np.cumsum((g * w[None, :, None])[:, ::-1], axis=1)[:, ::-1]
    for m in range(k):
        out += _exp_integral(K, kb, lo[m], hi[m]) * np.sum(tail[:, m] ** 2, axis=1)
    return out


def _damped_energy(F, ens, g):
    if ens.q is None:
        raise FunctionalError("damped gradient needs an ensemble with Q")
    cyl = {ens.index(t): i for i, t in enumerate(F.times)}
    P = ens.partition.size
    W = np.zeros((ens.n_paths, ens.d))
    out = np.zeros(ens.n_paths)
    for k in range(P - 2, -1, -1):
        right = W + g[:, cyl[k + 1]] if (k + 1) in cyl else W
        W = np.einsum("nab,nb->na", ens.q[:, k], right)
        dt = ens.partition[k + 1] - ens.partition[k]
        out += 0.5 * dt * (np.sum(W**2, axis=1) + np.sum(right**2, axis=1))
    return out


def dirichlet_energy(F, ens, kind=GradientKind.INTRINSIC, pinch=None) -> EnergyEstimate:
    kind = GradientKind(kind)
    how = {
        GradientKind.INTRINSIC: "exact piecewise-constant integral",
        GradientKind.MODIFIED: "exact exponential-weight integral",
        GradientKind.DAMPED: "trapezoid on the partition",
    }[kind]
    return _estimate(energy_samples(F, ens, kind, pinch), f"{kind.value} energy, {how}")


def variance(F, ens) -> EnergyEstimate:
    """Plug-in variance; the standard error uses the influence (F - mean)^2 - var."""
    v = F.value(ens) if isinstance(F, CylindricalFunction) else np.asarray(F)
    dev2 = (v - v.mean()) ** 2
    return _estimate(dev2, "plug-in variance, delta-method SE")


def entropy_samples(G: np.ndarray, zero_convention: bool = True):
    """Plug-in Ent(G) and its influence values for G = F^2 >= 0."""
    G = np.asarray(G, dtype=float)
    if np.any(G == 0) and not zero_convention:
        raise EntropyDomainError("F^2 vanishes on some path; enable the 0 log 0 = 0 convention")
    glog = np.where(G > 0, G * np.log(np.where(G > 0, G, 1.0)), 0.0)
    m2 = G.mean()
    if m2 == 0:
        return 0.0, np.zeros_like(G), glog
    ent = float(glog.mean() - m2 * math.log(m2))
    infl = glog - (math.log(m2) + 1.0) * G
    return ent, infl, glog


def entropy(F, ens, zero_convention: bool = True) -> EnergyEstimate:
    """Ent(F^2) = E[F^2 log F^2] - E[F^2] log E[F^2].

    Standard error from the influence G log G - (log E G + 1) G; the
    jackknife bias estimate is reported alongside, not subtracted.
    """
    v = F.value(ens) if isinstance(F, CylindricalFunction) else np.asarray(F)
    G = v * v
    ent, infl, glog = entropy_samples(G, zero_convention)
    n = G.size
    if n > 2 and ent != 0.0:
        m_loo = (G.sum() - G) / (n - 1)
        a_loo = (glog.sum() - glog) / (n - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            e_loo = a_loo - np.where(m_loo > 0, m_loo * np.log(np.where(m_loo > 0, m_loo, 1.0)), 0.0)
        bias = float((n - 1) * (e_loo.mean() - ent))
    else:
        bias = 0.0
    se = float(infl.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return EnergyEstimate(ent, se, n, "plug-in entropy, delta-method SE, jackknife bias", bias)


# --------------------------------------------------------------------------
# pathwise chain inequalities


@dataclass(frozen=True)
class ChainReport:
    name: str
    max_excess: float  # max over paths and times of lhs - rhs - slack (<= 0 means it holds)
    slack: float
    n_checked: int

    @property
    def holds(self) -> bool:
        return self.max_excess <= 0.0


def _norm_tails(g, w=None):
    gw = g if w is None else g * w[None, :, None]
    tail = np.cumsum(gw[:, ::-1], axis=1)[:, ::-1]
    return np.linalg.norm(tail, axis=2)  # (n, k): norm on interval m


def _weighted_tail_integral(F, t, norms, weight):
    """int_t^T weight(s) |D_s| ds with |D_s| piecewise constant on cylinder intervals."""
    lo, hi = _interval_bounds(F)
    out = np.zeros(norms.shape[0])
    for m in range(len(F.times)):
        a, b = max(lo[m], t), hi[m]
        if b <= a:
            continue
        out += weight(a, b) * norms[:, m]
    return out


def chain_damped(F, ens, k1: float, k2: float, h: float | None = None) -> ChainReport:
    """|D~_t F| <= |D_t F| + (|k1| v |k2|)/2 int_t^T e^{-k1 (s-t)/2} |D_s F| ds at every partition time."""
    h = ens.cfg.h if h is None else h
    kmax = max(abs(k1), abs(k2))
    g = F.frame_gradients(ens)
    norms = _norm_tails(g)
    worst, count = -np.inf, 0
    for t in ens.partition[:-1]:
        lhs = np.linalg.norm(gradient_coords(F, ens, t, GradientKind.DAMPED), axis=1)
        dt_norm = np.linalg.norm(gradient_coords(F, ens, t), axis=1)

        def wgt(a, b, t=t):
            return math.exp(-0.5 * k1 * (a - t)) * _E(0.5 * k1, b - a)

        rhs = dt_norm + 0.5 * kmax * _weighted_tail_integral(F, t, norms, wgt)
        excess = lhs - rhs - 10 * h * np.maximum(1.0, rhs)
        worst = max(worst, float(excess.max()))
        count += lhs.size
    return ChainReport("damped vs intrinsic", worst, 10 * h, count)


def chain_damped_modified(F, ens, k1: float, k2: float, h: float | None = None) -> ChainReport:
    """|D~_t F| <= |D^_t F| + (k2-k1)/4 int_t^T e^{-k1 (s-t)/2} |D^_s F| ds."""
    h = ens.cfg.h if h is None else h
    kt = 0.5 * (k2 - k1)
    kb = 0.5 * (k1 + k2)
    g = F.frame_gradients(ens)
    # |D^_s| = e^{kb s/2} |sum_{t_i > s} e^{-kb t_i/2} g_i|
    w = np.exp(-0.5 * kb * np.asarray(F.times))
    norms = _norm_tails(g, w)
    worst, count = -np.inf, 0
    for t in ens.partition[:-1]:
        lhs = np.linalg.norm(gradient_coords(F, ens, t, GradientKind.DAMPED), axis=1)
        dhat = np.linalg.norm(gradient_coords(F, ens, t, GradientKind.MODIFIED, (k1, k2)), axis=1)

        def wgt(a, b, t=t):
            # int_a^b e^{-k1 (s-t)/2} e^{kb s/2} ds
            return math.exp(0.5 * k1 * t) * math.exp(0.5 * (kb - k1) * a) * _E(-0.5 * (kb - k1), b - a)

        rhs = dhat + 0.5 * kt * _weighted_tail_integral(F, t, norms, wgt)
        excess = lhs - rhs - 10 * h * np.maximum(1.0, rhs)
        worst = max(worst, float(excess.max()))
        count += lhs.size
    return ChainReport("damped vs modified", worst, 10 * h, count)


def chain_modified(F, ens, k1, k2, h: float | None = None) -> ChainReport:
    """|D^_t F| <= |D_t F| + 1/2 int_t^T |kbar(s)| e^{-1/2 int_t^s kbar} |D_s F| ds (kbar may vary in time)."""
    h = ens.cfg.h if h is None else h
    k1c, k2c = as_curve(k1), as_curve(k2)
    K, _ = _kbar((k1c, k2c))
    g = F.frame_gradients(ens)
    norms = _norm_tails(g)
    worst, count = -np.inf, 0
    for t in ens.partition[:-1]:
        lhs = np.linalg.norm(gradient_coords(F, ens, t, GradientKind.MODIFIED, (k1c, k2c)), axis=1)
        dt_norm = np.linalg.norm(gradient_coords(F, ens, t), axis=1)
        Kt = float(K(t))

        def wgt(a, b):
            s = np.linspace(a, b, 129)
            kb = 0.5 * (np.asarray(k1c(s)) + np.asarray(k2c(s)))
            return float(simpson(np.abs(kb) * np.exp(-0.5 * (K(s) - Kt)), x=s))

        rhs = dt_norm + 0.5 * _weighted_tail_integral(F, t, norms, wgt)
        excess = lhs - rhs - 10 * h * np.maximum(1.0, rhs)
        worst = max(worst, float(excess.max()))
        count += lhs.size
    return ChainReport("modified vs intrinsic", worst, 10 * h, count)


def _E(x, L):
    if abs(x) < 1e-12:
        return L
    return -math.expm1(-x * L) / x
