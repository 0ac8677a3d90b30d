"""Constant-curvature model manifolds in their embedded presentations.

Points and tangent vectors are ambient arrays with a leading batch axis:
``x`` has shape ``(n, D)``, frames ``u`` shape ``(n, D, d)`` whose columns
are g_t-orthonormal tangent vectors.  The sphere lives in R^{d+1}, the
hyperbolic space on the upper sheet of the hyperboloid in Minkowski
R^{1,d} (time coordinate first) and the evolving sphere on the unit sphere
with metric g_t = phi(t)^2 * round.

Every built-in model is Einstein: Ric_t = rho(t) g_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .optimize import TimeCurve


class GeometryError(ValueError):
    pass


class NotEvolvingError(GeometryError):
    pass


class CertificateError(GeometryError):
    pass


def _batch(x):
    x = np.asarray(x, dtype=float)
    return x[None] if x.ndim == 1 else x


# --------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class ManifoldModel:
    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise GeometryError("dimension must be a positive integer")

    kind = "abstract"
    evolving = False

    @property
    def ambient_dim(self) -> int:
        return self.d + 1

    # metric ---------------------------------------------------------------
    def ambient_inner(self, X, Y):
        return np.sum(X * Y, axis=-1)

    def scale(self, t) -> float:
        """g_t = scale(t) * (ambient restriction)."""
        return 1.0

    def inner(self, t, X, Y):
        return self.scale(t) * self.ambient_inner(X, Y)

    def norm(self, t, X):
        return np.sqrt(np.maximum(self.inner(t, X, X), 0.0))

    def ricci(self, t) -> float:
        """rho with Ric_t = rho * g_t."""
        raise NotImplementedError

    def metric_rate(self, t) -> float:
        """r with d/dt g_t = r * g_t (zero for static models)."""
        return 0.0

    def curvature(self, t=0.0) -> float:
        """Sectional curvature of g_t."""
        raise NotImplementedError

    # points and tangent spaces -------------------------------------------
    def origin(self) -> np.ndarray:
        raise NotImplementedError

    def project(self, x, v):
        raise NotImplementedError

    def normalize(self, x):
        return x

    def on_manifold(self, x, tol=1e-10) -> bool:
        return bool(np.all(np.abs(self.normalize(_batch(x)) - _batch(x)) <= tol * (1 + np.abs(_batch(x)))))

    def exp_transport(self, x, v, W=None):
        """Exponential map of ambient tangent ``v`` and transport of the columns of ``W``."""
        raise NotImplementedError

    def _J(self):
        return None

    def frame_at(self, x, t=0.0) -> np.ndarray:
        """A g_t-orthonormal frame at a single point, shape (D, d)."""
        x = np.asarray(x, dtype=float)
        D = self.ambient_dim
        if D == self.d:
            cand = np.eye(D)
        else:
            drop = self._frame_drop(x)
            cand = np.stack([self.project(x[None], np.eye(D)[i][None])[0] for i in range(D) if i != drop], axis=1)
        return self.reorthonormalize(t, x[None], cand[None])[0]

    def _frame_drop(self, x):
        return int(np.argmax(np.abs(x)))

    def gram(self, t, u):
        """Gram matrix u^T g_t u for frames of shape (n, D, d)."""
        J = self._J()
        Ju = u if J is None else J[None, :, None] * u
        return self.scale(t) * np.einsum("nia,nib->nab", u, Ju)

    def frame_coords(self, t, u, w):
        """g_t(u_a, w) for tangent vectors w of shape (n, D)."""
        J = self._J()
        Jw = w if J is None else J[None] * w
        return self.scale(t) * np.einsum("nia,ni->na", u, Jw)

    def reorthonormalize(self, t, x, u):
        u = np.stack([self.project(x, u[..., a]) for a in range(u.shape[-1])], axis=-1)
        L = np.linalg.cholesky(self.gram(t, u))
        return np.swapaxes(np.linalg.solve(L, np.swapaxes(u, -1, -2)), -1, -2)

    def sample_points(self, rng: np.random.Generator, n: int, spread: float = 2.0) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(ManifoldModel):
    kind = "Euclidean"

    @property
    def ambient_dim(self):
        return self.d

    def ricci(self, t=0.0):
        return 0.0

    def curvature(self, t=0.0):
        return 0.0

    def origin(self):
        return np.zeros(self.d)

    def project(self, x, v):
        return np.asarray(v, dtype=float)

    def exp_transport(self, x, v, W=None):
        return x + v, W

    def sample_points(self, rng, n, spread=2.0):
        return spread * rng.standard_normal((n, self.d))

    def spec(self):
        return {"kind": self.kind, "d": self.d}


@dataclass(frozen=True)
class Sphere(ManifoldModel):
    radius: float = 1.0
    kind = "Sphere"

    def __post_init__(self):
        super().__post_init__()
        if not self.radius > 0:
            raise GeometryError("sphere radius must be positive")

    def ricci(self, t=0.0):
        return (self.d - 1) / self.radius**2

    def curvature(self, t=0.0):
        return 1.0 / self.radius**2

    def origin(self):
        o = np.zeros(self.d + 1)
        o[-1] = self.radius
        return o

    def project(self, x, v):
        x = np.asarray(x, dtype=float)
        return v - (np.sum(x * v, axis=-1) / self.radius**2)[..., None] * x

    def normalize(self, x):
        return self.radius * x / np.linalg.norm(x, axis=-1, keepdims=True)

    def exp_transport(self, x, v, W=None):
        return _sphere_exp(x, v, W, self.radius)

    def sample_points(self, rng, n, spread=2.0):
        return self.normalize(rng.standard_normal((n, self.d + 1)))

    def spec(self):
        return {"kind": self.kind, "d": self.d, "radius": self.radius}


def _sphere_exp(x, v, W, r):
    nv = np.linalg.norm(v, axis=-1)
    theta = nv / r
    safe = np.where(nv > 0, nv, 1.0)
    e = v / safe[:, None]
    cos, sin = np.cos(theta)[:, None], np.sin(theta)[:, None]
    x_new = cos * x + r * sin * e
    if W is None:
        return x_new, None
    ew = np.einsum("ni,nia->na", e, W)
    kick = (cos - 1.0) * e - sin * x / r
    return x_new, W + kick[:, :, None] * ew[:, None, :]


@dataclass(frozen=True)
class Hyperbolic(ManifoldModel):
    kappa: float = -1.0
    kind = "Hyperbolic"

    def __post_init__(self):
        super().__post_init__()
        if not self.kappa < 0:
            raise GeometryError("hyperbolic curvature must be negative")

    @property
    def R(self):
        return 1.0 / math.sqrt(-self.kappa)

    def _J(self):
        J = np.ones(self.d + 1)
        J[0] = -1.0
        return J

    def ambient_inner(self, X, Y):
        return np.sum(X * Y, axis=-1) - 2.0 * X[..., 0] * Y[..., 0]

    def ricci(self, t=0.0):
        return (self.d - 1) * self.kappa

    def curvature(self, t=0.0):
        return self.kappa

    def origin(self):
        o = np.zeros(self.d + 1)
        o[0] = self.R
        return o

    def project(self, x, v):
        x = np.asarray(x, dtype=float)
        return v + (self.ambient_inner(x, v) / self.R**2)[..., None] * x

    def normalize(self, x):
        q = -self.ambient_inner(x, x)
        return self.R * x / np.sqrt(q)[..., None]

    def _frame_drop(self, x):
        return 0

    def exp_transport(self, x, v, W=None):
        R = self.R
        nv = np.sqrt(np.maximum(self.ambient_inner(v, v), 0.0))
        theta = nv / R
        safe = np.where(nv > 0, nv, 1.0)
        e = v / safe[:, None]
        ch, sh = np.cosh(theta)[:, None], np.sinh(theta)[:, None]
        x_new = self.normalize(ch * x + R * sh * e)
        if W is None:
            return x_new, None
        Je = e.copy()
        Je[:, 0] *= -1.0
        ew = np.einsum("ni,nia->na", Je, W)
        kick = (ch - 1.0) * e + sh * x / R
        return x_new, W + kick[:, :, None] * ew[:, None, :]

    def sample_points(self, rng, n, spread=2.0):
        o = np.broadcast_to(self.origin(), (n, self.d + 1))
        v = np.zeros((n, self.d + 1))
        v[:, 1:] = rng.standard_normal((n, self.d))
        v[:, 1:] *= (spread * rng.uniform(size=n) / np.maximum(np.linalg.norm(v[:, 1:], axis=1), 1e-300))[:, None]
        return self.exp_transport(o, v)[0]

    def spec(self):
        return {"kind": self.kind, "d": self.d, "curvature": self.kappa}


@dataclass(frozen=True)
class EvolvingSphere(ManifoldModel):
    """Unit sphere S^d with g_t = phi(t)^2 * round metric."""

    phi: TimeCurve = field(default_factory=lambda: TimeCurve.constant(1.0))
    flow: float | None = None  # set by ricci_flow(); recorded in spec()
    kind = "EvolvingSphere"
    evolving = True

    @classmethod
    def ricci_flow(cls, d: int, flow: float = 1.0) -> "EvolvingSphere":
        """phi^2 = 1 + flow*(d-1)*t, i.e. d/dt g = flow * Ric.

        flow = 1 is the convention under which the modified curvature
        tensor vanishes for the generator (Delta_t + Z)/2.
        """
        a = flow * (d - 1)
        phi = TimeCurve.function(lambda t: np.sqrt(1.0 + a * np.asarray(t)),
                                 lambda t: a / (2.0 * np.sqrt(1.0 + a * np.asarray(t))))
        return cls(d=d, phi=phi, flow=flow)

    def scale(self, t):
        return float(self.phi(t)) ** 2

    def ricci(self, t=0.0):
        return (self.d - 1) / self.scale(t)

    def curvature(self, t=0.0):
        return 1.0 / self.scale(t)

    def metric_rate(self, t):
        return 2.0 * float(self.phi.derivative(t)) / float(self.phi(t))

    def origin(self):
        o = np.zeros(self.d + 1)
        o[-1] = 1.0
        return o

    def project(self, x, v):
        x = np.asarray(x, dtype=float)
        return v - np.sum(x * v, axis=-1)[..., None] * x

    def normalize(self, x):
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def exp_transport(self, x, v, W=None):
        # the conformal factor is constant in space: same geodesics and transport as the round metric
        return _sphere_exp(x, v, W, 1.0)

    def sample_points(self, rng, n, spread=2.0):
        return self.normalize(rng.standard_normal((n, self.d + 1)))

    def valid_on(self, T: float, n: int = 513) -> bool:
        return bool(np.all(np.asarray(self.phi(np.linspace(0.0, T, n))) > 0))

    def spec(self):
        if self.flow is None:
            raise GeometryError("only ricci_flow() evolving spheres have a serialisable spec")
        return {"kind": self.kind, "d": self.d, "flow": self.flow}


def model_from_spec(spec: dict) -> ManifoldModel:
    kind = spec.get("kind")
    d = spec.get("d")
    if not isinstance(d, int):
        raise GeometryError("model field 'd' must be an integer")
    if kind == "Euclidean":
        return Euclidean(d)
    if kind == "Sphere":
        return Sphere(d, float(spec.get("radius", 1.0)))
    if kind == "Hyperbolic":
        return Hyperbolic(d, float(spec.get("curvature", -1.0)))
    if kind == "EvolvingSphere":
        return EvolvingSphere.ricci_flow(d, float(spec.get("flow", 1.0)))
    raise GeometryError(f"unknown model kind {kind!r}")


def metric_derivative(model: ManifoldModel, t, x, X, Y):
    """d/dt g_t(X, Y); only defined for evolving models."""
    if not model.evolving:
        raise NotEvolvingError(f"{model.kind} has a static metric")
    return model.metric_rate(t) * model.inner(t, X, Y)


# --------------------------------------------------------------------------
# drifts


@dataclass(frozen=True)
class DriftField:
    """A vector field Z_t with the ambient Jacobian of an extension.

    ``jacobian(t, x)`` has shape (n, D, D); the covariant derivative is its
    tangential projection.  ``isotropic(t, x)``, when given, returns s with
    nabla Z = s * id on the tangent space.  ``ricz_range`` is an exact
    interval containing every eigenvalue of -sym(nabla Z).
    """

    name: str
    Z: Callable
    jacobian: Callable
    isotropic: Callable | None = None
    ricz_range: tuple | None = None
    params: dict = field(default_factory=dict)

    def covariant_derivative(self, model, t, x, X):
        x, X = _batch(x), _batch(X)
        return model.project(x, np.einsum("nij,nj->ni", self.jacobian(t, x), X))

    def spec(self) -> dict:
        return {"kind": self.name, **self.params}


def zero_drift() -> DriftField:
    return DriftField(
        "zero",
        lambda t, x: np.zeros_like(_batch(x)),
        lambda t, x: np.zeros(_batch(x).shape + (_batch(x).shape[-1],)),
        isotropic=lambda t, x: np.zeros(_batch(x).shape[0]),
        ricz_range=(0.0, 0.0),
    )


def linear_drift(A) -> DriftField:
    """Z(x) = -A x on Euclidean space; Ric^Z = sym(A)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise GeometryError("A must be square")
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    iso = None
    if np.allclose(A, A[0, 0] * np.eye(A.shape[0]), rtol=0, atol=0):
        a = float(A[0, 0])
        iso = lambda t, x: np.full(_batch(x).shape[0], -a)
    return DriftField(
        "linear",
        lambda t, x: -_batch(x) @ A.T,
        lambda t, x: np.broadcast_to(-A, (_batch(x).shape[0],) + A.shape),
        isotropic=iso,
        ricz_range=(float(ev[0]), float(ev[-1])),
        params={"A": A.tolist()},
    )


def ou_drift(d: int, rate: float = 1.0) -> DriftField:
    return linear_drift(rate * np.eye(d))


def sphere_height_drift(model: Sphere, a: float, n_vec) -> DriftField:
    """Z = a * grad <x, n> on a round sphere; nabla Z = -a <x,n>/r^2 id."""
    n_vec = np.asarray(n_vec, dtype=float)
    r = model.radius
    bound = abs(a) * float(np.linalg.norm(n_vec)) / r
    D = model.ambient_dim

    def Z(t, x):
        return a * model.project(_batch(x), n_vec[None])

    def jac(t, x):
        x = _batch(x)
        h = x @ n_vec
        # ambient Jacobian of a(n - <x,n> x / r^2); tangential part is -a h/r^2 id
        return -a / r**2 * (np.einsum("ni,j->nij", x, n_vec) + h[:, None, None] * np.eye(D))

    return DriftField(
        "sphere_height", Z, jac,
        isotropic=lambda t, x: -a * (_batch(x) @ n_vec) / r**2,
        ricz_range=(-bound, bound),
        params={"a": a, "n": n_vec.tolist()},
    )


def drift_from_spec(spec: dict | None, model: ManifoldModel) -> DriftField:
    if spec is None or spec.get("kind", "zero") == "zero":
        return zero_drift()
    kind = spec["kind"]
    if kind == "linear":
        if not isinstance(model, Euclidean):
            raise GeometryError("linear drift needs a Euclidean model")
        A = spec.get("A")
        if A is None:
            A = float(spec.get("rate", 1.0)) * np.eye(model.d)
        return linear_drift(A)
    if kind == "sphere_height":
        if not isinstance(model, Sphere):
            raise GeometryError("sphere_height drift needs a Sphere model")
        return sphere_height_drift(model, float(spec["a"]), spec["n"])
    raise GeometryError(f"unknown drift kind {kind!r}")


def drift_consistency(model: ManifoldModel, drift: DriftField, t: float = 0.0, n: int = 16,
                      seed: int = 0, eps: float = 1e-6) -> float:
    """Max gap between the supplied covariant derivative and finite differences of Z."""
    rng = np.random.default_rng(seed)
    x = model.sample_points(rng, n)
    X = model.project(x, rng.standard_normal(x.shape))
    xp = model.exp_transport(x, eps * X)[0]
    xm = model.exp_transport(x, -eps * X)[0]
    fd = model.project(x, (drift.Z(t, xp) - drift.Z(t, xm)) / (2 * eps))
    # the ambient difference quotient of a tangent field picks up a normal part; projection removes it
    return float(np.max(np.abs(fd - drift.covariant_derivative(model, t, x, X))))


# --------------------------------------------------------------------------
# curvature


def ricci_z(model: ManifoldModel, drift: DriftField, t, x, X, Y):
    """Ric_t(X,Y) - g_t(nabla_X Z, Y) - d/dt g_t(X,Y), batched over points."""
    x, X, Y = _batch(x), _batch(X), _batch(Y)
    if x.shape[-1] != model.ambient_dim or X.shape != x.shape or Y.shape != x.shape:
        raise GeometryError("dimension mismatch between point and tangent vectors")
    g = model.inner(t, X, Y)
    nzx = drift.covariant_derivative(model, t, x, X)
    return (model.ricci(t) - model.metric_rate(t)) * g - model.inner(t, nzx, Y)


def ricz_operator(model: ManifoldModel, drift: DriftField, t, x, u):
    """Matrix of the curvature operator in the frame u: M_ab = g(u_a, R(u_b)).

    Returns an (n,) array of scalars when the operator is a multiple of the
    identity, otherwise (n, d, d).
    """
    base = model.ricci(t) - model.metric_rate(t)
    if drift.isotropic is not None:
        return base - drift.isotropic(t, x)
    J = drift.jacobian(t, x)
    nzu = np.stack([model.project(x, np.einsum("nij,nj->ni", J, u[..., b])) for b in range(u.shape[-1])], axis=-1)
    Jm = model._J()
    Jn = nzu if Jm is None else Jm[None, :, None] * nzu
    M = -model.scale(t) * np.einsum("nia,nib->nab", u, Jn)
    return M + base * np.eye(u.shape[-1])


@dataclass(frozen=True)
class PinchingCertificate:
    k1: TimeCurve
    k2: TimeCurve
    witness: str

    def at(self, t):
        return self.k1(t), self.k2(t)

    @property
    def is_constant(self) -> bool:
        return self.k1.is_constant and self.k2.is_constant


def _builtin_base(model):
    if isinstance(model, EvolvingSphere):
        d = model.d
        curve = TimeCurve.function(lambda t: np.asarray([model.ricci(s) - model.metric_rate(s) for s in np.atleast_1d(t)]).reshape(np.shape(t)))
        if model.flow is not None:
            a = model.flow * (d - 1)
            # (d-1)/phi^2 - a/phi^2 in closed form
            curve = TimeCurve.function(lambda t: (d - 1 - a) / (1.0 + a * np.asarray(t, dtype=float)))
            if d - 1 - a == 0:
                curve = TimeCurve.constant(0.0)
        return curve
    return TimeCurve.constant(model.ricci())


def sample_ricz(model, drift, T, n=10_000, seed=0, times=None):
    """(t, R(X,X)) samples at random points and unit tangent vectors."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, T, n) if times is None else np.resize(np.asarray(times, dtype=float), n)
    x = model.sample_points(rng, n)
    X = model.project(x, rng.standard_normal(x.shape))
    out = np.empty(n)
    for tv in np.unique(t):
        m = t == tv
        Xm = X[m] / model.norm(tv, X[m])[:, None]
        out[m] = ricci_z(model, drift, tv, x[m], Xm, Xm)
    return t, out


def pinching(model: ManifoldModel, drift: DriftField, T: float, declared: tuple | None = None,
             n_samples: int = 10_000, seed: int = 0, margin: float = 1e-6) -> PinchingCertificate:
    """Curvature bounds k1(t) <= R^Z_t <= k2(t) for the model and drift.

    Built-in drifts on built-in models get exact curves; otherwise the
    bounds are sampled and widened by ``margin``.  A ``declared`` (k1, k2)
    pair is checked against samples and returned if it holds.
    """
    if model.evolving and not model.valid_on(T):
        raise GeometryError("phi must be positive on [0, T]")
    if drift.ricz_range is not None and (drift.isotropic is not None or not model.evolving):
        base = _builtin_base(model)
        lo, hi = drift.ricz_range
        if base.is_constant:
            k1, k2 = TimeCurve.constant(base.value + lo), TimeCurve.constant(base.value + hi)
        else:
            k1 = TimeCurve.combine(lambda b: b + lo, base)
            k2 = TimeCurve.combine(lambda b: b + hi, base)
        cert = PinchingCertificate(k1, k2, f"exact: {model.kind} with {drift.name} drift")
    else:
        _, vals = sample_ricz(model, drift, T, n_samples, seed)
        cert = PinchingCertificate(TimeCurve.constant(float(vals.min()) - margin),
                                   TimeCurve.constant(float(vals.max()) + margin),
                                   f"sampled: {n_samples} points, margin {margin:g}")
    if declared is not None:
        k1d, k2d = TimeCurve.constant(declared[0]) if np.isscalar(declared[0]) else declared[0], \
            TimeCurve.constant(declared[1]) if np.isscalar(declared[1]) else declared[1]
        ts, vals = sample_ricz(model, drift, T, n_samples, seed + 1)
        bad = (vals < np.asarray(k1d(ts)) - 1e-8) | (vals > np.asarray(k2d(ts)) + 1e-8)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise CertificateError(f"declared pinching violated at t={ts[i]:.6g}: R^Z(X,X)={vals[i]:.6g}")
        cert = PinchingCertificate(k1d, k2d, "declared; verified on samples")
    return cert
