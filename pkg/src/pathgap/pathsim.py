"""Monte-Carlo simulation of the diffusion, its horizontal frame and Q.

Each step moves along the geodesic with initial velocity
``u (sqrt(h) xi) + h Z / 2`` and carries the frame by the model's closed-form
parallel transport.  Q is kept in frame coordinates, where its ODE reads
dQ/dt = -Q R(t) / 2 with R the curvature operator matrix in the moving
frame; each step multiplies by exp(-h (R_n + R_{n+1}) / 4).

Random numbers come from one Philox stream per path keyed by
(seed, path index), so results do not depend on chunking.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import expm

from .geometry import DriftField, ManifoldModel, drift_from_spec, model_from_spec, ricz_operator

MAX_STEP = 0.1
DEFAULT_BUDGET = 2_000_000_000
GRID_TOL = 1e-9


class SimulationError(ValueError):
    pass


class BudgetExceeded(SimulationError):
    pass


class StepTooLarge(SimulationError):
    pass


class MissingTime(SimulationError):
    pass


class IncompatibleConfig(SimulationError):
    pass


class Scheme(str, Enum):
    EULER = "GeodesicEuler"
    HEUN = "GeodesicHeun"


@dataclass(frozen=True)
class SimConfig:
    T: float
    steps: int
    n_paths: int
    seed: int
    scheme: Scheme = Scheme.EULER
    budget: int = DEFAULT_BUDGET
    record_every: int = 0  # also record every k-th step (0: only requested times, 0 and T)
    reortho_every: int = 16  # 0 disables frame re-orthonormalisation
    compute_q: bool = True
    keep_increments: bool = False
    refine_level: int = 0  # increments are dyadic refinements of a steps >> level grid
    chunk: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.T > 0:
            raise SimulationError("T must be positive")
        if self.steps < 1 or self.n_paths < 1:
            raise SimulationError("steps and n_paths must be >= 1")
        if self.refine_level < 0 or self.steps % (1 << self.refine_level):
            raise SimulationError("steps must be divisible by 2**refine_level")
        if self.h > MAX_STEP:
            raise StepTooLarge(f"step h = {self.h:g} exceeds {MAX_STEP}")
        if self.n_paths * self.steps > self.budget:
            raise BudgetExceeded(f"n_paths*steps = {self.n_paths * self.steps} exceeds budget {self.budget}")

    @property
    def h(self) -> float:
        return self.T / self.steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scheme"] = self.scheme.value
        return d


# --------------------------------------------------------------------------
# random numbers


def _key(seed: int, path: int) -> np.ndarray:
    return np.array([seed % (1 << 64), path], dtype=np.uint64)


def path_normals(seed: int, path: int, base_steps: int, level: int, d: int) -> np.ndarray:
    """Standard normals for one path, shape (base_steps * 2**level, d).

    Level l splits every step with an independent stream (counter offset l):
    xi -> ((xi + zeta)/sqrt 2, (xi - zeta)/sqrt 2), which keeps the sum of
    increments over each coarse step unchanged.
    """
    key = _key(seed, path)
    xi = np.random.Generator(np.random.Philox(key=key)).standard_normal((base_steps, d))
    for lev in range(1, level + 1):
        zeta = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, lev])).standard_normal(xi.shape)
        fine = np.empty((2 * xi.shape[0], d))
        fine[0::2] = (xi + zeta) / math.sqrt(2.0)
        fine[1::2] = (xi - zeta) / math.sqrt(2.0)
        xi = fine
    return xi


def _normals(cfg: SimConfig, paths: range, d: int) -> np.ndarray:
    base = cfg.steps >> cfg.refine_level
    return np.stack([path_normals(cfg.seed, i, base, cfg.refine_level, d) for i in paths])


# --------------------------------------------------------------------------
# ensemble


@dataclass
class PathEnsemble:
    model: ManifoldModel
    drift: DriftField
    x0: np.ndarray
    cfg: SimConfig
    partition: np.ndarray  # (P,) times
    steps_at: np.ndarray  # (P,) step indices
    x: np.ndarray  # (n, P, D)
    u: np.ndarray  # (n, P, D, d)
    q: np.ndarray | None  # (n, P-1, d, d): Q between consecutive partition times, frame coordinates
    requested: tuple = ()
    increments: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.model.d

    def index(self, t: float) -> int:
        i = int(np.searchsorted(self.partition, t - GRID_TOL * max(1.0, self.cfg.T)))
        if i >= self.partition.size or abs(self.partition[i] - t) > GRID_TOL * max(1.0, self.cfg.T):
            raise MissingTime(f"time {t} is not a partition time")
        return i

    def frame_coords(self, t: float, w: np.ndarray) -> np.ndarray:
        """Components of tangent vectors at x(t) in the frame u(t)."""
        i = self.index(t)
        return self.model.frame_coords(t, self.u[:, i], w)

    def transport(self, s: float, t: float, w: np.ndarray) -> np.ndarray:
        """Parallel transport along each path from x(s) to x(t) (either order)."""
        return np.einsum("nia,na->ni", self.u[:, self.index(t)], self.frame_coords(s, w))

    def q_matrix(self, r: float, t: float) -> np.ndarray:
        """Q_{r,t} in frame coordinates at time r, shape (n, d, d)."""
        if self.q is None:
            raise SimulationError("ensemble was simulated without Q")
        i, j = self.index(r), self.index(t)
        if i > j:
            raise SimulationError("need r <= t")
        out = np.broadcast_to(np.eye(self.d), (self.n_paths, self.d, self.d)).copy()
        for k in range(i, j):
            out = out @ self.q[:, k]
        return out


def q_functional(ens: PathEnsemble, r: float, t: float) -> np.ndarray:
    return ens.q_matrix(r, t)


# --------------------------------------------------------------------------
# simulation


def _partition(cfg: SimConfig, times) -> tuple[np.ndarray, np.ndarray]:
    h = cfg.h
    idx = {0, cfg.steps}
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        if t < -GRID_TOL or t > cfg.T * (1 + GRID_TOL):
            raise SimulationError(f"time {t} outside [0, T]")
        k = int(round(t / h))
        if abs(k * h - t) > GRID_TOL * max(1.0, cfg.T):
            raise SimulationError(f"time {t} is not on the step grid (h = {h:g}); choose steps accordingly")
        idx.add(k)
    if cfg.record_every:
        idx.update(range(0, cfg.steps + 1, cfg.record_every))
    steps_at = np.array(sorted(idx))
    return steps_at * h, steps_at


def _is_zero(drift):
    return drift.name == "zero"


def _simulate_chunk(model, drift, x0, u0, cfg, steps_at, xi, t0=0.0):
    m, n_steps, d = xi.shape
    h = cfg.h
    sqh = math.sqrt(h)
    P = steps_at.size
    D = model.ambient_dim
    xs = np.empty((m, P, D))
    us = np.empty((m, P, D, d))
    qs = np.empty((m, P - 1, d, d)) if cfg.compute_q else None
    x = np.broadcast_to(x0, (m, D)).copy()
    u = np.broadcast_to(u0, (m, D, d)).copy()
    xs[:, 0], us[:, 0] = x, u
    zero = _is_zero(drift)
    iso = drift.isotropic is not None
    eye = np.eye(d)

    def op(t, x, u):
        return ricz_operator(model, drift, t, x, u)

    if cfg.compute_q:
        R_prev = op(t0, x, u)
        acc = np.zeros(m) if iso else np.broadcast_to(eye, (m, d, d)).copy()
    rec = 1
    for n in range(n_steps):
        t = t0 + n * h
        v = np.einsum("nia,na->ni", u, xi[:, n]) * sqh
        if not zero:
            z = drift.Z(t, x)
            if cfg.scheme is Scheme.HEUN:
                xp, up = model.exp_transport(x, v + 0.5 * h * z, u)
                zp = model.frame_coords(t, up, drift.Z(t + h, xp))
                v = v + 0.25 * h * (z + np.einsum("nia,na->ni", u, zp))
            else:
                v = v + 0.5 * h * z
        x, u = model.exp_transport(x, v, u)
        x = model.normalize(x)
        if model.evolving:
            u = u * (float(model.phi(t)) / float(model.phi(t + h)))
        if cfg.reortho_every and (n + 1) % cfg.reortho_every == 0:
            u = model.reorthonormalize(t + h, x, u)
        if cfg.compute_q:
            R_next = op(t + h, x, u)
            if iso:
                acc = acc - 0.25 * h * (R_prev + R_next)
            else:
                acc = acc @ expm(-0.25 * h * (R_prev + R_next))
            R_prev = R_next
        if rec < P and n + 1 == steps_at[rec]:
            xs[:, rec], us[:, rec] = x, u
            if cfg.compute_q:
                qs[:, rec - 1] = np.exp(acc)[:, None, None] * eye if iso else acc
                acc = np.zeros(m) if iso else np.broadcast_to(eye, (m, d, d)).copy()
            rec += 1
    return xs, us, qs


@dataclass(frozen=True)
class _Stepper:
    h: float
    scheme: Scheme = Scheme.EULER
    reortho_every: int = 16
    compute_q: bool = False


def advance(model: ManifoldModel, drift: DriftField, x, u, t0: float, h: float, xi: np.ndarray,
            record_steps, scheme: Scheme = Scheme.EULER):
    """Run the step map from per-path states (x, u) at time t0 with normals xi (m, steps, d).

    Returns points and frames at ``record_steps`` (step counts from t0; 0 is
    the start), shapes (m, R, D) and (m, R, D, d).
    """
    rec = np.asarray(sorted(set(int(k) for k in record_steps) | {0}))
    if rec[-1] > xi.shape[1]:
        raise SimulationError("record step beyond the supplied increments")
    xs, us, _ = _simulate_chunk(model, drift, np.asarray(x, dtype=float), np.asarray(u, dtype=float),
                                _Stepper(h, Scheme(scheme)), rec, xi[:, : rec[-1]], t0)
    return rec, xs, us


def simulate(model: ManifoldModel, drift: DriftField, x0, cfg: SimConfig, times=(), u0=None) -> PathEnsemble:
    """Simulate ``cfg.n_paths`` paths from ``x0``; record at ``times``, 0 and T."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.ambient_dim,):
        raise SimulationError(f"x0 must have shape ({model.ambient_dim},)")
    if not model.on_manifold(x0):
        raise SimulationError("x0 is not on the manifold")
    if model.evolving and not model.valid_on(cfg.T):
        raise SimulationError("phi must be positive on [0, T]")
    partition, steps_at = _partition(cfg, times)
    u0 = model.frame_at(x0, 0.0) if u0 is None else np.asarray(u0, dtype=float)
    parts, incs = [], []
    for start in range(0, cfg.n_paths, cfg.chunk):
        paths = range(start, min(start + cfg.chunk, cfg.n_paths))
        xi = _normals(cfg, paths, model.d)
        parts.append(_simulate_chunk(model, drift, x0, u0, cfg, steps_at, xi))
        if cfg.keep_increments:
            incs.append(xi * math.sqrt(cfg.h))
    x = np.concatenate([p[0] for p in parts])
    u = np.concatenate([p[1] for p in parts])
    q = np.concatenate([p[2] for p in parts]) if cfg.compute_q else None
    return PathEnsemble(model, drift, x0, cfg, partition, steps_at, x, u, q,
                        requested=tuple(float(t) for t in np.atleast_1d(times)),
                        increments=np.concatenate(incs) if incs else None)


def replay(ens: PathEnsemble, new_times, max_level: int = 12) -> PathEnsemble:
    """Re-simulate with the same Brownian increments on a partition containing ``new_times``.

    If some new time is off the step grid, the grid is refined dyadically
    (each increment split with an extra independent normal); values at old
    partition times are then reproduced only up to discretisation error.
    """
    cfg = ens.cfg
    new_times = np.atleast_1d(np.asarray(new_times, dtype=float))
    times = np.union1d(np.asarray(ens.requested, dtype=float), new_times)
    for L in range(max_level + 1):
        steps = cfg.steps << L
        h = cfg.T / steps
        k = np.round(times / h)
        if np.all(np.abs(k * h - times) <= GRID_TOL * max(1.0, cfg.T)):
            break
    else:
        raise IncompatibleConfig(f"new times are not on any dyadic refinement up to level {max_level}")
    new_cfg = replace(cfg, steps=steps, refine_level=cfg.refine_level + L, record_every=cfg.record_every << L)
    u0 = ens.u[0, 0]
    return simulate(ens.model, ens.drift, ens.x0, new_cfg, times, u0=u0)


# --------------------------------------------------------------------------
# binary dump

MAGIC = b"PGENS\x00\x01\x00"
VERSION = 1


def save_ensemble(ens: PathEnsemble, path) -> None:
    """Write the ensemble in the versioned little-endian format described in the README."""
    n, P, D = ens.x.shape
    d = ens.d
    header = {
        "model": ens.model.spec(),
        "drift": ens.drift.spec(),
        "config": ens.cfg.to_dict(),
        "requested": list(ens.requested),
        "n_paths": n, "P": P, "D": D, "d": d,
        "has_q": ens.q is not None,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(hb)))
        fh.write(hb)
        for arr in (ens.x0, ens.partition, ens.steps_at.astype("<f8"), ens.x, ens.u) + ((ens.q,) if ens.q is not None else ()):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_ensemble(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise SimulationError("not an ensemble file")
    version, hlen = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise SimulationError(f"unsupported ensemble version {version}")
    header = json.loads(buf[16:16 + hlen])
    off = 16 + hlen
    n, P, D, d = header["n_paths"], header["P"], header["D"], header["d"]

    def take(*shape):
        nonlocal off
        size = int(np.prod(shape))
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
        return arr

    x0, partition, steps_at = take(D), take(P), take(P).astype(int)
    x, u = take(n, P, D), take(n, P, D, d)
    q = take(n, P - 1, d, d) if header["has_q"] else None
    model = model_from_spec(header["model"])
    drift = drift_from_spec(header["drift"], model)
    cfg = SimConfig(**header["config"])
    return PathEnsemble(model, drift, x0, cfg, partition, steps_at, x, u, q, tuple(header["requested"]))
