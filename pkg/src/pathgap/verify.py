"""Statistical checks of the functional inequalities.

A Monte-Carlo check can only fail to falsify an inequality ``lhs <= rhs``.
Verdicts (``margin`` defaults to 3 standard errors of the paired
difference lhs - rhs):

* Fail if (lhs - rhs) - margin * se > 0,
* otherwise Inconclusive if the estimate is noise-dominated
  (se > 30% of max(|lhs|, |rhs|)),
* otherwise Pass.  ``boundary_overlap`` records whether the band around
  the difference still reaches zero, which is the expected outcome for
  sharp inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bounds import BoundReport, _E as _E_vec
from .functional import (
    BaseFunction,
    CylindricalFunction,
    EnergyEstimate,
    energy_samples,
    entropy_samples,
)
from .pathsim import BudgetExceeded, PathEnsemble, Scheme, SimConfig, advance, simulate

NOISE_LIMIT = 0.3
DEGENERATE = 1e-14


class Verdict(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: EnergyEstimate
    rhs: EnergyEstimate
    margin_sigmas: float
    verdict: Verdict
    diff_std_error: float
    boundary_overlap: bool = False
    degenerate: bool = False
    details: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict.value,
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs.to_dict(),
            "diff_std_error": self.diff_std_error,
            "margin_sigmas": self.margin_sigmas,
            "boundary_overlap": self.boundary_overlap,
            "degenerate": self.degenerate,
            "details": self.details,
        }


def _se(samples) -> float:
    samples = np.asarray(samples, dtype=float)
    return float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0


def decide(lhs: float, rhs: float, se: float, margin: float = 3.0, noise_se: float | None = None):
    """(verdict, boundary_overlap) for lhs <= rhs given the SE of lhs - rhs."""
    diff = lhs - rhs
    if diff - margin * se > 0:
        return Verdict.FAIL, True
    noise = se if noise_se is None else noise_se
    scale = max(abs(lhs), abs(rhs))
    if noise > NOISE_LIMIT * scale:
        return Verdict.INCONCLUSIVE, True
    return Verdict.PASS, bool(diff + margin * se >= 0)


def _make(name, lhs, rhs, diff_infl, margin, details, noise_se=None, degenerate=False):
    se = _se(diff_infl) if diff_infl is not None else 0.0
    if degenerate:
        verdict, overlap = Verdict.PASS, True
    else:
        verdict, overlap = decide(lhs.mean, rhs.mean, se, margin, noise_se)
    return InequalityCheck(name, lhs, rhs, margin, verdict, se, overlap, degenerate, details)


def _h_of(bound) -> float:
    return bound.h if isinstance(bound, BoundReport) else float(bound)


# --------------------------------------------------------------------------
# global inequalities


@dataclass(frozen=True)
class RayleighQuotient:
    variance: EnergyEstimate
    energy: EnergyEstimate
    ratio: float
    ratio_std_error: float


def rayleigh_quotient(F: CylindricalFunction, ens: PathEnsemble) -> RayleighQuotient:
    """Var F / E int |D_t F|^2 with a delta-method standard error."""
    v = F.value(ens)
    dev2 = (v - v.mean()) ** 2
    e = energy_samples(F, ens)
    var = EnergyEstimate(float(dev2.mean()), _se(dev2), v.size, "plug-in variance")
    en = EnergyEstimate(float(e.mean()), _se(e), v.size, "intrinsic energy")
    if not en.mean > 0:
        raise ValueError("energy must be positive to form the Rayleigh quotient")
    r = var.mean / en.mean
    return RayleighQuotient(var, en, r, _se((dev2 - r * e) / en.mean))


def check_poincare(F: CylindricalFunction, ens: PathEnsemble, bound, margin: float = 3.0,
                   name: str = "poincare") -> InequalityCheck:
    """Var F <= H * E int_0^T |D_t F|^2 dt."""
    H = _h_of(bound)
    v = F.value(ens)
    dev2 = (v - v.mean()) ** 2
    e = energy_samples(F, ens)
    lhs = EnergyEstimate(float(dev2.mean()), _se(dev2), v.size, "plug-in variance")
    rhs = EnergyEstimate(float(H * e.mean()), H * _se(e), v.size, "H * intrinsic energy")
    degenerate = lhs.mean <= DEGENERATE and rhs.mean <= DEGENERATE
    return _make(name, lhs, rhs, dev2 - H * e, margin, {"H": H, "T": ens.cfg.T}, degenerate=degenerate)


def check_log_sobolev(F: CylindricalFunction, ens: PathEnsemble, bound, margin: float = 3.0,
                      name: str = "log_sobolev") -> InequalityCheck:
    """Ent(F^2) <= 2H * E int_0^T |D_t F|^2 dt."""
    H = _h_of(bound)
    v = F.value(ens)
    ent, infl, _ = entropy_samples(v * v)
    e = energy_samples(F, ens)
    lhs = EnergyEstimate(ent, _se(infl), v.size, "plug-in entropy")
    rhs = EnergyEstimate(float(2 * H * e.mean()), 2 * H * _se(e), v.size, "2H * intrinsic energy")
    degenerate = abs(ent) <= DEGENERATE and rhs.mean <= DEGENERATE
    return _make(name, lhs, rhs, infl - 2 * H * e, margin, {"H": H, "T": ens.cfg.T}, degenerate=degenerate)


# --------------------------------------------------------------------------
# semigroup-level characterisations


def _pin(pin):
    if hasattr(pin, "k1"):
        k1, k2 = pin.k1, pin.k2
        k1 = k1.value if hasattr(k1, "value") and getattr(k1, "is_constant", True) else k1
        k2 = k2.value if hasattr(k2, "value") and getattr(k2, "is_constant", True) else k2
        return float(k1), float(k2)
    return float(pin[0]), float(pin[1])


def _E(x, L):
    return float(_E_vec(x, L))


def gradient_estimate_coefficient(t: float, c: float, k1: float, k2: float) -> float:
    """(1 + kt/2 E(k1/2 - c, t)) (1 + kt/2 E(k1/2 + c - k, t)) e^{-k t}, k = (k1+k2)/2, kt = (k2-k1)/2."""
    k, kt = 0.5 * (k1 + k2), 0.5 * (k2 - k1)
    return (1 + 0.5 * kt * _E(0.5 * k1 - c, t)) * (1 + 0.5 * kt * _E(0.5 * k1 + c - k, t)) * math.exp(-k * t)


def _fd_samples(model, drift, f: BaseFunction, x, t, n_paths, seed, h_target, scheme, delta):
    """Per-path CRN central differences along each frame direction, plus |grad f| data at X_t."""
    x = np.asarray(x, dtype=float)
    u0 = model.frame_at(x)
    steps = max(1, math.ceil(t / h_target - 1e-9))
    cfg = SimConfig(T=t, steps=steps, n_paths=n_paths, seed=seed, scheme=scheme, compute_q=False)
    base = simulate(model, drift, x, cfg, u0=u0)
    xT, uT = base.x[:, -1], base.u[:, -1]
    coords = np.einsum("nia,ni->na", uT, f.grad(xT))  # frame components of //^{-1} grad f(X_t)
    fd = np.empty((n_paths, model.d))
    for a in range(model.d):
        ends = []
        for sgn in (1.0, -1.0):
            xp, up = model.exp_transport(x[None], sgn * delta * u0[None, :, a], u0[None])
            xp = model.normalize(xp)
            ens = simulate(model, drift, xp[0], cfg, u0=up[0])
            ends.append(f(ens.x[:, -1]))
        fd[:, a] = (ends[0] - ends[1]) / (2 * delta)
    grad_x = u0.T @ f.grad(x[None])[0]
    return base, fd, coords, grad_x, steps


def check_gradient_estimate(model, drift, f: BaseFunction, x, t: float, c: float, pin,
                            n_paths: int = 20_000, seed: int = 0, h_target: float = 1 / 256,
                            scheme=Scheme.EULER, margin: float = 3.0) -> InequalityCheck:
    """|grad P_t f|^2(x) <= coef(t, c) * P_t |grad f|^2(x).

    grad P_t f is estimated by central differences of MC means over
    geodesically perturbed starts (size 1e-3 sqrt t) sharing random numbers.
    """
    k1, k2 = _pin(pin)
    x = np.asarray(x, dtype=float)
    coef = gradient_estimate_coefficient(t, c, k1, k2)
    details = {"t": t, "c": c, "k1": k1, "k2": k2, "coefficient": coef}
    if t == 0.0:
        g = model.frame_at(x).T @ f.grad(x[None])[0]
        val = float(g @ g)
        est = EnergyEstimate(val, 0.0, 1, "exact at t = 0")
        return _make("gradient_estimate", est, est, None, margin, details, degenerate=False)
    delta = 1e-3 * math.sqrt(t)
    base, fd, coords, _, steps = _fd_samples(model, drift, f, x, t, n_paths, seed, h_target, scheme, delta)
    abar = fd.mean(axis=0)
    b = np.sum(coords**2, axis=1)
    lhs_infl = 2.0 * fd @ abar
    lhs = EnergyEstimate(float(abar @ abar), _se(lhs_infl), n_paths, "|CRN central difference|^2")
    rhs = EnergyEstimate(float(coef * b.mean()), coef * _se(b), n_paths, "coef * P_t|grad f|^2")
    fT = f(base.x[:, -1])
    details.update({"delta": delta, "steps": steps, "mean_f_t": float(fT.mean()), "mean_f_t_se": _se(fT),
                    "grad_pt_f": abar.tolist()})
    degenerate = lhs.mean <= DEGENERATE and rhs.mean <= DEGENERATE
    return _grad_check("gradient_estimate", lhs, rhs, lhs_infl - coef * b, margin, details, degenerate)


def _grad_check(name, lhs, rhs, diff_infl, margin, details, degenerate):
    se = _se(diff_infl)
    if degenerate:
        return InequalityCheck(name, lhs, rhs, margin, Verdict.PASS, se, True, True, details)
    verdict, overlap = decide(lhs.mean, rhs.mean, se, margin)
    # finite-difference noise is judged against the gradient term itself
    if verdict is Verdict.PASS and lhs.std_error > NOISE_LIMIT * max(abs(lhs.mean), abs(rhs.mean)):
        verdict = Verdict.INCONCLUSIVE
    return InequalityCheck(name, lhs, rhs, margin, verdict, se, overlap, False, details)


def check_second_characterization(model, drift, f: BaseFunction, x, t: float, c: float, pin,
                                  n_paths: int = 20_000, seed: int = 0, h_target: float = 1 / 256,
                                  scheme=Scheme.EULER, margin: float = 3.0) -> InequalityCheck:
    """Expanded form of the test with F = f(x) - f(X_t)/2:

    |grad P_t f|^2 - A B e^{-kt} P_t|grad f|^2
        <= 4 (A - 1) |grad f|^2 + 4 <grad f, grad P_t f> - 4 A e^{-kt/2} <grad f, E //^{-1} grad f(X_t)>

    with A = 1 + kt/2 E(k1/2 - c, t) and B = 1 + kt/2 E(c - k2/2, t).
    """
    k1, k2 = _pin(pin)
    k, kt = 0.5 * (k1 + k2), 0.5 * (k2 - k1)
    A = 1 + 0.5 * kt * _E(0.5 * k1 - c, t)
    B = 1 + 0.5 * kt * _E(c - 0.5 * k2, t)
    x = np.asarray(x, dtype=float)
    details = {"t": t, "c": c, "k1": k1, "k2": k2, "A": A, "B": B}
    if t == 0.0:
        z = EnergyEstimate(0.0, 0.0, 1, "exact at t = 0")
        return InequalityCheck("second_characterization", z, z, margin, Verdict.PASS, 0.0, True, True, details)
    delta = 1e-3 * math.sqrt(t)
    _, fd, coords, gx, steps = _fd_samples(model, drift, f, x, t, n_paths, seed, h_target, scheme, delta)
    abar, cbar = fd.mean(axis=0), coords.mean(axis=0)
    b = np.sum(coords**2, axis=1)
    w = A * B * math.exp(-k * t)
    v = 4 * A * math.exp(-0.5 * k * t)
    lhs_val = float(abar @ abar - w * b.mean())
    rhs_val = float(4 * (A - 1) * (gx @ gx) + 4 * gx @ abar - v * gx @ cbar)
    lhs_infl = 2.0 * fd @ abar - w * b
    rhs_infl = 4 * fd @ gx - v * coords @ gx
    lhs = EnergyEstimate(lhs_val, _se(lhs_infl), n_paths, "CRN central differences")
    rhs = EnergyEstimate(rhs_val, _se(rhs_infl), n_paths, "transported-gradient estimator")
    details.update({"delta": delta, "steps": steps})
    degenerate = float(gx @ gx) <= DEGENERATE and float(b.mean()) <= DEGENERATE
    return _grad_check("second_characterization", lhs, rhs, lhs_infl - rhs_infl, margin, details, degenerate)


# --------------------------------------------------------------------------
# martingale decomposition


def _inner_normals(seed: int, stage: int, outer: int, inner: int, steps: int, d: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, 0x5EED, stage]).generate_state(1, np.uint64)[0]
    g = np.random.Generator(np.random.Philox(key=np.array([ss, outer], dtype=np.uint64)))
    return g.standard_normal((inner, steps, d))


def _conditional_second_moment(F, ens, s, inner, seed, stage, entropy):
    """Per-outer-path unbiased estimate of E[F|F_s]^2 (or m log m with m = E[F^2|F_s])."""
    cfg = ens.cfg
    T, h = cfg.T, cfg.h
    vals = F.value(ens)
    if abs(s - T) <= 1e-12 * max(1.0, T):
        return vals * vals * (np.log(np.where(vals != 0, vals * vals, 1.0)) if entropy else 1.0)
    if s <= 0.0:
        m = float((vals * vals).mean()) if entropy else float(vals.mean())
        if entropy:
            return np.full(vals.size, m * math.log(m) if m > 0 else 0.0)
        # (mean^2 - var/n) is unbiased for (E F)^2
        return np.full(vals.size, m * m - vals.var(ddof=1) / vals.size)
    i = ens.index(s)
    k0 = int(ens.steps_at[i])
    n_steps = cfg.steps - k0
    rec = sorted({int(round((t - s) / h)) for t in F.times if t > s + 1e-12})
    n = ens.n_paths
    out = np.empty(n)
    batch = max(1, 4096 // inner)
    for j0 in range(0, n, batch):
        js = range(j0, min(j0 + batch, n))
        xi = np.concatenate([_inner_normals(seed, stage, j, inner, n_steps, ens.d) for j in js])
        x0 = np.repeat(ens.x[js.start:js.stop, i], inner, axis=0)
        u0 = np.repeat(ens.u[js.start:js.stop, i], inner, axis=0)
        rs, xs, _ = advance(ens.model, ens.drift, x0, u0, s, h, xi, rec, cfg.scheme)
        pos = {r: q for q, r in enumerate(rs)}
        pts = []
        for t in F.times:
            if t > s + 1e-12:
                pts.append(xs[:, pos[int(round((t - s) / h))]])
            else:
                pts.append(np.repeat(ens.x[js.start:js.stop, ens.index(t)], inner, axis=0))
        fv = F.evaluate_points(pts).reshape(len(js), inner)
        if entropy:
            m = np.mean(fv * fv, axis=1)
            out[js.start:js.stop] = np.where(m > 0, m * np.log(np.where(m > 0, m, 1.0)), 0.0)
        else:
            out[js.start:js.stop] = fv.mean(axis=1) ** 2 - fv.var(axis=1, ddof=1) / inner
    return out


def _omega(s, t1, t2, T, k1, k2, c, nodes=48):
    """Weight of E|D^_s F|^2 in the right-hand side, vectorised in s."""
    kt = 0.5 * (k2 - k1)
    a = 0.5 * k1 + c

    def alpha2(tau):
        return 1.0 + 0.5 * kt * np.asarray(_E_vec(0.5 * k1 - c, T - np.asarray(tau)))

    s = np.asarray(s, dtype=float)
    out = np.where((s >= t1) & (s <= t2), alpha2(np.clip(s, 0, T)), 0.0)
    if kt == 0.0:
        return out
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    hi = np.minimum(s, t2)
    lo = np.full_like(s, t1)
    ok = hi > lo
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    tau = mid[:, None] + half[:, None] * xg[None]
    inner = np.sum(wg[None] * alpha2(tau) * np.exp(-a * (s[:, None] - tau)), axis=1) * half
    return out + np.where(ok, 0.5 * kt * inner, 0.0)


def martingale_rhs_samples(F, ens, t1, t2, pin, c=0.0, nodes=48):
    """Per-path value whose mean is the right-hand side of the decomposition bound."""
    k1, k2 = _pin(pin)
    kb = 0.5 * (k1 + k2)
    T = ens.cfg.T
    g = F.frame_gradients(ens)
    w = np.exp(-0.5 * kb * np.asarray(F.times))
    tail = np.cumsum((g * w[None, :, None])[:, ::-1], axis=1)[:, ::-1]
    sq = np.sum(tail**2, axis=2)  # |D^_s|^2 = e^{kb s} sq[:, m] on the m-th cylinder interval
    lo = np.concatenate([[0.0], np.asarray(F.times[:-1])])
    hi = np.asarray(F.times)
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    out = np.zeros(ens.n_paths)
    for m in range(len(F.times)):
        cuts = sorted({lo[m], hi[m]} | {p for p in (t1, t2) if lo[m] < p < hi[m]})
        weight = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            s = 0.5 * (a + b) + 0.5 * (b - a) * xg
            weight += 0.5 * (b - a) * float(np.sum(wg * _omega(s, t1, t2, T, k1, k2, c, nodes) * np.exp(kb * s)))
        out += weight * sq[:, m]
    return out


def check_martingale_decomposition(F: CylindricalFunction, ens: PathEnsemble, t1: float, t2: float, pin,
                                   c: float = 0.0, inner: int = 128, seed: int | None = None,
                                   nested_budget: int = 400_000_000, margin: float = 3.0,
                                   entropy: bool = False) -> InequalityCheck:
    """E[E[F|F_t2]^2] - E[E[F|F_t1]^2] <= int_t1^t2 (...) by nested Monte Carlo.

    The inner conditional expectations use ``inner`` fresh continuations
    per outer path, with the unbiased m^2 - s^2/M estimate.  ``entropy``
    switches to the experimental x log x version (plug-in, biased).
    """
    if not t1 <= t2:
        raise ValueError("need t1 <= t2")
    seed = ens.cfg.seed if seed is None else seed
    name = "martingale_entropy" if entropy else "martingale_decomposition"
    details = {"t1": t1, "t2": t2, "c": c, "inner": inner, "experimental": entropy}
    if t1 == t2:
        z = EnergyEstimate(0.0, 0.0, ens.n_paths, "t1 = t2")
        return InequalityCheck(name, z, z, margin, Verdict.PASS, 0.0, True, True, details)
    cost = ens.n_paths * inner * (2 * ens.cfg.steps - int(ens.steps_at[ens.index(t1)]) - int(ens.steps_at[ens.index(t2)]))
    if cost > nested_budget:
        raise BudgetExceeded(f"nested simulation needs {cost} path-steps, budget {nested_budget}")
    m2 = _conditional_second_moment(F, ens, t2, inner, seed, 2, entropy)
    m1 = _conditional_second_moment(F, ens, t1, inner, seed, 1, entropy)
    diff = m2 - m1
    r = martingale_rhs_samples(F, ens, t1, t2, pin, c)
    if entropy:
        r = 2.0 * r
    lhs = EnergyEstimate(float(diff.mean()), _se(diff), ens.n_paths, "nested MC, unbiased squares")
    rhs = EnergyEstimate(float(r.mean()), _se(r), ens.n_paths, "modified-gradient energy weights")
    return _make(name, lhs, rhs, diff - r, margin, details)
