"""Command-line driver: bound tables, asymptotic comparisons and MC checks.

Exit codes: 0 success, 1 some check failed, 2 invalid configuration,
3 simulation budget exceeded.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import (
    ConstantPinching,
    DomainError,
    asymptotic_bound,
    h_bound,
    tilde_h,
)
from .functional import CylindricalFunction, base_from_spec, chain_damped, chain_damped_modified, chain_modified
from .geometry import CertificateError, GeometryError, drift_from_spec, model_from_spec, pinching
from .optimize import SearchMode, SearchPolicy
from .pathsim import BudgetExceeded, SimConfig, SimulationError, simulate
from .verify import (
    Verdict,
    check_gradient_estimate,
    check_log_sobolev,
    check_martingale_decomposition,
    check_poincare,
    check_second_characterization,
    rayleigh_quotient,
)

log = logging.getLogger("pathgap")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

CHECK_KINDS = ("poincare", "log_sobolev", "chain", "rayleigh", "gradient_estimate",
               "second_characterization", "martingale")

BUILTIN_SCENARIOS = {
    "flat-linear": {
        "description": "Euclidean R^3, no drift, F = <v, gamma_T>: the Poincare inequality is an equality",
        "model": {"kind": "Euclidean", "d": 3},
        "drift": {"kind": "zero"},
        "T": 1.0, "steps": 16,
        "functionals": [{"factors": [{"kind": "linear", "v": [1.0, 2.0, -0.5]}], "at": [1.0]}],
        "checks": ["poincare", "rayleigh"],
    },
    "sphere": {
        "description": "unit sphere S^2, no drift (k1 = k2 = 1)",
        "model": {"kind": "Sphere", "d": 2, "radius": 1.0},
        "drift": {"kind": "zero"},
        "T": 1.0, "steps": 256,
        "functionals": [
            {"factors": [{"kind": "linear", "v": [1.0, 0.0, 0.0]}], "at": [1.0]},
            {"factors": [{"kind": "exp_linear", "v": [1.0, 0.0, 0.0], "scale": 0.5},
                         {"kind": "bump", "center": [0.0, 0.0, 1.0], "width": 1.0}], "at": [0.5, 1.0]},
        ],
        "checks": ["poincare", "log_sobolev", "chain"],
    },
    "hyperbolic": {
        "description": "hyperbolic plane of curvature -1, no drift (k1 = k2 = -1)",
        "model": {"kind": "Hyperbolic", "d": 2, "curvature": -1.0},
        "drift": {"kind": "zero"},
        "T": 1.0, "steps": 256,
        "functionals": [
            {"factors": [{"kind": "bump", "center": [1.0, 0.0, 0.0], "width": 1.0}], "at": [1.0]},
            {"factors": [{"kind": "linear", "v": [0.0, 1.0, 0.0]},
                         {"kind": "bump", "center": [1.0, 0.0, 0.0], "width": 1.0}], "at": [0.5, 1.0]},
        ],
        "checks": ["poincare", "log_sobolev", "chain"],
    },
    "ou": {
        "description": "Euclidean R^2 with Ornstein-Uhlenbeck drift Z = -x (k1 = k2 = 1)",
        "model": {"kind": "Euclidean", "d": 2},
        "drift": {"kind": "linear", "rate": 1.0},
        "x0": [1.0, 0.0],
        "T": 1.0, "steps": 256,
        "functionals": [
            {"factors": [{"kind": "linear", "v": [1.0, 0.5]}], "at": [1.0]},
            {"factors": [{"kind": "exp_linear", "v": [0.5, 0.0], "scale": 1.0},
                         {"kind": "bump", "center": [0.0, 0.0], "width": 1.0}], "at": [0.5, 1.0]},
        ],
        "checks": ["poincare", "log_sobolev", "chain"],
    },
    "evolving-sphere": {
        "description": "S^2 under d/dt g = Ric (phi^2 = 1 + t): the modified curvature vanishes",
        "model": {"kind": "EvolvingSphere", "d": 2, "flow": 1.0},
        "drift": {"kind": "zero"},
        "T": 0.5, "steps": 128,
        "functionals": [
            {"factors": [{"kind": "linear", "v": [1.0, 0.0, 0.0]}], "at": [1.0]},
            {"factors": [{"kind": "exp_linear", "v": [1.0, 0.0, 0.0], "scale": 0.5},
                         {"kind": "bump", "center": [0.0, 0.0, 1.0], "width": 1.0}], "at": [0.5, 1.0]},
        ],
        "checks": ["poincare", "log_sobolev", "chain"],
    },
}


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


# --------------------------------------------------------------------------
# config resolution


def _num(obj, key, where, default=None, positive=False, integer=False):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{where}.{key}", "missing required field")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}", f"expected a finite number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}.{key}", f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}", f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _policy(raw, where) -> dict:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected an object")
    mode = raw.get("mode", SearchMode.CLOSED_FORM_ONLY.value)
    try:
        SearchMode(mode)
    except ValueError:
        raise ConfigError(f"{where}.mode", f"expected ClosedFormOnly or OptimizeC, got {mode!r}") from None
    out = {
        "mode": mode,
        "t_grid": _num(raw, "t_grid", where, 256, integer=True),
        "refinement_iters": _num(raw, "refinement_iters", where, 40, integer=True),
        "tol": _num(raw, "tol", where, 1e-9, positive=True),
        "c_range": raw.get("c_range"),
    }
    try:
        _make_policy(out)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None
    return out


def _make_policy(p: dict) -> SearchPolicy:
    cr = p.get("c_range")
    return SearchPolicy(SearchMode(p["mode"]), tuple(cr) if cr is not None else None, p["t_grid"],
                        p["refinement_iters"], p["tol"])


def _t_list(raw, where):
    if isinstance(raw, dict):
        start = _num(raw, "start", where, positive=True)
        stop = _num(raw, "stop", where, positive=True)
        num = _num(raw, "num", where, integer=True, positive=True)
        return [float(x) for x in np.linspace(start, stop, num)]
    if not isinstance(raw, list) or not raw:
        raise ConfigError(where, "expected a non-empty list of times or {start, stop, num}")
    out = []
    for i, t in enumerate(raw):
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not t > 0:
            raise ConfigError(f"{where}[{i}]", f"expected a positive number, got {t!r}")
        out.append(float(t))
    return out


def _pair(raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected an object with k1 and k2")
    k1, k2 = _num(raw, "k1", where), _num(raw, "k2", where)
    if k1 > k2:
        raise ConfigError(where, f"need k1 <= k2, got {k1} > {k2}")
    return k1, k2


def _functional(raw, where, T):
    if not isinstance(raw, dict) or "factors" not in raw:
        raise ConfigError(where, "expected an object with 'factors' and 'at' or 'times'")
    factors = raw["factors"]
    if not isinstance(factors, list) or not factors:
        raise ConfigError(f"{where}.factors", "expected a non-empty list")
    for i, f in enumerate(factors):
        try:
            base_from_spec(f)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.factors[{i}]", f"invalid base function ({exc})") from None
    if "times" in raw:
        times = _t_list(raw["times"], f"{where}.times")
    elif "at" in raw:
        times = [T * a for a in _t_list(raw["at"], f"{where}.at")]
    else:
        raise ConfigError(where, "give 'times' or 'at' (fractions of T)")
    out = {"factors": factors, "times": times, "combine": raw.get("combine", "product")}
    try:
        CylindricalFunction(tuple(times), tuple(base_from_spec(f) for f in factors), out["combine"])
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None
    if max(times) > T * (1 + 1e-12):
        raise ConfigError(f"{where}.times", "times must not exceed T")
    return out


def _check(raw, where):
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict) or raw.get("kind") not in CHECK_KINDS:
        raise ConfigError(where, f"expected one of {', '.join(CHECK_KINDS)}")
    return dict(raw)


def _scenario(raw, where, defaults) -> dict:
    if isinstance(raw, str):
        raw = {"builtin": raw}
    if not isinstance(raw, dict):
        raise ConfigError(where, "expected an object or a built-in scenario name")
    if "builtin" in raw:
        name = raw["builtin"]
        if name not in BUILTIN_SCENARIOS:
            raise ConfigError(f"{where}.builtin", f"unknown scenario {name!r}")
        merged = copy.deepcopy(BUILTIN_SCENARIOS[name])
        merged.pop("description", None)
        merged["name"] = name
        merged.update({k: v for k, v in raw.items() if k != "builtin"})
        raw = merged
    for key in ("name", "model", "functionals"):
        if key not in raw:
            raise ConfigError(f"{where}.{key}", "missing required field")
    try:
        model = model_from_spec(raw["model"])
    except (GeometryError, AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.model", str(exc)) from None
    try:
        drift_from_spec(raw.get("drift"), model)
    except (GeometryError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.drift", str(exc)) from None
    T = _num(raw, "T", where, positive=True)
    out = {
        "name": str(raw["name"]),
        "model": raw["model"],
        "drift": raw.get("drift", {"kind": "zero"}),
        "x0": [float(v) for v in raw.get("x0", model.origin())],
        "T": T,
        "steps": _num(raw, "steps", where, max(16, int(math.ceil(256 * T))), integer=True, positive=True),
        "n_paths": _num(raw, "n_paths", where, defaults["n_paths"], integer=True, positive=True),
        "seed": _num(raw, "seed", where, defaults["seed"], integer=True),
        "scheme": raw.get("scheme", "GeodesicEuler"),
        "record_every": _num(raw, "record_every", where, 0, integer=True),
        "pinching": raw.get("pinching", "derived"),
        "policy": _policy(raw.get("policy"), f"{where}.policy"),
        "ratio_T": _t_list(raw["ratio_T"], f"{where}.ratio_T") if raw.get("ratio_T") else [],
    }
    if len(out["x0"]) != model.ambient_dim or not model.on_manifold(np.asarray(out["x0"])):
        raise ConfigError(f"{where}.x0", "starting point is not on the manifold")
    if out["scheme"] not in ("GeodesicEuler", "GeodesicHeun"):
        raise ConfigError(f"{where}.scheme", "expected GeodesicEuler or GeodesicHeun")
    if out["pinching"] != "derived":
        out["pinching"] = dict(zip(("k1", "k2"), _pair(out["pinching"], f"{where}.pinching")))
    if not isinstance(raw["functionals"], list) or not raw["functionals"]:
        raise ConfigError(f"{where}.functionals", "expected a non-empty list")
    out["functionals"] = [_functional(f, f"{where}.functionals[{i}]", T) for i, f in enumerate(raw["functionals"])]
    checks = raw.get("checks", ["poincare", "log_sobolev"])
    if not isinstance(checks, list):
        raise ConfigError(f"{where}.checks", "expected a list")
    out["checks"] = [_check(c, f"{where}.checks[{i}]") for i, c in enumerate(checks)]
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a parsed config and fill every default; the result re-resolves to itself."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    known = {"schema_version", "seed", "n_paths", "budget", "bounds", "asymptotics", "scenarios", "output"}
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(extra[0], "unknown top-level field")
    seed = _num(raw, "seed", "config", 0, integer=True)
    defaults = {"seed": seed, "n_paths": _num(raw, "n_paths", "config", 10_000, integer=True, positive=True)}
    budget = _num(raw, "budget", "config", 2_000_000_000, integer=True, positive=True)
    bounds = raw.get("bounds", {})
    if not isinstance(bounds, dict):
        raise ConfigError("bounds", "expected an object")
    sweeps = []
    for i, sw in enumerate(bounds.get("sweeps", [])):
        where = f"bounds.sweeps[{i}]"
        k1, k2 = _pair(sw, where)
        sweeps.append({"k1": k1, "k2": k2, "T": _t_list(sw.get("T"), f"{where}.T")})
    asym = []
    for i, a in enumerate(raw.get("asymptotics", [])):
        where = f"asymptotics[{i}]"
        k1, k2 = _pair(a, where)
        grid = _t_list(a.get("T_grid", [0.001 * j for j in range(1, 11)]), f"{where}.T_grid")
        if max(grid) > 0.1:
            raise ConfigError(f"{where}.T_grid", "asymptotic comparison needs T <= 0.1")
        asym.append({"k1": k1, "k2": k2, "T_grid": grid})
    scenarios = [_scenario(s, f"scenarios[{i}]", defaults) for i, s in enumerate(raw.get("scenarios", []))]
    names = [s["name"] for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError("scenarios", "scenario names must be unique")
    output = raw.get("output", {})
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "n_paths": defaults["n_paths"],
        "budget": budget,
        "bounds": {"policy": _policy(bounds.get("policy"), "bounds.policy"), "sweeps": sweeps},
        "asymptotics": asym,
        "scenarios": scenarios,
        "output": {
            "bounds_csv": output.get("bounds_csv", "bounds.csv"),
            "checks_jsonl": output.get("checks_jsonl", "checks.jsonl"),
            "asymptotics_csv": output.get("asymptotics_csv", "asymptotics.csv"),
        },
    }


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return resolve_config(raw)


# --------------------------------------------------------------------------
# reports


def _g(x) -> str:
    return "%.17g" % x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (Verdict,)):
        return obj.value
    return obj


BOUNDS_COLUMNS = ("T", "k1", "k2", "fang_wu", "product", "h", "branch", "c_star", "asymptotic")


def bounds_rows(sweep: dict, policy: SearchPolicy) -> list:
    pin = ConstantPinching(sweep["k1"], sweep["k2"])
    rows = []
    for T in sweep["T"]:
        r = h_bound(T, pin, policy)
        rows.append({"T": T, "k1": pin.k1, "k2": pin.k2, "fang_wu": r.fang_wu, "product": r.product, "h": r.h,
                     "branch": r.branch.value, "c_star": r.c_star, "asymptotic": asymptotic_bound(T, pin)})
    return rows


def compare_asymptotics(k1: float, k2: float, T_grid) -> list:
    """Rows of T, h, Fang-Wu branch, product branch, short-time polynomial and (h - poly)/T^2."""
    pin = ConstantPinching(k1, k2)
    rows = []
    for T in T_grid:
        if not 0 < T <= 0.1:
            raise DomainError("asymptotic comparison needs 0 < T <= 0.1")
        r = h_bound(T, pin)
        poly = asymptotic_bound(T, pin)
        rows.append({"T": T, "h": r.h, "fang_wu": r.fang_wu, "product": r.product, "poly": poly,
                     "residual_over_T2": (r.h - poly) / T**2})
    return rows


def fitted_t2(rows, key, first_order) -> float:
    """Intercept of a linear fit of (value - 1 - a T)/T^2 against T."""
    T = np.array([r["T"] for r in rows])
    y = (np.array([r[key] for r in rows]) - 1.0 - first_order * T) / T**2
    return float(np.polyfit(T, y, 1)[1])


def _write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_g(r[c]) if isinstance(r[c], (float, int, np.floating)) and not isinstance(r[c], bool)
                              else str(r[c]) for c in columns) + "\n")


def _write_dat(path, pairs, header):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for a, b in pairs:
            fh.write(f"{_g(a)} {_g(b)}\n")


# --------------------------------------------------------------------------
# scenarios


def _scenario_bound(sc, model, drift, T):
    policy = _make_policy(sc["policy"])
    declared = None if sc["pinching"] == "derived" else (sc["pinching"]["k1"], sc["pinching"]["k2"])
    cert = pinching(model, drift, T, declared=declared)
    if cert.is_constant:
        k1, k2 = cert.k1.value, cert.k2.value
        return h_bound(T, ConstantPinching(k1, k2), policy), (k1, k2), cert
    return tilde_h(T, cert.k1, cert.k2, policy), (cert.k1, cert.k2), cert


def _cyl(fspec, scale=1.0):
    return CylindricalFunction(tuple(t * scale for t in fspec["times"]), tuple(base_from_spec(f) for f in fspec["factors"]),
                               fspec["combine"])


def run_scenario(sc: dict, budget: int) -> tuple[list, list]:
    """Simulate one scenario and run its checks; returns (check records, ratio(T) pairs)."""
    model = model_from_spec(sc["model"])
    drift = drift_from_spec(sc["drift"], model)
    x0 = np.asarray(sc["x0"])
    T = sc["T"]
    kinds = [c["kind"] for c in sc["checks"]]
    record_every = sc["record_every"] or (max(1, sc["steps"] // 32) if "chain" in kinds else 0)
    Fs = [_cyl(f) for f in sc["functionals"]]
    times = sorted({t for F in Fs for t in F.times})
    cfg = SimConfig(T=T, steps=sc["steps"], n_paths=sc["n_paths"], seed=sc["seed"], scheme=sc["scheme"],
                    budget=budget, record_every=record_every, compute_q="chain" in kinds)
    ens = simulate(model, drift, x0, cfg, times)
    bound, (k1, k2), cert = _scenario_bound(sc, model, drift, T)
    constant = not hasattr(k1, "kind")
    records = []
    base = {"scenario": sc["name"], "H": bound.h, "branch": bound.branch.value, "pinching": cert.witness}
    for fi, F in enumerate(Fs):
        for chk in sc["checks"]:
            kind = chk["kind"]
            rec = dict(base, functional=fi)
            if kind == "poincare":
                rec.update(check_poincare(F, ens, bound, chk.get("margin", 3.0)).to_record())
            elif kind == "log_sobolev":
                rec.update(check_log_sobolev(F, ens, bound, chk.get("margin", 3.0)).to_record())
            elif kind == "rayleigh":
                rq = rayleigh_quotient(F, ens)
                rec.update({"name": "rayleigh", "verdict": Verdict.PASS.value, "ratio": rq.ratio,
                            "ratio_std_error": rq.ratio_std_error, "ratio_over_H": rq.ratio / bound.h})
            elif kind == "chain":
                reports = [chain_modified(F, ens, k1, k2)]
                if constant:
                    reports = [chain_damped(F, ens, k1, k2), chain_damped_modified(F, ens, k1, k2)] + reports
                for r in reports:
                    records.append(dict(base, functional=fi, name=f"chain: {r.name}",
                                        verdict=(Verdict.PASS if r.holds else Verdict.FAIL).value,
                                        max_excess=r.max_excess, slack=r.slack, n_checked=r.n_checked))
                continue
            elif kind == "martingale":
                if not constant:
                    continue
                t1, t2 = chk.get("t1", 0.0), chk.get("t2", T)
                outer = SimConfig(T=T, steps=sc["steps"], n_paths=chk.get("outer", min(sc["n_paths"], 1000)),
                                  seed=sc["seed"], scheme=sc["scheme"], budget=budget, compute_q=False)
                oens = simulate(model, drift, x0, outer, sorted(set(times) | {t1, t2}))
                rec.update(check_martingale_decomposition(F, oens, t1, t2, (k1, k2), chk.get("c", 0.0),
                                                          chk.get("inner", 128), nested_budget=budget,
                                                          margin=chk.get("margin", 3.0)).to_record())
            else:
                continue  # single-point checks are run once per scenario below
            records.append(rec)
    for chk in sc["checks"]:
        if chk["kind"] in ("gradient_estimate", "second_characterization") and constant:
            f = base_from_spec(chk.get("f", sc["functionals"][0]["factors"][0]))
            fn = check_gradient_estimate if chk["kind"] == "gradient_estimate" else check_second_characterization
            res = fn(model, drift, f, x0, chk.get("t", 0.5 * T), chk.get("c", 0.0), (k1, k2),
                     n_paths=chk.get("n_paths", sc["n_paths"]), seed=sc["seed"])
            records.append(dict(base, functional=None, **res.to_record()))
    ratios = []
    for Tr in sc["ratio_T"]:
        steps = max(1, int(round(sc["steps"] * Tr / T)))
        rcfg = SimConfig(T=Tr, steps=steps, n_paths=sc["n_paths"], seed=sc["seed"], scheme=sc["scheme"],
                         budget=budget, compute_q=False)
        F = _cyl(sc["functionals"][0], Tr / T)
        rens = simulate(model, drift, x0, rcfg, F.times)
        ratios.append((Tr, rayleigh_quotient(F, rens).ratio))
    return records, ratios


# --------------------------------------------------------------------------
# entry point


def run(cfg: dict, out_dir: Path, bounds_only: bool = False) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    policy = _make_policy(cfg["bounds"]["policy"])
    rows = []
    for sw in cfg["bounds"]["sweeps"]:
        srows = bounds_rows(sw, policy)
        rows.extend(srows)
        _write_dat(out_dir / f"H_k1={_g(sw['k1'])}_k2={_g(sw['k2'])}.dat", [(r["T"], r["h"]) for r in srows],
                   f"T H(T) for k1={_g(sw['k1'])} k2={_g(sw['k2'])}")
    _write_csv(out_dir / cfg["output"]["bounds_csv"], BOUNDS_COLUMNS, rows)
    arows = []
    for a in cfg["asymptotics"]:
        for r in compare_asymptotics(a["k1"], a["k2"], a["T_grid"]):
            arows.append({"k1": a["k1"], "k2": a["k2"], **r})
    if arows:
        _write_csv(out_dir / cfg["output"]["asymptotics_csv"],
                   ("k1", "k2", "T", "h", "fang_wu", "product", "poly", "residual_over_T2"), arows)
    if bounds_only:
        return EXIT_OK
    failed = False
    with open(out_dir / cfg["output"]["checks_jsonl"], "w") as fh:
        for sc in cfg["scenarios"]:
            log.info("scenario %s: %d paths, %d steps", sc["name"], sc["n_paths"], sc["steps"])
            records, ratios = run_scenario(sc, cfg["budget"])
            for rec in records:
                failed |= rec.get("verdict") == Verdict.FAIL.value
                fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")
            if ratios:
                _write_dat(out_dir / f"ratio_{sc['name']}.dat", ratios, f"T Rayleigh ratio, scenario {sc['name']}")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathgap", description="Spectral-gap bounds on path space and their MC checks.")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed-override", type=int, help="replace every scenario seed")
    p.add_argument("--paths-override", type=int, help="replace every scenario's n_paths")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--bounds-only", action="store_true", help="skip all simulation")
    p.add_argument("--list-scenarios", action="store_true", help="print the built-in scenarios and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.list_scenarios:
        for name, sc in BUILTIN_SCENARIOS.items():
            print(f"{name:16s} {sc['description']}")
        return EXIT_OK
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None or args.paths_override is not None:
            for sc in cfg["scenarios"]:
                if args.seed_override is not None:
                    sc["seed"] = args.seed_override
                if args.paths_override is not None:
                    if args.paths_override < 1:
                        raise ConfigError("--paths-override", "must be >= 1")
                    sc["n_paths"] = args.paths_override
        return run(cfg, Path(args.out_dir), args.bounds_only)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (SimulationError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
