import csv
import json
import subprocess
import sys

import pytest

from pathgap.cli import (
    BOUNDS_COLUMNS,
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_FAIL,
    EXIT_OK,
    ConfigError,
    main,
    resolve_config,
)

SMALL = {
    "schema_version": 1,
    "seed": 3,
    "n_paths": 300,
    "bounds": {"sweeps": [{"k1": 0, "k2": 2, "T": [0.5, 1.0]}, {"k1": -1, "k2": -1, "T": {"start": 0.5, "stop": 1.5, "num": 3}}]},
    "asymptotics": [{"k1": 0.5, "k2": 1.5, "T_grid": [0.001, 0.002, 0.004]}],
    "scenarios": ["flat-linear", {"builtin": "sphere", "steps": 64, "ratio_T": [0.5, 1.0]}],
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg) if isinstance(cfg, dict) else cfg)
    return str(p)


def _run(tmp_path, cfg, *extra, out="out"):
    return main(["--config", _write(tmp_path, cfg), "--out-dir", str(tmp_path / out), *extra])


def test_full_run_outputs(tmp_path):
    assert _run(tmp_path, SMALL) == EXIT_OK
    out = tmp_path / "out"
    rows = list(csv.DictReader(open(out / "bounds.csv")))
    assert tuple(rows[0]) == BOUNDS_COLUMNS and len(rows) == 5
    assert float(rows[-1]["h"]) == pytest.approx((1 + 2.718281828459045**1.5) / 2, rel=1e-15)
    assert rows[0]["branch"] in ("FangWu", "Product")
    dat = (out / "H_k1=0_k2=2.dat").read_text().splitlines()
    assert dat[0].startswith("#") and len(dat) == 3 and len(dat[1].split()) == 2
    asym = list(csv.DictReader(open(out / "asymptotics.csv")))
    assert len(asym) == 3 and "residual_over_T2" in asym[0]
    recs = [json.loads(line) for line in open(out / "checks.jsonl")]
    names = {(r["scenario"], r["name"]) for r in recs}
    assert ("flat-linear", "poincare") in names and ("sphere", "chain: damped vs modified") in names
    assert all(r["verdict"] != "Fail" for r in recs)
    assert len((out / "ratio_sphere.dat").read_text().splitlines()) == 3


def test_deterministic_and_round_trip(tmp_path):
    assert _run(tmp_path, SMALL, out="a") == EXIT_OK
    assert _run(tmp_path, SMALL, out="b") == EXIT_OK
    for name in ("bounds.csv", "checks.jsonl", "resolved_config.json", "asymptotics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    resolved = json.loads((tmp_path / "a" / "resolved_config.json").read_text())
    assert resolve_config(resolved) == resolved
    assert main(["--config", str(tmp_path / "a" / "resolved_config.json"), "--out-dir", str(tmp_path / "c")]) == EXIT_OK
    assert (tmp_path / "c" / "checks.jsonl").read_bytes() == (tmp_path / "a" / "checks.jsonl").read_bytes()


def test_overrides_change_outputs(tmp_path):
    cfg = {"schema_version": 1, "scenarios": [{"builtin": "flat-linear", "n_paths": 200}]}
    assert _run(tmp_path, cfg, out="a") == EXIT_OK
    assert _run(tmp_path, cfg, "--seed-override", "11", out="b") == EXIT_OK
    assert _run(tmp_path, cfg, "--paths-override", "50", out="c") == EXIT_OK
    a, b, c = ((tmp_path / x / "checks.jsonl").read_text() for x in "abc")
    assert a != b
    assert json.loads(c.splitlines()[0])["lhs"]["n_paths"] == 50


def test_bounds_only_skips_simulation(tmp_path):
    assert _run(tmp_path, SMALL, "--bounds-only") == EXIT_OK
    assert (tmp_path / "out" / "bounds.csv").exists()
    assert not (tmp_path / "out" / "checks.jsonl").exists()


def test_declared_pinching_is_verified(tmp_path):
    cfg = {"schema_version": 1, "scenarios": [{"builtin": "flat-linear", "n_paths": 5000,
                                                "pinching": {"k1": 0.0, "k2": 0.0}}]}
    assert _run(tmp_path, cfg) == EXIT_OK
    # declaring positive curvature on flat space is rejected before anything runs
    cfg["scenarios"][0]["pinching"] = {"k1": 0.5, "k2": 1.0}
    assert _run(tmp_path, cfg) == EXIT_CONFIG


def test_fail_verdict_gives_exit_one(tmp_path, monkeypatch):
    import pathgap.cli as cli

    real = cli.check_poincare
    monkeypatch.setattr(cli, "check_poincare", lambda F, ens, bound, margin=3.0: real(F, ens, 0.5, margin))
    cfg = {"schema_version": 1, "scenarios": [{"builtin": "flat-linear", "n_paths": 5000}]}
    assert _run(tmp_path, cfg) == EXIT_FAIL


@pytest.mark.parametrize("cfg,where", [
    ({"schema_version": 2}, "schema_version"),
    ({"schema_version": 1, "bogus": 1}, "bogus"),
    ({"schema_version": 1, "bounds": {"sweeps": [{"k1": 2, "k2": 1, "T": [1]}]}}, "bounds.sweeps[0]"),
    ({"schema_version": 1, "bounds": {"sweeps": [{"k1": 0, "k2": 1, "T": [-1]}]}}, "bounds.sweeps[0].T[0]"),
    ({"schema_version": 1, "scenarios": [{"builtin": "nope"}]}, "scenarios[0].builtin"),
    ({"schema_version": 1, "scenarios": [{"builtin": "sphere", "n_paths": 0}]}, "scenarios[0].n_paths"),
    ({"schema_version": 1, "scenarios": [{"builtin": "sphere", "x0": [1, 1, 1]}]}, "scenarios[0].x0"),
    ({"schema_version": 1, "scenarios": [{"builtin": "sphere", "checks": ["nonsense"]}]}, "scenarios[0].checks[0]"),
    ({"schema_version": 1, "scenarios": [{"builtin": "sphere", "functionals": [{"factors": [{"kind": "cubic"}], "at": [1]}]}]},
     "scenarios[0].functionals[0].factors[0]"),
    ({"schema_version": 1, "scenarios": [{"builtin": "sphere", "policy": {"mode": "Fast"}}]}, "scenarios[0].policy.mode"),
    ({"schema_version": 1, "asymptotics": [{"k1": 0, "k2": 1, "T_grid": [0.5]}]}, "asymptotics[0].T_grid"),
    ({"schema_version": 1, "scenarios": ["sphere", "sphere"]}, "scenarios"),
])
def test_invalid_configs_name_the_field(cfg, where):
    with pytest.raises(ConfigError) as info:
        resolve_config(cfg)
    assert info.value.where == where


def test_config_error_exit_codes(tmp_path, capsys):
    assert main(["--config", _write(tmp_path, '{"schema_version": 1,\n  "seed": 1 2}')]) == EXIT_CONFIG
    assert ":2:" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG
    cfg = {"schema_version": 1, "scenarios": [{"builtin": "sphere", "steps": 4}]}
    assert _run(tmp_path, cfg) == EXIT_CONFIG


def test_budget_exit_code(tmp_path):
    cfg = {"schema_version": 1, "budget": 1000, "scenarios": ["sphere"]}
    assert _run(tmp_path, cfg) == EXIT_BUDGET


def test_list_scenarios_console_script():
    out = subprocess.run([sys.executable, "-m", "pathgap", "--list-scenarios"], capture_output=True, text=True, check=True)
    names = [line.split()[0] for line in out.stdout.splitlines()]
    assert names == ["flat-linear", "sphere", "hyperbolic", "ou", "evolving-sphere"]
