import json
import math

import numpy as np
import pytest

from sublinear_lab.cli import ConfigError, load_config, main, parse_number
from sublinear_lab.grid import GridSpec, build_grid, write_field_csv

REMARK_EIG = {
    "command": "eig",
    "weight": {"case": "remark-q0", "q": 0.5},
    "grid": {"kind": "interval", "x0": 0, "x1": 3.14159265358979, "nodes": 2048},
}


def run(tmp_path, cfg, *extra, name="run"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg, indent=2))
    out = tmp_path / name
    code = main(["--config", str(path), "--out", str(out), *extra])
    report = out / "report.json"
    return code, (json.loads(report.read_text()) if report.exists() else None), out


def test_eig_example(tmp_path):
    code, rep, out = run(tmp_path, REMARK_EIG)
    assert code == 0
    assert rep["mu1"] == pytest.approx(1.6980941267905, rel=1e-5)
    assert rep["tstar"] == pytest.approx(0.70913844, rel=1e-6)
    assert (out / "fields" / "phi1.csv").exists()


def test_radial_check_names_inferno(tmp_path):
    cfg = {"command": "radial-check", "weight": {"case": "remark-q0", "q": 0.5}, "q": 0.5, "grid": {"nodes": 1025}}
    code, rep, _ = run(tmp_path, cfg)
    assert code == 2
    failed = rep["failedCondition"]
    assert failed["name"] == "inferno"
    assert failed["lhs"] > failed["rhs"] == pytest.approx(2 * math.sqrt(3) - 2 * math.pi / 3, abs=1e-8)
    code, rep, _ = run(tmp_path, cfg | {"q": 0.75}, name="ok")
    assert code == 0 and rep["verdict"]


def test_radial_check_rad2(tmp_path):
    cfg = {
        "command": "radial-check",
        "weight": {"case": "rem-I01", "sigma": 0.9},
        "grid": {"kind": "ball", "R": 1, "N": 1, "nodes": 401},
        "q": 0.5,
        "R0": 0.5,
        "construction": "rad2",
    }
    code, rep, _ = run(tmp_path, cfg)
    assert code == 0
    assert [c["name"] for c in rep["trail"]] == ["sipi", "a", "b", "casa", "ad", "laaa", "ann", "fin"]
    code, rep, _ = run(tmp_path, cfg | {"weight": {"case": "rem-I01", "sigma": 0.2}}, name="fail")
    assert code == 2 and rep["failedCondition"]["name"] == "sipi"


def test_missing_command(tmp_path):
    cfg = dict(REMARK_EIG)
    del cfg["command"]
    code, _, _ = run(tmp_path, cfg)
    assert code == 1


def test_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "command": "eig",\n  "weight": {"case": "remark-q0" "q": 0.5}\n}\n')
    assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert f"{path}:3:" in capsys.readouterr().err
    with pytest.raises(ConfigError, match=":3:"):
        load_config(path)


def test_unknown_case_is_config_error(tmp_path, capsys):
    cfg = REMARK_EIG | {"weight": {"case": "nonesuch"}}
    code, _, _ = run(tmp_path, cfg)
    assert code == 1
    assert "nonesuch" in capsys.readouterr().err


def test_hypothesis_failure_exit_code(tmp_path):
    cfg = {"command": "eig", "weight": {"expr": "-1.0 + 0*x"}, "grid": {"kind": "interval", "x0": 0, "x1": 1, "nodes": 64}}
    code, _, _ = run(tmp_path, cfg)
    assert code == 2


def test_solver_failure_exit_code(tmp_path):
    # an iteration budget of one cannot reach the tolerance
    cfg = {
        "command": "solve",
        "weight": {"case": "remark-q0", "q": 0.5},
        "grid": {"nodes": 257},
        "q": 0.75,
        "method": "newton",
        "solver": {"max_iterations": 1},
    }
    code, _, _ = run(tmp_path, cfg)
    assert code == 3


def test_monotone_checks_its_subsolution(tmp_path):
    # a positive constant is not a subsolution where a < 0
    cfg = {"command": "solve", "weight": {"case": "remark-q0", "q": 0.5}, "grid": {"nodes": 257}, "q": 0.75, "method": "monotone"}
    code, _, _ = run(tmp_path, cfg)
    assert code == 2


def test_solve_and_weight_sources(tmp_path):
    g = build_grid(GridSpec.interval(0.0, math.pi, 257))
    write_field_csv(tmp_path / "a.csv", g, 2 - 8 * np.cos(g.coordinates) ** 2)
    grid = {"kind": "interval", "x0": 0, "x1": "pi", "nodes": 257}
    reports = []
    for i, weight in enumerate(({"file": str(tmp_path / "a.csv")}, {"expr": "2 - 8*cos(x)**2"}, {"case": "remark-q0", "q": 0.5})):
        code, rep, out = run(tmp_path, {"command": "solve", "weight": weight, "grid": grid, "q": 0.75, "method": "minimize"}, name=f"s{i}")
        assert code == 0 and rep["residual"] <= 1e-8
        assert rep["positivity"]["class"] == "interiorOfCone"
        reports.append(rep["maxU"])
    assert max(reports) - min(reports) <= 1e-12 * max(reports)


def test_expr_cannot_reach_builtins(tmp_path):
    cfg = {"command": "eig", "weight": {"expr": "__import__('os').getcwd()"}, "grid": {"kind": "interval", "nodes": 64}}
    code, _, _ = run(tmp_path, cfg)
    assert code == 1


def test_branch_outputs(tmp_path):
    cfg = {"command": "branch", "weight": {"case": "remark-q0", "q": 0.5}, "grid": {"nodes": 513}, "qMin": 0.75, "qStops": [0.9, 0.75]}
    code, rep, out = run(tmp_path, cfg)
    assert code == 0 and rep["terminationReason"] == "reachedQmin"
    header = (out / "branch.csv").read_text().splitlines()[0]
    assert header == "q,minU,maxU,gamma1,positivityClass,residual"


def test_deadcore_and_nearzero(tmp_path):
    code, rep, out = run(tmp_path, {"command": "deadcore", "grid": {"nodes": 513}, "deltas": [40, 160, 640]})
    assert code == 0 and rep["containment"] and rep["bounded"]
    assert (out / "sweep.csv").read_text().startswith("delta,q,dDelta,coreLeft,coreRight,containmentOK")
    cfg = {"command": "nearzero", "weight": {"expr": "cos(x)"}, "grid": {"kind": "interval", "x0": 0, "x1": "pi", "nodes": 513}, "t0": 2, "epsilons": [1e-3]}
    code, rep, _ = run(tmp_path, cfg, name="nz")
    assert code == 0 and rep["predictedSlope"] == pytest.approx(2 + math.sqrt(3), rel=1e-4)


def test_outputs_are_byte_identical(tmp_path):
    cfg = {
        "command": "branch",
        "weight": {"case": "remark-q0", "q": 0.5},
        "grid": {"nodes": 257},
        "qMin": 0.3,
        "estimateInterval": True,
        "testQs": [0.5],
    }
    _, _, a = run(tmp_path, cfg, "--seed", "5", name="a")
    _, _, b = run(tmp_path, cfg, "--seed", "5", name="b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


@pytest.mark.parametrize(
    "text,value",
    [("pi", math.pi), ("-pi/2", -math.pi / 2), ("2*pi", 2 * math.pi), ("0.5pi", math.pi / 2), ("1.25", 1.25), (3, 3.0)],
)
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("bad", ["tau", True, None, "pi/x"])
def test_parse_number_rejects(bad):
    with pytest.raises(ConfigError):
        parse_number(bad)


def _failing(out):
    return {line.split("(")[0] for line in out.splitlines() if line.startswith("[FAIL]")}


def test_validate_fault_injection_and_idempotence(tmp_path, capsys):
    code = main(["validate", "--out", str(tmp_path / "v1")])
    first = capsys.readouterr().out
    clean = _failing(first)
    assert code == (2 if clean else 0)
    assert main(["validate", "--out", str(tmp_path / "v2")]) == code
    assert capsys.readouterr().out == first
    assert (tmp_path / "v1" / "report.json").read_bytes() == (tmp_path / "v2" / "report.json").read_bytes()
    # the injected sign flip breaks exactly the t* identity criterion
    assert main(["validate", "--inject", "tstar-sign"]) == 2
    added = _failing(capsys.readouterr().out) - clean
    assert len(added) == 1 and "ls_identities" in added.pop()
