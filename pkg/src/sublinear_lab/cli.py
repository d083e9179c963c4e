"""Command-line front end: ``sublinear-lab <command> --config run.json --out DIR``.

Exit codes: 0 success, 1 malformed configuration, 2 hypothesis or
condition failure, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .branch import compute_tstar, estimate_interval_I, near_zero_analysis, trace_branch
from .deadcore import (
    barrier_delta0,
    core_distance_slope,
    empirical_delta0,
    shrunken_support,
    verify_deadcore_formation,
)
from .eigen import linearized_eigen, principal_indefinite_eigen
from .errors import HypothesisError, SolverError
from .grid import GridSpec, build_grid, read_field_csv, write_field_csv
from .radial import build_cc, build_rad2, verify_weak_subsolution
from .solve import (
    SolveParams,
    SubSuperPair,
    classify_positivity,
    energy_identity_gap,
    large_supersolution,
    minimize_energy,
    monotone_iterate,
    newton_refine,
    relative_residual,
)
from .weights import (
    CorpusCase,
    Weight,
    check_radial_conditions,
    corpus_domain,
    half_domain,
    make_weight,
)

log = logging.getLogger("sublinear_lab")

COMMANDS = ("eig", "solve", "branch", "radial-check", "deadcore", "nearzero", "validate")
DEFAULT_NODES = 1025
CORPUS = ("remark-q0", "ti-cubic", "ti-quartic", "rem-I01")
EXPR_NAMES = {name: getattr(np, name) for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "maximum", "minimum", "where", "pi")}


class ConfigError(ValueError):
    """Malformed configuration, reported as ``path:line: message``."""


# -- configuration ---------------------------------------------------------------

_PI = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_number(value, where: str = "value") -> float:
    """A float, or a symbolic multiple of π such as "pi", "-pi/2", "2*pi"."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI.match(value)
        if m:
            coef = m.group(1)
            c = -1.0 if coef == "-" else 1.0 if coef in ("", "+") else float(coef)
            return c * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{where}: expected a number or a multiple of pi, got {value!r}")


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return 1


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:0: cannot read config ({exc.strerror})") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    cfg["_source"] = (str(path), text)
    return cfg


def _fail(cfg: dict, key: str, message: str):
    path, text = cfg.get("_source", ("<config>", ""))
    raise ConfigError(f"{path}:{_line_of(text, key)}: {message}")


def _grid_from(cfg: dict, default_domain: dict | None, nodes_override: int | None):
    g = dict(cfg.get("grid") or {})
    if not g and default_domain is None:
        _fail(cfg, "grid", "missing key 'grid'")
    kind = g.get("kind", (default_domain or {}).get("kind", "interval"))
    nodes = nodes_override or int(g.get("nodes", DEFAULT_NODES))
    try:
        if kind == "interval":
            x0 = parse_number(g.get("x0", (default_domain or {}).get("x0", 0.0)), "grid.x0")
            x1 = parse_number(g.get("x1", (default_domain or {}).get("x1", 1.0)), "grid.x1")
            return build_grid(GridSpec.interval(x0, x1, nodes))
        if kind == "ball":
            return build_grid(GridSpec.ball(parse_number(g.get("R", 1.0), "grid.R"), int(g.get("N", 1)), nodes))
        return build_grid(GridSpec(kind=kind, nodes=nodes))
    except ValueError as exc:
        _fail(cfg, "grid", str(exc))


def _case(spec: dict) -> CorpusCase:
    params = {k: parse_number(v, k) for k, v in spec.items() if k not in ("case",)}
    return CorpusCase(spec["case"], params)


def build_problem(cfg: dict, nodes_override: int | None = None) -> tuple[Weight, dict]:
    """Grid and weight from the ``weight``/``grid`` sections; returns (weight, weight spec)."""
    spec = cfg.get("weight")
    if not isinstance(spec, dict):
        _fail(cfg, "weight", "missing or malformed key 'weight'")
    if "case" in spec:
        if spec["case"] not in CORPUS:
            _fail(cfg, "case", f"unknown corpus case {spec['case']!r}")
        case = _case(spec)
        domain = None
        if case.name != "rem-I01":
            try:
                domain = corpus_domain(case)
            except KeyError as exc:
                _fail(cfg, "case", f"corpus case {case.name} needs parameter {exc}")
        grid = _grid_from(cfg, domain or {"kind": "ball"}, nodes_override)
        return make_weight(grid, case), spec
    grid = _grid_from(cfg, None, nodes_override)
    if "file" in spec:
        try:
            _, x, values = read_field_csv(spec["file"])
        except (OSError, ValueError) as exc:
            _fail(cfg, "file", str(exc))
        if x.size != grid.n or not np.allclose(x, grid.coordinates):
            _fail(cfg, "file", "weight file nodes do not match the grid")
        return Weight(grid, values, {"type": "file", "file": spec["file"]}), spec
    if "expr" in spec:
        try:
            values = eval(spec["expr"], {"__builtins__": {}}, {**EXPR_NAMES, "x": grid.coordinates, "r": grid.coordinates})
        except Exception as exc:  # any failure to evaluate is a config error
            _fail(cfg, "expr", f"cannot evaluate weight expression: {exc}")
        return Weight(grid, np.broadcast_to(np.asarray(values, dtype=float), (grid.n,)).copy(), {"type": "expr", "expr": spec["expr"]}), spec
    try:
        return make_weight(grid, spec), spec
    except (KeyError, ValueError) as exc:
        _fail(cfg, "weight", f"unrecognised weight: {exc}")


def solver_params(cfg: dict) -> SolveParams:
    s = cfg.get("solver") or {}
    try:
        return SolveParams(**{k: s[k] for k in ("max_iterations", "tolerance", "positivity_floor", "newton_polish") if k in s})
    except TypeError as exc:
        _fail(cfg, "solver", str(exc))


def _require(cfg: dict, key: str):
    if key not in cfg:
        _fail(cfg, key, f"missing key '{key}' for command {cfg.get('command')!r}")
    return cfg[key]


# -- outputs -------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_report(out: Path, report: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def write_rows(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


def _field(out: Path, name: str, grid, values) -> None:
    (out / "fields").mkdir(parents=True, exist_ok=True)
    write_field_csv(out / "fields" / f"{name}.csv", grid, values)


# -- commands ------------------------------------------------------------------------


def cmd_eig(cfg, out, args) -> int:
    w, spec = build_problem(cfg, args.nodes)
    pair = principal_indefinite_eigen(w.grid, w)
    tstar = compute_tstar(w.grid, w, pair)
    _field(out, "phi1", w.grid, pair.eigenfunction)
    write_report(out, {"command": "eig", "weight": spec, "mu1": pair.eigenvalue, "tstar": tstar, **pair.to_json()})
    return 0


def cmd_solve(cfg, out, args) -> int:
    w, spec = build_problem(cfg, args.nodes)
    q = parse_number(_require(cfg, "q"), "q")
    params = solver_params(cfg)
    grid = w.grid
    method = cfg.get("method", "minimize")
    init = cfg.get("init", "ones")
    if method == "minimize":
        u0 = np.ones(grid.n) if init == "ones" else large_supersolution(grid, w, q, floor=1.0)
        u = minimize_energy(grid, w, q, u0, params)
    elif method == "newton":
        u = newton_refine(grid, w, q, large_supersolution(grid, w, q, floor=1.0) if init == "super" else np.ones(grid.n), params)
    elif method == "monotone":
        if "sub" in cfg:
            try:
                _, x, sub = read_field_csv(cfg["sub"])
            except (OSError, ValueError) as exc:
                _fail(cfg, "sub", str(exc))
            if x.size != grid.n or not np.allclose(x, grid.coordinates):
                _fail(cfg, "sub", "subsolution file nodes do not match the grid")
        else:
            sub = np.full(grid.n, parse_number(cfg.get("sub_constant", 1e-8), "sub_constant"))
        weak = verify_weak_subsolution(grid, w, q, sub)
        if not weak.verdict:
            raise HypothesisError(f"the given sub is not a weak subsolution (violation {weak.max_weak_residual:.3e})")
        sup = large_supersolution(grid, w, q, floor=max(1.0, 1.01 * sub.max()))
        u = monotone_iterate(grid, w, q, SubSuperPair(sub, sup), params)
    else:
        _fail(cfg, "method", f"unknown method {method!r}")
    pos = classify_positivity(u, grid=grid)
    report = {
        "command": "solve",
        "weight": spec,
        "q": q,
        "method": method,
        "residual": relative_residual(grid, w.values, q, u),
        "energyIdentityGap": energy_identity_gap(grid, w.values, q, u),
        "positivity": pos.to_json(),
        "maxU": float(u.max()),
    }
    if u.min() > 0:
        report["stability"] = linearized_eigen(grid, w, q, u).to_json()
    _field(out, "u", grid, u)
    write_report(out, report)
    return 0


def cmd_branch(cfg, out, args) -> int:
    w, spec = build_problem(cfg, args.nodes)
    kw = {k: parse_number(cfg[c], c) for k, c in (("q_start", "qStart"), ("q_min", "qMin"), ("step", "step")) if c in cfg}
    b = trace_branch(w.grid, w, q_stops=tuple(parse_number(s, "qStops") for s in cfg.get("qStops", ())), **kw)
    write_rows(out / "branch.csv", [p.to_row() for p in b.points])
    report = {
        "command": "branch",
        "weight": spec,
        "mu1": b.mu1,
        "tstar": b.tstar,
        "points": len(b.points),
        "lowestQ": b.points[-1].q,
        "terminationReason": b.termination_reason,
        "frontier": b.frontier,
        "normBracket": list(b.norm_bracket()),
    }
    if cfg.get("estimateInterval"):
        est = estimate_interval_I(b, w.grid, w, cfg.get("testQs", ()), seed=args.seed)
        report["interval"] = est.to_json()
    _field(out, "u_lowest", w.grid, b.points[-1].u)
    write_report(out, report)
    return 0


def _default_R0(w: Weight) -> float:
    a = w.values
    flips = np.flatnonzero(np.sign(a[1:]) * np.sign(a[:-1]) < 0)
    if not flips.size:
        raise HypothesisError("weight does not change sign along the radius")
    i = flips[0]
    r = w.grid.coordinates
    return float(r[i] - a[i] * (r[i + 1] - r[i]) / (a[i + 1] - a[i]))


def cmd_radial(cfg, out, args) -> int:
    spec = cfg.get("weight") or {}
    if spec.get("case") in ("remark-q0", "ti-cubic", "ti-quartic") and (cfg.get("grid") or {}).get("kind", "interval") == "interval":
        # even interval weights are checked on their radial half-domain
        nodes = args.nodes or int((cfg.get("grid") or {}).get("nodes", DEFAULT_NODES))
        w = half_domain(_case(spec), nodes)
    else:
        w, spec = build_problem(cfg, args.nodes)
    if w.grid.kind != "ball":
        _fail(cfg, "grid", "radial checks need a ball grid or an even corpus weight")
    q = parse_number(_require(cfg, "q"), "q")
    R0 = parse_number(cfg["R0"], "R0") if "R0" in cfg else _default_R0(w)
    side = cfg.get("side", "inner")
    construction = cfg.get("construction", "cc")
    cond = check_radial_conditions(w, q, R0, side)
    report = {"command": "radial-check", "weight": spec, "q": q, "R0": R0, "side": side, "construction": construction, "cqThreshold": cond.cq_threshold}
    failure = cond.first_failure(construction)
    if failure is not None:
        name, lhs, rhs = failure
        report.update(verdict=False, failedCondition={"name": name, "lhs": lhs, "rhs": rhs})
        write_report(out, report)
        log.error("condition %s fails: lhs=%.6g rhs=%.6g", name, lhs, rhs)
        return 2
    built = build_cc(w.grid, w, q, R0, side) if construction == "cc" else build_rad2(w.grid, w, q, R0, side)
    k = int(np.argmin(np.abs(w.grid.coordinates - R0)))
    weak = verify_weak_subsolution(w.grid, w, q, built.subsolution, interface=k)
    report.update(verdict=weak.verdict, trail=[c.to_json() for c in built.trail], weak=weak.to_json())
    _field(out, "subsolution", w.grid, built.subsolution)
    write_report(out, report)
    return 0 if weak.verdict else 2


def cmd_deadcore(cfg, out, args) -> int:
    g = _grid_from(cfg, {"kind": "interval", "x0": -1.0, "x1": 1.0}, args.nodes)
    x = g.coordinates
    names = {**EXPR_NAMES, "x": x}
    try:
        b1 = np.broadcast_to(eval(cfg.get("b1", "where(abs(x) > 0.5, 1.0, 0.0)"), {"__builtins__": {}}, names), x.shape).astype(float)
        b2 = np.broadcast_to(eval(cfg.get("b2", "maximum(0.25 - x**2, 0.0)"), {"__builtins__": {}}, names), x.shape).astype(float)
    except Exception as exc:  # any failure to evaluate is a config error
        _fail(cfg, "b1", f"cannot evaluate b1/b2: {exc}")
    sigma = parse_number(cfg.get("sigma", 0.2), "sigma")
    qbar = parse_number(cfg.get("qbar", 0.5), "qbar")
    deltas = [parse_number(d, "deltas") for d in cfg.get("deltas", (10, 40, 160))]
    reps = verify_deadcore_formation(g, b1, b2, sigma, qbar, deltas)
    write_rows(out / "sweep.csv", [r.to_row() for r in reps])
    report = {"command": "deadcore", "sigma": sigma, "qbar": qbar, "deltas": deltas, "C": reps[0].uniform_bound, "a0": reps[0].a0}
    for q in (qbar / 2, qbar):
        try:
            report[f"slope@q={q:g}"] = core_distance_slope(reps, q)
        except ValueError:
            report[f"slope@q={q:g}"] = None
        report[f"delta0Empirical@q={q:g}"] = empirical_delta0(reps, q)
    half = sigma / 2
    widths = [hi - lo for lo, hi in shrunken_support(g, b2, half)]
    if widths:
        report["delta0Barrier"] = barrier_delta0(reps[0].uniform_bound, reps[0].a0, qbar, g.N, max(widths) / 2)
    report["containment"] = all(r.containment_ok for r in reps)
    report["bounded"] = all(r.sup_norm < r.uniform_bound for r in reps)
    write_report(out, report)
    return 0


def cmd_nearzero(cfg, out, args) -> int:
    w, spec = build_problem(cfg, args.nodes)
    t0 = parse_number(_require(cfg, "t0"), "t0")
    eps = [parse_number(e, "epsilons") for e in cfg.get("epsilons", (1e-3, 1e-4))]
    rec = near_zero_analysis(w.grid, w, t0, eps)
    write_report(out, {"command": "nearzero", "weight": spec, **rec.to_json()})
    return 0


def cmd_validate(args, out: Path | None) -> int:
    inject = tuple(args.inject or ())
    results = acceptance.run_all(inject)
    for r in results:
        print(r.line())
    npass = sum(r.passed for r in results)
    print(f"{npass}/{len(results)} criteria passed")
    if out is not None:
        write_report(out, {"command": "validate", "criteria": [r.to_json() | {"seconds": None} for r in results]})
    return 0 if npass == len(results) else 2


HANDLERS = {
    "eig": cmd_eig,
    "solve": cmd_solve,
    "branch": cmd_branch,
    "radial-check": cmd_radial,
    "deadcore": cmd_deadcore,
    "nearzero": cmd_nearzero,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sublinear-lab", description="Numerical laboratory for -Δu = a(x)u^q with Neumann conditions.")
    p.add_argument("command", nargs="?", choices=COMMANDS, help="analysis to run (else taken from the config)")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: config 'output' or ./out)")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized multistarts")
    p.add_argument("--nodes", type=int, default=None, help="override the grid node count")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--inject", action="append", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {}
        command = args.command or cfg.get("command")
        if command is None:
            raise ConfigError(f"{args.config or '<no config>'}:1: missing key 'command'")
        if command not in COMMANDS:
            _fail(cfg, "command", f"unknown command {command!r}")
        if args.command and cfg.get("command") not in (None, args.command):
            _fail(cfg, "command", f"config command {cfg['command']!r} conflicts with {args.command!r}")
        out = Path(args.out or cfg.get("output") or "out")
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        if command == "validate":
            return cmd_validate(args, out if (args.out or cfg.get("output")) else None)
        if not args.config:
            raise ConfigError(f"<no config>:0: command {command!r} needs --config")
        cfg["command"] = command
        return HANDLERS[command](cfg, out, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        if "out" in locals():
            write_report(out, {"command": locals().get("command"), "verdict": False, "hypothesisFailure": str(exc)})
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        if "out" in locals():
            write_report(out, {"command": locals().get("command"), "verdict": False, "solverFailure": str(exc)})
        return 3


if __name__ == "__main__":
    sys.exit(main())
