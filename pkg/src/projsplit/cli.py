"""Command-line entry point.

    projsplit run --config cfg.json [--tol R] [--max-iters N] [--no-assertions]
    projsplit validate --config cfg.json
    projsplit certify --config cfg.json --point point.json [--tol R]
    projsplit suite

Exit codes: 0 converged / valid / certified / all criteria pass,
1 configuration error, 2 iteration limit reached, 3 solver failure,
4 certificate or acceptance failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .engine import RunResult, StoppingRule, run
from .errors import ConfigError, OracleFailure, SolverFailure
from .hilbert import BlockPoint
from .problems import ProblemInstance, certify_solution, instance_from_config, reference_solve
from .stepper import StepConfig

log = logging.getLogger("projsplit")

EXIT_OK, EXIT_CONFIG, EXIT_MAX_ITERS, EXIT_SOLVER, EXIT_CHECK = 0, 1, 2, 3, 4
SUMMARY_CERT_TOL = 1e-6
BLOCK_COLUMNS = ("rho", "xres", "yres", "delta", "branch", "inner")


@dataclass
class RunConfig:
    problem: ProblemInstance
    solver: StepConfig
    stopping: StoppingRule
    trace_path: Optional[str] = None
    summary_path: Optional[str] = None
    assertions: bool = True
    seed: int = 0
    init: Optional[BlockPoint] = None
    flip_delta_sign: bool = False


def config_schema() -> dict:
    return json.loads(resources.files("projsplit").joinpath("config_schema.json").read_text("utf-8"))


def _schema_error(err: jsonschema.ValidationError) -> ConfigError:
    where = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return ConfigError(f"{where}: {err.message}")


def config_from_dict(raw: dict) -> RunConfig:
    """Validate against the schema, then build and re-validate every part."""
    try:
        jsonschema.validate(raw, config_schema())
    except jsonschema.ValidationError as err:
        raise _schema_error(err) from None

    seed = int(raw.get("seed", 0))
    pcfg = dict(raw["problem"])
    if pcfg.get("catalog") in ("random_l1_logistic", "l1_logistic"):
        pcfg.setdefault("seed", seed)
    problem = instance_from_config(pcfg)

    solver_raw = dict(raw.get("solver", {}))
    if "rho" in solver_raw:
        solver_raw["rho"] = tuple(solver_raw["rho"])
    solver = StepConfig(**solver_raw)
    if len(solver.rho) > problem.spec.n:
        raise ConfigError(f"solver.rho has {len(solver.rho)} entries for {problem.spec.n} blocks")
    for i, b in enumerate(problem.spec.blocks):
        if not b.in_smooth_set:
            solver.block_rho(b, i)  # raises when an explicit rho breaks its upper bound

    st = raw.get("stopping", {})
    stopping = StoppingRule(tol=float(st.get("tol", 1e-7)), max_iters=int(st.get("max_iters", 10000)))
    out = raw.get("output", {})
    init = None
    if "init" in raw:
        init = BlockPoint.from_json(raw["init"])
    return RunConfig(problem, solver, stopping, out.get("trace_path"), out.get("summary_path"),
                     bool(raw.get("assertions", True)), seed, init,
                     bool(raw.get("debug", {}).get("flip_delta_sign", False)))


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    return config_from_dict(raw)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % x


def write_trace(path, result: RunResult, n_blocks: int):
    header = ["k", "phi", "pi", "alpha", "residual"]
    header += [f"{c}_{i + 1}" for i in range(n_blocks) for c in BLOCK_COLUMNS]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rec in result.trace:
            row = [rec.k, rec.phi, rec.pi, rec.alpha, rec.residual]
            for b in rec.blocks:
                row += [b.rho, b.xres, b.yres, b.delta, b.branch, b.inner]
            w.writerow([_fmt(v) for v in row])


def _rho_stats(result: RunResult, n_blocks: int):
    out = []
    for i in range(n_blocks):
        rhos = [rec.blocks[i].rho for rec in result.trace]
        if rhos:
            out.append({"min": min(rhos), "max": max(rhos), "mean": float(np.mean(rhos))})
        else:
            out.append(None)
    return out


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_summary(path, summary: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_command(cfg: RunConfig) -> int:
    inst = cfg.problem
    n = inst.spec.n
    reference = None
    try:
        reference = reference_solve(inst)
    except OracleFailure as err:
        log.warning("no reference solution: %s", err)

    summary = {"problem": inst.name, "seed": cfg.seed, "n_blocks": n, "dim": inst.spec.dim}
    try:
        result = run(inst.spec, cfg.solver, cfg.init, cfg.stopping, reference=reference,
                     assertions=cfg.assertions, flip_delta_sign=cfg.flip_delta_sign)
    except SolverFailure as err:
        msg = f"{type(err).__name__}: {err}"
        print(f"solver failure: {msg}", file=sys.stderr)
        summary.update(status="failed", error=msg, block=err.block, iteration=err.iteration)
        if cfg.summary_path:
            write_summary(cfg.summary_path, summary)
        return EXIT_SOLVER

    ok, residuals = certify_solution(inst, result.final, SUMMARY_CERT_TOL)
    summary.update(
        status=result.status, iterations=result.iterations, residual=result.residual,
        final=result.final.to_json(), rho=_rho_stats(result, n),
        max_psi_evaluations=result.max_evaluations, max_psi_eval_bound=result.max_eval_bound,
        min_slack=result.min_slack,
        certificate={"ok": ok, "tol": SUMMARY_CERT_TOL, "residuals": residuals},
    )
    if reference is not None:
        summary["distance_to_reference"] = float(np.linalg.norm(result.final.z - reference.z))
    if cfg.trace_path:
        write_trace(cfg.trace_path, result, n)
    if cfg.summary_path:
        write_summary(cfg.summary_path, summary)
    print(f"{inst.name}: {result.status} after {result.iterations} iterations, "
          f"residual {result.residual:.3e}, certificate {'ok' if ok else 'FAILED'}")
    return EXIT_OK if result.converged else EXIT_MAX_ITERS


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.tol is not None or args.max_iters is not None:
        cfg.stopping = StoppingRule(cfg.stopping.tol if args.tol is None else args.tol,
                                    cfg.stopping.max_iters if args.max_iters is None else args.max_iters)
    if args.no_assertions:
        cfg.assertions = False
    if args.trace:
        cfg.trace_path = args.trace
    if args.summary:
        cfg.summary_path = args.summary
    return run_command(cfg)


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.problem.spec
    print(f"config ok: problem {cfg.problem.name}, {spec.n} blocks, dimension {spec.dim}")
    return EXIT_OK


def _cmd_certify(args) -> int:
    cfg = load_config(args.config)
    try:
        with open(args.point, encoding="utf-8") as fh:
            point = BlockPoint.from_json(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
        raise ConfigError(f"cannot read point {args.point}: {err}") from None
    ok, residuals = certify_solution(cfg.problem, point, args.tol)
    for i, r in enumerate(residuals):
        print(f"block {i + 1}: residual {r:.3e}")
    print("certified" if ok else "NOT certified", f"(tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_CHECK


def _cmd_suite(args) -> int:
    from .acceptance import run_all

    results = run_all()
    passed = sum(c.passed for c in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projsplit", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve the configured problem")
    r.add_argument("--config", required=True)
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--no-assertions", action="store_true")
    r.add_argument("--trace", help="override output.trace_path")
    r.add_argument("--summary", help="override output.summary_path")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a config without running")
    v.add_argument("--config", required=True)
    v.set_defaults(func=_cmd_validate)

    c = sub.add_parser("certify", help="check a point against the configured problem")
    c.add_argument("--config", required=True)
    c.add_argument("--point", required=True)
    c.add_argument("--tol", type=float, default=SUMMARY_CERT_TOL)
    c.set_defaults(func=_cmd_certify)

    s = sub.add_parser("suite", help="run the acceptance criteria")
    s.set_defaults(func=_cmd_suite)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
