"""Command-line interface: ``emhvortex verify | futaki | solve``.

Config files are flat ``key = value`` text with dotted sections::

    config.N = 2
    config.ell = 1
    config.V = 16*pi
    grid.n_theta = 64
    solver.continuation_steps = 4
    seeds = 0, 1, 2
    tolerances.poincare_lelong = 1e-6

Exit codes: 0 success, 1 check failure, 2 config error, 3 obstruction,
4 Bradlow refusal.
"""

from __future__ import annotations

import argparse
import ast
import csv
import dataclasses
import json
import math
import operator
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .checks import DEFAULT_TOLERANCES, identity_checks
from .fields import VortexConfig
from .futaki import FutakiReport, invariance_report
from .grid import MIN_NODES, build_grid
from .solver import BradlowError, SolveOptions, radial_oracle, solve_coupled

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_OBSTRUCTED, EXIT_BRADLOW = 0, 1, 2, 3, 4
OUT_ENV = "EMHVORTEX_OUT"
DEFAULT_OUT = "emhvortex-out"
RADIAL_TOL = 1e-6


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


# -- safe arithmetic ------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def evaluate_number(text: str) -> float | int:
    """Evaluate arithmetic over numeric literals and ``pi``, e.g. ``16*pi``."""

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and type(node.value) in (int, float):
            return node.value
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](walk(node.operand))
        raise ConfigError(f"unsupported expression {text!r}")

    try:
        return walk(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot evaluate {text!r}: {exc}") from None


def _as_int(key: str, value) -> int:
    if isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return int(value)


# -- run configuration ------------------------------------------------------------

_SOLVER_FIELDS = {f.name: f.type for f in dataclasses.fields(SolveOptions)}
_INT_SOLVER = {"max_newton_iters", "continuation_steps"}


@dataclass(frozen=True)
class RunConfig:
    config: VortexConfig = field(default_factory=lambda: VortexConfig(2, 1, 1.0, 16 * math.pi))
    n_theta: int = 64
    n_phi: int = 64
    solver: SolveOptions = field(default_factory=SolveOptions)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    n_samples: int = 10

    def grid(self, V: float | None = None):
        return build_grid(self.n_theta, self.n_phi, self.config.V if V is None else V)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seeds=(seed,) + self.seeds[1:])

    def with_ell(self, ell: int) -> "RunConfig":
        c = self.config
        return dataclasses.replace(self, config=VortexConfig(c.N, ell, c.tau, c.V))


def parse_run_config(text: str) -> RunConfig:
    """Parse config text strictly; raises :class:`ConfigError` on any problem."""
    vortex = {"N": 2, "ell": 1, "tau": 1.0, "V": 16 * math.pi}
    grid = {"n_theta": 64, "n_phi": 64}
    solver: dict = {}
    tolerances: dict[str, float] = {}
    top: dict = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.rpartition(".")
        if section == "config" and name in ("N", "ell", "tau", "V", "a"):
            vortex[name] = evaluate_number(value)
        elif section == "grid" and name in grid:
            grid[name] = _as_int(key, evaluate_number(value))
        elif section == "solver" and name in _SOLVER_FIELDS:
            if name == "init_strategy":
                solver[name] = value.strip("'\"")
            elif name in _INT_SOLVER:
                solver[name] = _as_int(key, evaluate_number(value))
            else:
                solver[name] = float(evaluate_number(value))
        elif section == "tolerances":
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"line {lineno}: unknown tolerance {name!r}")
            tolerances[name] = float(evaluate_number(value))
        elif section == "futaki" and name == "n_samples":
            top["n_samples"] = _as_int(key, evaluate_number(value))
        elif section == "" and name == "seeds":
            top["seeds"] = tuple(_as_int(key, evaluate_number(s)) for s in value.split(",") if s.strip())
        elif section == "" and name == "output_dir":
            top["output_dir"] = value.strip("'\"")
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    for name in ("n_theta", "n_phi"):
        if grid[name] < MIN_NODES:
            raise ConfigError(f"grid.{name} = {grid[name]} is below the minimum {MIN_NODES}")
    if "seeds" in top and not top["seeds"]:
        raise ConfigError("seeds must list at least one integer")
    if top.get("n_samples", 10) < 2:
        raise ConfigError("futaki.n_samples must be at least 2")
    try:
        config = VortexConfig(
            _as_int("config.N", vortex["N"]),
            _as_int("config.ell", vortex["ell"]),
            float(vortex["tau"]),
            float(vortex["V"]),
            a=vortex.get("a"),
        )
        options = SolveOptions(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(config=config, solver=options, tolerances=tolerances, **grid, **top)


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_run_config(text)


# -- output -----------------------------------------------------------------------


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class Reporter:
    """Writes deterministic payload files plus a separate metadata file."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)

    def jsonl(self, name: str, records: list[dict]) -> Path:
        path = self.out_dir / name
        with path.open("w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
        return path

    def table(self, name: str, header: list[str], rows) -> Path:
        path = self.out_dir / name
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row] for row in rows)
        return path

    def metadata(self, command: str, run: RunConfig, argv: list[str]) -> Path:
        try:
            pkg_version = version("artifact")
        except PackageNotFoundError:
            pkg_version = "unknown"
        meta = {
            "command": command,
            "argv": argv,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "version": pkg_version,
            "numpy": np.__version__,
        }
        path = self.out_dir / "metadata.json"
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path


def _config_record(run: RunConfig) -> dict:
    c = run.config
    return {
        "N": c.N,
        "ell": c.ell,
        "tau": c.tau,
        "V": c.V,
        "a": c.a,
        "n_theta": run.n_theta,
        "n_phi": run.n_phi,
        "seeds": list(run.seeds),
    }


# -- commands -----------------------------------------------------------------------


def cmd_verify(run: RunConfig, out: Reporter) -> int:
    records = identity_checks(run.config, run.grid(), list(run.seeds), run.tolerances)
    out.jsonl("verify.jsonl", [r.to_record() for r in records])
    width = max(len(r.name) for r in records)
    for r in records:
        print(f"{r.status}  {r.name:<{width}}  residual={r.residual:.3e}  tol={r.tolerance:.3e}")
    failed = [r.name for r in records if not r.passed]
    print(f"{len(records) - len(failed)}/{len(records)} identities pass")
    return EXIT_FAIL if failed else EXIT_OK


def _futaki_rows(report: FutakiReport):
    return [(k, lbl, v.real, v.imag) for k, (lbl, v) in enumerate(report.samples)]


def cmd_futaki(run: RunConfig, out: Reporter, sweep: str | None = None) -> int:
    grid = run.grid()
    seed = run.seeds[0]
    if sweep is None:
        report = invariance_report(run.config, grid, run.n_samples, seed)
        out.jsonl("futaki.jsonl", [{"config": _config_record(run), **report.to_record()}])
        out.table("futaki_samples.csv", ["sample", "label", "re_F", "im_F"], _futaki_rows(report))
        print(f"{report.verdict}  Im F = {report.value.imag:.12g}  Re F = {report.value.real:.3g}")
        print(f"closed form {report.closed_form.imag:.12g}i  spread {report.max_spread:.3e}  tol {report.tol:.3e}")
        return EXIT_OK if report.passed else EXIT_FAIL

    records, rows, ok = [], [], True
    for ell in range(run.config.N + 1):
        sub = run.with_ell(ell)
        report = invariance_report(sub.config, grid, run.n_samples, seed)
        ok &= report.passed
        records.append({"config": _config_record(sub), **report.to_record()})
        rows.append((ell, run.config.N - 2 * ell, report.value.real, report.value.imag, report.closed_form.imag, report.verdict))
        print(f"ell={ell}  {report.verdict:<12}  Im F = {report.value.imag:.12g}")
    out.jsonl("futaki_sweep.jsonl", records)
    out.table("futaki_sweep.csv", ["ell", "N_minus_2ell", "re_F", "im_F", "im_closed_form", "verdict"], rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(run: RunConfig, out: Reporter) -> int:
    config = run.config
    grid = run.grid()
    try:
        result = solve_coupled(config, grid, run.solver)
    except BradlowError as exc:
        print(f"refused: Bradlow margin tau^2 V - 4 pi N = {exc.margin!r}")
        out.jsonl("solve.jsonl", [{"config": _config_record(run), "status": "bradlow_refusal", "margin": exc.margin}])
        return EXIT_BRADLOW

    expected = config.tau**2 * config.V - 4.0 * math.pi * config.N
    record = {
        "config": _config_record(run),
        "converged": result.converged,
        "iterations": result.iterations,
        "residual_1": result.residual_1,
        "residual_2": result.residual_2,
        "conserved_integral": result.conserved_integral,
        "conserved_integral_expected": expected,
        "futaki_at_solution": result.futaki_at_solution,
        "certificate": result.certificate,
        "message": result.message,
    }
    if result.converged and config.symmetric:
        f_r, eta_r = radial_oracle(config).sample(grid)
        diff = max(float(np.max(np.abs(result.f - f_r))), float(np.max(np.abs(result.eta - eta_r))))
        record["radial_oracle_sup_diff"] = diff
        record["radial_oracle_tol"] = RADIAL_TOL

    out.table("trace.csv", ["iteration", "residual_1", "residual_2"], result.trace)
    theta, phi = np.broadcast_arrays(grid.theta2d, grid.phi2d)
    out.table("fields.csv", ["theta", "phi", "f", "eta"], zip(theta.ravel(), phi.ravel(), result.f.ravel(), result.eta.ravel()))

    if result.converged:
        status, code = "converged", EXIT_OK
        if record.get("radial_oracle_sup_diff", 0.0) > RADIAL_TOL:
            status, code = "radial_mismatch", EXIT_FAIL
    elif result.certificate is not None:
        status, code = "obstructed", EXIT_OBSTRUCTED
    else:
        status, code = "not_converged", EXIT_FAIL
    record["status"] = status
    out.jsonl("solve.jsonl", [record])

    print(f"{status}: iterations={result.iterations} residual_1={result.residual_1:.3e} residual_2={result.residual_2:.3e}")
    print(f"conserved integral {result.conserved_integral:.12g} (expected {expected:.12g})")
    if result.certificate is not None:
        print(f"obstruction certificate F = {result.certificate.imag:.12g}i")
    if result.message and not result.converged:
        print(result.message)
    return code


# -- entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emhvortex", description="Vortices on the sphere: checks, Futaki invariants, solver.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("verify", "run the identity checks"),
        ("futaki", "evaluate the coupled Futaki invariant"),
        ("solve", "solve the coupled system"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, help="override the first seed")
        if name == "futaki":
            p.add_argument("--sweep", choices=["ell"], help="sweep ell = 0..N")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        run = load_run_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        run = run.with_seed(args.seed)

    out_dir = Path(args.out or run.output_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    reporter = Reporter(out_dir)
    reporter.metadata(args.command, run, argv)
    if args.command == "verify":
        return cmd_verify(run, reporter)
    if args.command == "futaki":
        return cmd_futaki(run, reporter, args.sweep)
    return cmd_solve(run, reporter)


if __name__ == "__main__":
    sys.exit(main())
