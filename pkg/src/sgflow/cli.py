"""Command-line interface: solve, sweep and check subcommands.

Every run writes plot-ready CSV matrices (one row per y index), an
iteration log, a JSON manifest with config echo and artifact checksums,
and for Ginzburg-Landau problems a |u| density map plus a vortex report.
Identical configs (seed included) produce byte-identical CSV artifacts;
floats are printed with 17 significant digits so values round-trip
exactly.

Configuration comes from flags, from a `key = value` file via --config,
or both (flags win). Sweeps fan out one run per field value with seed
policy `seed + index` and may execute in parallel; the SGFLOW_THREADS
environment variable caps the worker count.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, backend
from .checks import run_checks
from .errors import SgflowError
from .flow import FlowConfig, FlowTrace, run_flow
from .ginzburg_landau import (
    GLConfig,
    count_vortices,
    gl_initialize,
    gl_system,
    order_parameter_modulus,
)
from .grid import Grid2D
from .residuals import model_problem_exponential, model_problem_linear_poisson

PROBLEMS = ("gl", "exp1d", "poisson2d")

_DIRECTION_ALIASES = {
    "lm": "lm_primal",
    "gn": "gauss_newton",
}

# flag-free defaults per problem
_PROBLEM_DEFAULTS = {
    "gl": dict(nx=48, ny=48, lx=4.0, ly=4.0),
    "exp1d": dict(nx=65, ny=1, lx=1.0, ly=1.0),
    "poisson2d": dict(nx=9, ny=9, lx=1.0, ly=1.0),
}


@dataclass
class RunConfig:
    """Everything one run needs; round-trips through the config file."""

    problem: str = "gl"
    nx: int = 48
    ny: int = 48
    lx: float = 4.0
    ly: float = 4.0
    kappa: float = 4.0
    h0: float = 4.0
    seed: int = 0
    init: str = "seeded-noise"
    noise_amplitude: float = 0.1
    direction: str = "lm"
    lambda0: float = 1.0
    max_iter: int = 5000
    grad_tol: float = 1e-8
    stall_tol: float = 1e-10
    cg_tol: float = 1e-10
    out: str = "sgflow-out"

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.problem == "exp1d" and self.ny != 1:
            raise ValueError("exp1d is one-dimensional; use ny = 1")
        if self.problem in ("gl", "poisson2d") and self.ny < 2:
            raise ValueError(f"{self.problem} needs a 2D grid (ny >= 2)")


_FLOAT_FIELDS = {
    f.name for f in dataclasses.fields(RunConfig) if f.type == "float"
}
_INT_FIELDS = {f.name for f in dataclasses.fields(RunConfig) if f.type == "int"}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {_fmt(v) if f.name in _FLOAT_FIELDS else v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> RunConfig:
    """Parse a `key = value` config document (lines; # starts a comment)."""
    values = {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in names:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in _FLOAT_FIELDS:
            values[key] = float(val)
        elif key in _INT_FIELDS:
            values[key] = int(val)
        else:
            values[key] = val
    return RunConfig(**values)


def _config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = parse_config(Path(args.config).read_text())
    else:
        cfg = RunConfig()
        if args.problem is not None:
            cfg.problem = args.problem
        for key, val in _PROBLEM_DEFAULTS[cfg.problem].items():
            setattr(cfg, key, val)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    cfg.validate()
    return cfg


def build_problem(cfg: RunConfig):
    """(system, grid, initial state, nodal field names) for a run config."""
    grid = Grid2D(cfg.nx, cfg.ny, cfg.lx, cfg.ly)
    if cfg.problem == "gl":
        gl_cfg = GLConfig(
            kappa=cfg.kappa,
            h0=cfg.h0,
            lx=cfg.lx,
            ly=cfg.ly,
            init=cfg.init,
            seed=cfg.seed,
            noise_amplitude=cfg.noise_amplitude,
        )
        return gl_system(gl_cfg), grid, gl_initialize(gl_cfg, grid), ("r", "s", "a", "b")
    if cfg.problem == "exp1d":
        return model_problem_exponential(), grid, np.ones(grid.n_nodes), ("u",)
    return (
        model_problem_linear_poisson(1.0, 0.0, grid),
        grid,
        np.zeros(grid.n_nodes),
        ("u",),
    )


def flow_config(cfg: RunConfig) -> FlowConfig:
    return FlowConfig(
        direction=_DIRECTION_ALIASES.get(cfg.direction, cfg.direction),
        lambda0=cfg.lambda0,
        max_iterations=cfg.max_iter,
        grad_tol=cfg.grad_tol,
        energy_stall_tol=cfg.stall_tol,
        cg_tol=cfg.cg_tol,
    )


def _write_text(path: Path, text: str):
    path.write_text(text)


def _matrix_csv(values: np.ndarray, ny: int, nx: int) -> str:
    rows = values.reshape(ny, nx)
    return "\n".join(",".join(_fmt(v) for v in row) for row in rows) + "\n"


def _iterations_csv(trace: FlowTrace) -> str:
    lines = ["iteration,energy,grad_norm,lambda,accepted,cg_iters"]
    for r in trace.records:
        lines.append(
            f"{r.iteration},{_fmt(r.energy)},{_fmt(r.grad_norm)},{_fmt(r.lam)},"
            f"{int(r.accepted)},{r.cg_iterations}"
        )
    return "\n".join(lines) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_one(cfg: RunConfig, out_dir: Path) -> dict:
    """Execute one flow and write all artifacts; returns the manifest dict."""
    cfg.validate()
    out_dir.mkdir(parents=True, exist_ok=True)
    system, grid, u0, field_names = build_problem(cfg)
    started = time.perf_counter()
    error = None
    trace = None
    try:
        trace = run_flow(system, grid, u0, flow_config(cfg))
    except SgflowError as exc:
        error = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - started

    artifacts: list[Path] = []

    def emit(name: str, text: str):
        path = out_dir / name
        _write_text(path, text)
        artifacts.append(path)

    emit("config.txt", serialize_config(cfg))
    vortex_report = None
    if trace is not None:
        nn = grid.n_nodes
        for i, name in enumerate(field_names):
            emit(
                f"field_{name}.csv",
                _matrix_csv(trace.final_u[i * nn : (i + 1) * nn], grid.ny, grid.nx),
            )
        if cfg.problem == "gl":
            emit(
                "density.csv",
                _matrix_csv(order_parameter_modulus(grid, trace.final_u), grid.ny, grid.nx),
            )
            vortex_report = count_vortices(grid, trace.final_u)
            emit(
                "vortices.json",
                json.dumps(vortex_report.to_dict(), indent=2, sort_keys=True) + "\n",
            )
        emit("iterations.csv", _iterations_csv(trace))

    manifest = {
        "config": dataclasses.asdict(cfg),
        "termination": trace.termination if trace is not None else error,
        "ok": error is None,
        "final_energy": trace.final_energy if trace is not None else None,
        "iterations": len(trace.records) if trace is not None else 0,
        "accepted_iterations": trace.n_accepted if trace is not None else 0,
        "wall_time_s": wall,
        "backend": backend.active_name(),
        "version": __version__,
        "artifacts": [
            {"name": p.name, "sha256": _sha256(p)} for p in sorted(artifacts)
        ],
    }
    if vortex_report is not None:
        manifest["vortex_count"] = vortex_report.count
        manifest["total_winding"] = vortex_report.total_winding
    _write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _max_workers(n_tasks: int) -> int:
    cap = os.environ.get("SGFLOW_THREADS", "").strip()
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_tasks, limit))


def cmd_solve(args) -> int:
    try:
        cfg = _config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest = run_one(cfg, Path(cfg.out))
    print(
        f"[{cfg.problem}] termination={manifest['termination']} "
        f"energy={manifest['final_energy']} iterations={manifest['iterations']} "
        f"-> {cfg.out}"
    )
    return 0 if manifest["ok"] else 1


def cmd_sweep(args) -> int:
    try:
        cfg = _config_from_args(args)
        h0_values = [float(tok) for tok in args.h0_list.split(",") if tok.strip()]
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not h0_values:
        print("error: --h0 needs at least one value", file=sys.stderr)
        return 2
    if cfg.problem != "gl":
        print("error: sweep supports the gl problem only", file=sys.stderr)
        return 2

    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    tasks = []
    for index, h0 in enumerate(h0_values):
        sub = dataclasses.replace(
            cfg, h0=h0, seed=cfg.seed + index, out=str(root / f"h0_{_fmt(h0)}")
        )
        tasks.append(sub)

    workers = _max_workers(len(tasks))
    if workers == 1:
        manifests = [run_one(sub, Path(sub.out)) for sub in tasks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            manifests = list(
                pool.map(lambda sub: run_one(sub, Path(sub.out)), tasks)
            )

    lines = ["h0,final_energy,iterations,vortex_count,total_winding"]
    for h0, man in zip(h0_values, manifests):
        if man["ok"]:
            lines.append(
                f"{_fmt(h0)},{_fmt(man['final_energy'])},{man['iterations']},"
                f"{man['vortex_count']},{man['total_winding']}"
            )
        else:
            lines.append(f"{_fmt(h0)},nan,0,-1,0")
        print(
            f"h0={h0}: {'ok' if man['ok'] else 'FAILED'} "
            f"termination={man['termination']} vortices={man.get('vortex_count')}"
        )
    _write_text(root / "summary.csv", "\n".join(lines) + "\n")
    return 0 if any(m["ok"] for m in manifests) else 1


def cmd_check(args) -> int:
    results = run_checks(name_filter=args.filter, inject_fault=args.inject_fault)
    if not results:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return 2
    width = max(len(r.name) for r in results)
    failures = []
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        if not r.passed:
            failures.append(r.name)
    if failures:
        print(f"{len(failures)} check(s) failed: {', '.join(failures)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _add_run_flags(p: argparse.ArgumentParser, require_problem: bool):
    p.add_argument(
        "--problem", choices=PROBLEMS, required=require_problem, default=None
    )
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--lx", type=float)
    p.add_argument("--ly", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=("uniform", "gauged", "seeded-noise"))
    p.add_argument("--noise-amplitude", dest="noise_amplitude", type=float)
    p.add_argument(
        "--direction",
        choices=("sobolev", "lm", "gn", "euclidean", "lm_primal", "lm_dual", "gauss_newton"),
    )
    p.add_argument("--lambda0", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--grad-tol", dest="grad_tol", type=float)
    p.add_argument("--stall-tol", dest="stall_tol", type=float)
    p.add_argument("--cg-tol", dest="cg_tol", type=float)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgflow",
        description=(
            "Descent flows for first-order least-squares PDE systems "
            "(Sobolev gradient / damped metric), with a Ginzburg-Landau application."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one descent flow and write artifacts")
    _add_run_flags(p_solve, require_problem=True)
    p_solve.add_argument("--h0", type=float)
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="one run per external-field value")
    _add_run_flags(p_sweep, require_problem=True)
    p_sweep.add_argument(
        "--h0", dest="h0_list", required=True, help="comma-separated field values"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("check", help="run the self-verification battery")
    p_check.add_argument("--filter", help="run only checks whose name contains this")
    p_check.add_argument(
        "--inject-fault", choices=("jacobian",), help=argparse.SUPPRESS
    )
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
