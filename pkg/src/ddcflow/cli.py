"""Command line entry points.

``ddc converge --config <file>`` runs the refinement sweep of the
manufactured problem and writes the error/rate table; ``ddc run
--config <file>`` time-integrates one configuration, writing per-step
diagnostics and optional VTK snapshots.  Exit codes: 0 success, 2
configuration error, 3 solver failure.

Sweep levels are independent; the ``DDC_THREADS`` environment variable
caps how many worker processes run them concurrently (default 1).
Outputs are merged in level order, so concurrent and sequential runs
produce identical files.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import ErrorAccumulator, RateTable, StabilityMonitor
from .config import ConfigError, RunConfig, config_echo, load_config
from .linsolve import SolverError
from .mesh import build_rectangle_mesh, build_step_channel_mesh
from .problems import ManufacturedProblem, StepChannelProblem
from .spaces import ScalarSpace, TaylorHoodSpace
from .stepping import DDCStepper, SchemeError, SchemeParams
from . import analysis
from .vtkio import write_vtk_solution

__all__ = ["main", "cmd_converge", "cmd_run"]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _git_commit() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _build_problem(cfg: RunConfig):
    if cfg.problem == "manufactured":
        return ManufacturedProblem(cfg.nu)
    return StepChannelProblem(cfg.nu)


def _scheme_params(cfg: RunConfig, level: int) -> SchemeParams:
    dt = cfg.dt_for_level(level)
    return SchemeParams(
        nu=cfg.nu,
        k=dt,
        T=cfg.T,
        av=cfg.av_for_dt(dt),
        predictor=cfg.predictor,
        picard_tol=cfg.picard_tol,
        picard_max=cfg.picard_max,
        defect_term_form=cfg.defect_term_form,
    )


def _build_mesh(cfg: RunConfig, level: int):
    if cfg.problem == "manufactured":
        return build_rectangle_mesh(0.0, 0.0, 1.0, 1.0, level, level)
    return build_step_channel_mesh(1.0 / level)


class _ErrorObserver:
    """Accumulates space-time errors of both steps against the exact flow."""

    def __init__(self, problem, th, k):
        self.problem = problem
        self.vspace = th.velocity
        self.acc = ErrorAccumulator(k)

    def __call__(self, step, t, state, info):
        e1 = analysis.step_error(
            self.problem.velocity, self.problem.velocity_gradient, t,
            state.u1_np1, self.vspace,
        )
        e2 = analysis.step_error(
            self.problem.velocity, self.problem.velocity_gradient, t,
            state.u2_np1, self.vspace,
        )
        info["e1_l2"], info["e1_h1"] = e1
        info["e2_l2"], info["e2_h1"] = e2
        self.acc.add_step(e1[0], e1[1], e2[0], e2[1])


def run_convergence_level(cfg: RunConfig, level: int) -> dict:
    """Run one refinement level of the manufactured sweep."""
    mesh = _build_mesh(cfg, level)
    th = TaylorHoodSpace(mesh)
    problem = _build_problem(cfg)
    params = _scheme_params(cfg, level)
    stepper = DDCStepper(th, params, problem, large_scale=ScalarSpace(mesh, 1))
    errors = _ErrorObserver(problem, th, params.k)
    stability = StabilityMonitor(stepper, problem)
    records, _ = stepper.advance([errors, stability])
    e1_l2, e1_h1, e2_l2, e2_h1 = errors.acc.finalize()
    return {
        "inv_h": level,
        "e1_l2": e1_l2,
        "e1_h1": e1_h1,
        "e2_l2": e2_l2,
        "e2_h1": e2_h1,
        "min_slack": stability.min_slack,
        "bounded": stability.bounded(),
        "max_div_residual": max(
            max(r["div_residual_u1"], r["div_residual_u2"]) for r in records
        ),
    }


def _worker_count(n_jobs: int) -> int:
    raw = os.environ.get("DDC_THREADS", "1")
    try:
        cap = max(1, int(raw))
    except ValueError:
        cap = 1
    return min(cap, n_jobs)


def cmd_converge(cfg: RunConfig) -> Path:
    """Refinement sweep producing the error/convergence-rate table."""
    if cfg.problem != "manufactured":
        raise ConfigError("converge requires the manufactured problem")
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    rows = []
    failure = None
    workers = _worker_count(len(cfg.levels))
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(run_convergence_level, cfg, lv) for lv in cfg.levels
                ]
                rows = [f.result() for f in futures]
        else:
            for lv in cfg.levels:
                rows.append(run_convergence_level(cfg, lv))
    except (SolverError, SchemeError) as exc:
        failure = exc

    table = RateTable()
    for row in rows:
        table.add_level(row["inv_h"], row["e1_l2"], row["e1_h1"],
                        row["e2_l2"], row["e2_h1"])
    csv_path = outdir / "rates.csv"
    lines = [f"# {line}" for line in config_echo(cfg)] + table.csv_lines()
    if failure is not None:
        lines.append(f"# incomplete: {failure}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if failure is not None:
        raise failure

    elapsed = time.perf_counter() - start
    report = (
        [f"commit = {_git_commit()}", f"wall_seconds = {elapsed:.3f}"]
        + config_echo(cfg)
        + table.csv_lines()
    )
    (outdir / "report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    return csv_path


def cmd_run(cfg: RunConfig) -> Path:
    """Single time integration with diagnostics and snapshots."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()

    level = cfg.levels[0]
    mesh = _build_mesh(cfg, level)
    th = TaylorHoodSpace(mesh)
    problem = _build_problem(cfg)
    params = _scheme_params(cfg, level)
    stepper = DDCStepper(th, params, problem, large_scale=ScalarSpace(mesh, 1))
    stability = StabilityMonitor(stepper, problem)
    observers = [stability]
    errors = None
    if cfg.problem == "manufactured":
        errors = _ErrorObserver(problem, th, params.k)
        observers.insert(0, errors)

    snap_dir = outdir / "snapshots"
    if cfg.snapshot_every > 0:
        snap_dir.mkdir(exist_ok=True)

        def snapshot(step, t, state, info):
            if (step + 1) % cfg.snapshot_every != 0:
                return
            n = mesh.n_nodes
            vel = np.column_stack(
                [state.u2_np1[:n], state.u2_np1[th.velocity.n_scalar : th.velocity.n_scalar + n]]
            )
            write_vtk_solution(
                snap_dir / f"step_{step + 1:06d}.vtk", mesh, vel, state.p2_np1,
                title=f"t = {_fmt(t)}",
            )

        observers.append(snapshot)

    records, _ = stepper.advance(observers)

    diag_path = outdir / "diagnostics.csv"
    lines = [f"# {line}" for line in config_echo(cfg)]
    lines.append(
        "t,kinetic_energy,dissipation,div_residual,picard_iterations,stability_slack"
    )
    for rec in records:
        iters = rec["picard_predictor"].iterations + rec["picard_corrector"].iterations
        lines.append(
            ",".join(
                [
                    _fmt(rec["t"]),
                    _fmt(rec["kinetic_energy"]),
                    _fmt(rec["dissipation"]),
                    _fmt(rec["div_residual_u2"]),
                    str(iters),
                    _fmt(rec["stability_slack"]),
                ]
            )
        )
    diag_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    if errors is not None:
        e1_l2, e1_h1, e2_l2, e2_h1 = errors.acc.finalize()
        table = RateTable()
        table.add_level(level, e1_l2, e1_h1, e2_l2, e2_h1)
        rlines = [f"# {line}" for line in config_echo(cfg)] + table.csv_lines()
        (outdir / "rates.csv").write_text("\n".join(rlines) + "\n", encoding="utf-8")

    elapsed = time.perf_counter() - start
    report = [f"commit = {_git_commit()}", f"wall_seconds = {elapsed:.3f}"] + config_echo(cfg)
    (outdir / "report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    return diag_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ddc",
        description="Defect-deferred correction solver for 2D incompressible flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("converge", "run the manufactured-solution refinement sweep"),
        ("run", "time-integrate one configuration with diagnostics"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a key = value config file")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.command == "converge":
            cmd_converge(cfg)
        else:
            cmd_run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, SchemeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
