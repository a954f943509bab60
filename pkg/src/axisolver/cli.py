"""Command-line front end.

Four subcommands sharing one configuration schema (see :mod:`.config`):

``poisson``
    Direct separable solve of the constant-coefficient operator; writes the
    solution panel and a residual report.
``elliptic``
    Preconditioned iterative solve with variable coefficients; writes the
    solution panel, a per-iteration log, and a summary report.
``acoustic``
    Spectral-time wave run; writes seismogram traces, an optional field
    snapshot, and a work/accounting report.
``bench``
    Distributed tridiagonal solves swept over rank counts; writes measured
    counters (sim) or wall times with speedups (threads) next to the
    closed-form cost-model predictions.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.

Under the ``sim`` executor every subcommand is deterministic: identical
configuration yields byte-identical artifacts (the per-iteration seconds
column is fixed at zero there; wall-clock numbers appear only under
``threads``).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from typing import Callable, Dict, List, Optional

import numpy as np

from .acoustic import (LaguerreParams, MediumModel, Wavelet,
                       harmonic_operator, solve_all_harmonics, reconstruct,
                       write_seismogram, write_snapshot)
from .comm import CommWorld
from .config import DEFAULTS, RunConfig, load_config
from .dichotomy import (Partition, build_plan, predict_time_cyclic,
                        predict_time_dichotomy, solve_many)
from .elliptic import (CoefficientFields, Grid2D, assemble,
                       manufactured_problem, read_field_text,
                       sampler_from_field, write_field_raw)
from .errors import (ConfigError, DimensionMismatch, DomainError, SolverError)
from .iterative import chebyshev_solve, estimate_bounds, pcg_solve
from .sov import SovPreconditioner
from .tridiag import TridiagonalMatrix

__all__ = ["main", "cmd_poisson", "cmd_elliptic", "cmd_acoustic", "cmd_bench"]


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _outdir(cfg: RunConfig) -> str:
    path = cfg.get("output", "dir")
    if not path:
        raise ConfigError("[output] dir must be non-empty")
    os.makedirs(path, exist_ok=True)
    return path


def _echo_config(cfg: RunConfig, outdir: str) -> None:
    with open(os.path.join(outdir, "effective.cfg"), "w",
              encoding="ascii") as fh:
        fh.write(cfg.effective_text())


def _build_grid(cfg: RunConfig) -> Grid2D:
    return Grid2D(cfg.get_int("grid", "nr"), cfg.get_int("grid", "nz"),
                  cfg.get_float("grid", "rmax"), cfg.get_float("grid", "zmax"))


def _build_medium(cfg: RunConfig) -> MediumModel:
    kind = cfg.get_choice("model", "kind", {"homogeneous", "fault"})
    rho = cfg.get_float("model", "rho")
    if kind == "homogeneous":
        return MediumModel.homogeneous(cfg.get_float("model", "speed"),
                                       rho=rho)
    return MediumModel.fault(
        cfg.get_float("model", "v_top"), cfg.get_float("model", "v_bottom"),
        interface_z=cfg.get_float("model", "interface_z"),
        throw=cfg.get_float("model", "throw"),
        fault_r=cfg.get_float("model", "fault_r"),
        dip=cfg.get_float("model", "dip"), rho=rho)


def _field_sampler(path: str, grid: Grid2D, *, exact_grid: bool) -> Callable:
    """Continuum sampler backed by a full-node text panel.

    ``exact_grid`` demands that the file's grid equal the run grid (nodal
    data); otherwise the panel is resampled bilinearly, so one coefficient
    file can serve a whole refinement sweep.
    """
    file_grid, values = read_field_text(path)
    if exact_grid and file_grid != grid:
        raise DimensionMismatch(
            f"{path}: file grid {file_grid.nr}x{file_grid.nz} does not match "
            f"run grid {grid.nr}x{grid.nz}")
    return sampler_from_field(file_grid, values)


def _write_solution(outdir: str, grid: Grid2D, interior: np.ndarray) -> None:
    full = np.concatenate([interior, np.zeros((grid.nz, 1))], axis=1)
    write_field_raw(os.path.join(outdir, "solution.raw"), grid, full)


def _write_report(outdir: str, lines: List[str]) -> None:
    with open(os.path.join(outdir, "report.txt"), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_iteration_log(outdir: str, history, seconds: List[float]) -> None:
    rows = ["iter, relres, seconds"]
    for (it, relres), sec in zip(history, seconds):
        rows.append(f"{it}, {relres!r}, {sec:.6f}")
    with open(os.path.join(outdir, "iterations.csv"), "w",
              encoding="ascii") as fh:
        fh.write("\n".join(rows) + "\n")


def _relative_residual(op, x: np.ndarray, rhs: np.ndarray) -> float:
    norm = float(np.linalg.norm(rhs))
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(op.apply_spd(x) - rhs)) / norm


# ---------------------------------------------------------------------------
# poisson: direct separable solve
# ---------------------------------------------------------------------------


def _source_callable(cfg: RunConfig, grid: Grid2D, kind: str):
    """Continuum source for the ``uniform`` and ``file`` rhs kinds."""
    if kind == "uniform":
        value = cfg.get_float("rhs", "value")
        return lambda r, z: np.full(np.shape(r), value)
    return _field_sampler(cfg.get("rhs", "path"), grid, exact_grid=True)


def cmd_poisson(cfg: RunConfig) -> int:
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    grid = _build_grid(cfg)
    kappa0 = cfg.get_float("model", "kappa0")
    q0 = cfg.get_float("model", "q0")
    if kappa0 <= 0.0 or q0 < 0.0:
        raise ConfigError(f"[model] needs kappa0 > 0 and q0 >= 0, "
                          f"got {kappa0}/{q0}")
    fields = CoefficientFields.from_samplers(
        lambda r, z: np.broadcast_to(kappa0, np.shape(r)),
        lambda r, z: np.broadcast_to(q0, np.shape(r)), grid)

    rhs_kind = cfg.get_choice("rhs", "kind",
                              {"manufactured", "zero", "uniform", "file"})
    if rhs_kind in ("uniform", "file"):
        op = assemble(grid, fields, _source_callable(cfg, grid, rhs_kind))
        rhs = op.rhs
    else:
        op = assemble(grid, fields)
        if rhs_kind == "zero":
            rhs = np.zeros(grid.unknown_shape)
        else:
            R, Z = grid.node_mesh()
            target = (np.cos(0.5 * np.pi * R / grid.rmax)
                      * np.cos(np.pi * Z / grid.zmax))
            rhs = op.apply_spd(target)

    pre = SovPreconditioner.from_operator(
        op, ranks=cfg.get_int("solver", "ranks"),
        executor=cfg.get_choice("solver", "executor", {"sim", "threads"}))
    x = pre.apply_inverse(rhs)
    relres = _relative_residual(op, x, rhs)

    _write_solution(outdir, grid, x)
    _write_report(outdir, [
        "command = poisson",
        "method = separable-direct",
        f"relative_residual = {relres!r}",
        "binv_applications = 1",
        f"operator_checksum = {op.checksum()}",
    ])
    return 0


# ---------------------------------------------------------------------------
# elliptic: preconditioned iterative solve
# ---------------------------------------------------------------------------


def _elliptic_fields(cfg: RunConfig, grid: Grid2D) -> CoefficientFields:
    kind = cfg.get_choice("model", "kind", {"constant", "files"})
    if kind == "constant":
        kappa0 = cfg.get_float("model", "kappa0")
        q0 = cfg.get_float("model", "q0")
        return CoefficientFields.from_samplers(
            lambda r, z: np.broadcast_to(kappa0, np.shape(r)),
            lambda r, z: np.broadcast_to(q0, np.shape(r)), grid)
    kappa_path = cfg.get("model", "kappa_file")
    if not kappa_path:
        raise ConfigError("[model] kind = files needs kappa_file")
    kappa = _field_sampler(kappa_path, grid, exact_grid=False)
    reaction_path = cfg.get("model", "reaction_file")
    if reaction_path:
        reaction = _field_sampler(reaction_path, grid, exact_grid=False)
    else:
        reaction = lambda r, z: np.zeros(np.shape(r))
    return CoefficientFields.from_samplers(kappa, reaction, grid)


def cmd_elliptic(cfg: RunConfig) -> int:
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    grid = _build_grid(cfg)
    fields = _elliptic_fields(cfg, grid)

    rhs_kind = cfg.get_choice("rhs", "kind",
                              {"manufactured", "zero", "uniform", "file"})
    if rhs_kind == "manufactured":
        exact = (lambda r, z: np.cos(0.5 * np.pi * r / grid.rmax)
                 * np.cos(np.pi * z / grid.zmax))
        op, rhs, _ = manufactured_problem(grid, exact, fields)
    else:
        if rhs_kind == "zero":
            source = lambda r, z: np.zeros(np.shape(r))
        elif rhs_kind == "uniform":
            value = cfg.get_float("rhs", "value")
            source = lambda r, z: np.full(np.shape(r), value)
        else:
            source = _field_sampler(cfg.get("rhs", "path"), grid,
                                    exact_grid=True)
        op = assemble(grid, fields, source)
        rhs = op.rhs

    executor = cfg.get_choice("solver", "executor", {"sim", "threads"})
    pre = SovPreconditioner.from_operator(
        op, ranks=cfg.get_int("solver", "ranks"), executor=executor)
    tol = cfg.get_float("solver", "tol")
    maxiter = cfg.get_int("solver", "maxiter")
    method = cfg.get_choice("solver", "method", {"pcg", "chebyshev"})

    seconds: List[float] = []
    started = time.perf_counter()
    timed = executor == "threads"

    def trace(_it, _x, _relres):
        seconds.append(time.perf_counter() - started if timed else 0.0)

    if method == "pcg":
        x, report = pcg_solve(op.apply_spd, pre.apply_inverse, rhs,
                              tol=tol, maxiter=maxiter, trace=trace)
    else:
        bounds = estimate_bounds(op.apply_spd, pre.apply_inverse,
                                 rhs.size, steps=40)
        x, report = chebyshev_solve(op.apply_spd, pre.apply_inverse, rhs,
                                    bounds, tol=tol, maxiter=maxiter,
                                    trace=trace)
    x = x.reshape(grid.unknown_shape)

    _write_solution(outdir, grid, x)
    seconds += [0.0] * (len(report.history) - len(seconds))
    _write_iteration_log(outdir, report.history, seconds)
    _write_report(outdir, [
        "command = elliptic",
        f"method = {method}",
        f"iterations = {report.iterations}",
        f"relative_residual = {report.final_relres!r}",
        f"binv_applications = {report.binv_applications}",
        f"converged = {report.converged}",
        f"operator_checksum = {op.checksum()}",
    ])
    return 0


# ---------------------------------------------------------------------------
# acoustic: spectral-time wave run
# ---------------------------------------------------------------------------


def cmd_acoustic(cfg: RunConfig) -> int:
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    grid = _build_grid(cfg)
    model = _build_medium(cfg)
    params = LaguerreParams(h=cfg.get_float("laguerre", "h"),
                            alpha=cfg.get_int("laguerre", "alpha"),
                            n_terms=cfg.get_int("laguerre", "n_terms"))
    wavelet = Wavelet(f0=cfg.get_float("source", "f0"),
                      t0=cfg.get_float("source", "t0"),
                      gamma=cfg.get_float("source", "gamma"),
                      amplitude=cfg.get_float("source", "amplitude"))

    series = solve_all_harmonics(
        grid, model, params, wavelet,
        source=(cfg.get_float("source", "r"), cfg.get_float("source", "z")),
        method=cfg.get_choice("solver", "method", {"pcg", "chebyshev"}),
        tol=cfg.get_float("solver", "tol"),
        maxiter=cfg.get_int("solver", "maxiter"),
        ranks=cfg.get_int("solver", "ranks"),
        executor=cfg.get_choice("solver", "executor", {"sim", "threads"}))

    times = cfg.receiver_times()
    points = cfg.receiver_points()
    traces = reconstruct(series, times, points)
    write_seismogram(os.path.join(outdir, "seismograms.csv"), times, traces)

    snap_raw = cfg.get("snapshot", "t")
    if snap_raw:
        try:
            t_snap = float(snap_raw)
        except ValueError as exc:
            raise ConfigError(f"[snapshot] t = {snap_raw!r} is not a number") \
                from exc
        write_snapshot(os.path.join(outdir, "snapshot.raw"), series, t_snap)

    _write_report(outdir, [
        "command = acoustic",
        f"harmonics = {params.n_terms}",
        f"binv_applications = {series.binv_applications}",
        f"iterations_total = {sum(series.iterations)}",
        f"tail_energy_ratio = {series.tail_energy_ratio()!r}",
        f"operator_checksum = {series.operator_checksum}",
    ])
    return 0


# ---------------------------------------------------------------------------
# bench: distributed tridiagonal sweep
# ---------------------------------------------------------------------------


def _bench_system(n: int, seed: int) -> TridiagonalMatrix:
    rng = np.random.default_rng(seed)
    lower = rng.uniform(0.2, 1.0, n - 1)
    upper = rng.uniform(0.2, 1.0, n - 1)
    row_sums = np.zeros(n)
    row_sums[1:] += lower
    row_sums[:-1] += upper
    diag = row_sums + rng.uniform(0.25, 1.0, n)
    return TridiagonalMatrix(diag, upper, lower)


def _bench_once(matrix: TridiagonalMatrix, batch: np.ndarray, p: int,
                executor: str):
    """One sweep entry: returns (tree_depth, stats, wall_seconds)."""
    world = CommWorld(p)
    plan = build_plan(matrix, Partition.balanced(matrix.n, p), world)
    t0 = time.perf_counter()
    solve_many(plan, batch, executor=executor)
    wall = time.perf_counter() - t0
    return plan.depth, world.stats_snapshot(), wall


def cmd_bench(cfg: RunConfig) -> int:
    outdir = _outdir(cfg)
    _echo_config(cfg, outdir)
    executor = cfg.get_choice("solver", "executor", {"sim", "threads"})
    ranks = cfg.bench_ranks()
    n = cfg.get_int("bench", "n")
    batch = cfg.get_int("bench", "batch")
    repeats = cfg.get_int("bench", "repeats")
    if n < 8 or batch < 1 or repeats < 1:
        raise ConfigError(f"[bench] needs n >= 8, batch >= 1, repeats >= 1; "
                          f"got {n}/{batch}/{repeats}")
    alpha = cfg.get_float("bench", "alpha")
    beta = cfg.get_float("bench", "beta")
    gamma = cfg.get_float("bench", "gamma")
    matrix = _bench_system(n, cfg.get_int("bench", "seed"))
    rng = np.random.default_rng(cfg.get_int("bench", "seed") + 1)
    B = rng.standard_normal((n, batch))

    def models(p: int):
        if p >= 2 and (p & (p - 1)) == 0:
            return (repr(predict_time_dichotomy(p, batch, alpha, beta, gamma)),
                    repr(predict_time_cyclic(p, batch, alpha, beta, gamma)))
        return "nan", "nan"

    rows = []
    if executor == "sim":
        rows.append("p, levels, messages, scalars, "
                    "t_model_dichotomy, t_model_cyclic")
        for p in ranks:
            depth, stats, _ = _bench_once(matrix, B, p, "sim")
            t_dich, t_cyc = models(p)
            rows.append(f"{p}, {depth}, {stats.total_msgs()}, "
                        f"{stats.total_scalars()}, {t_dich}, {t_cyc}")
            stats.write_csv(os.path.join(outdir, f"comm_p{p}.csv"))
    else:
        rows.append("p, seconds, speedup, t_model_dichotomy, t_model_cyclic")
        walls: Dict[int, float] = {}
        for p in ranks:
            best = math.inf
            for _ in range(repeats):
                _, _, wall = _bench_once(matrix, B, p, "threads")
                best = min(best, wall)
            walls[p] = best
        p0 = ranks[0]
        for p in ranks:
            # speedup normalized by the baseline rank count: equals the
            # plain wall-time ratio when the sweep starts at p = 1
            speedup = p0 * walls[p0] / walls[p]
            t_dich, t_cyc = models(p)
            rows.append(f"{p}, {walls[p]:.6f}, {speedup:.4f}, "
                        f"{t_dich}, {t_cyc}")

    with open(os.path.join(outdir, "bench.csv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(rows) + "\n")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "poisson": cmd_poisson,
    "elliptic": cmd_elliptic,
    "acoustic": cmd_acoustic,
    "bench": cmd_bench,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axisolver",
        description="Axisymmetric elliptic and acoustic solver toolkit.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="key = value configuration file")
        p.add_argument("--ranks", type=int, default=None, metavar="P",
                       help="rank count for the distributed solves")
        p.add_argument("--executor", choices=("sim", "threads"), default=None,
                       help="communication backend")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="output directory")
        p.add_argument("--tol", type=float, default=None, metavar="X",
                       help="outer solve tolerance")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        "solver": {
            "ranks": None if args.ranks is None else str(args.ranks),
            "executor": args.executor,
            "tol": None if args.tol is None else repr(args.tol),
        },
        "output": {"dir": args.out},
    }
    if args.ranks is not None:
        overrides["bench"] = {"ranks": str(args.ranks)}
    try:
        cfg = load_config(args.subcommand, args.config, overrides)
        return _COMMANDS[args.subcommand](cfg)
    except (ConfigError, DomainError, DimensionMismatch) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
