"""Command line entry point: ``ergmmd run|bench|samples``.

Exit codes: 0 converged, 2 finished without convergence (outputs still
written), 1 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .domain import MeshParseError, PathologicalDensityError, write_samples_csv
from .evaluation import (BENCH_HEADER, CoverageReport, coverage_percent, scaling_benchmark,
                         trajectory_length)
from .kernels import DegenerateDomainError, positions
from .metric import mmd_empirical, sample_constant_term
from .optimizer import initialize_trajectory, solve
from .scenario import ConfigError, build_samples, build_scenario, effective_seed, load_config

log = logging.getLogger("ergmmd")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def trajectory_rows(traj, projected) -> tuple[list[str], list[list]]:
    n, m = traj.states.shape[1], traj.controls.shape[1]
    header = ["t"] + [f"x_{i}" for i in range(n)] + [f"u_{i}" for i in range(m)] + ["gx", "gy", "gz"]
    P = positions(projected)
    P = np.column_stack([P, np.zeros((len(P), 3 - P.shape[1]))])[:, :3]
    rows = [[t] + [repr(float(v)) for v in np.concatenate([traj.states[t], traj.controls[t], P[t]])]
            for t in range(traj.horizon)]
    return header, rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_scenario(config_path, out_dir=None, seed: int | None = None) -> int:
    """Sample, optimize, evaluate and write outputs for one scenario file."""
    cfg = load_config(config_path)
    seed = effective_seed(cfg, seed)
    sc = build_scenario(cfg, seed)
    out = Path(out_dir) if out_dir is not None else sc.output_dir
    if not out.is_absolute() and out_dir is None:
        out = Path(config_path).resolve().parent / out
    out.mkdir(parents=True, exist_ok=True)

    p = sc.problem
    log.info("samples=%d bandwidth=%.6g horizon=%d", len(p.metric.W), p.kernel.bandwidth, p.horizon)
    init = initialize_trajectory(p, sc.init_strategy, seed)
    t0 = time.perf_counter()
    res = solve(p, init, sc.solver)
    wall = time.perf_counter() - t0
    traj = res.trajectory
    Y = p.projection(traj.states)
    emmd_init = p.metric.value(init.states)
    report = CoverageReport(
        coverage_percent=coverage_percent(Y, p.metric.W, sc.coverage_radius),
        emmd_final=res.emmd,
        emmd_initial=emmd_init,
        mmd_squared=res.emmd + sample_constant_term(p.metric.W, p.kernel),
        trajectory_length=trajectory_length(Y),
        wall_time=wall,
        coverage_radius=sc.coverage_radius,
    )
    header, rows = trajectory_rows(traj, Y)
    _write_csv(out / "trajectory.csv", header, rows)
    doc = report.to_dict()
    doc.update(
        seed=seed,
        converged=res.converged,
        status=res.status,
        iterations=res.iterations,
        constraint_violation=res.constraint_violation,
        objective=res.objective,
        bandwidth=p.kernel.bandwidth,
        num_samples=len(p.metric.W),
        history=res.history,
        config=cfg,
    )
    with open(out / "report.json", "w") as fh:
        json.dump(_to_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if sc.plot:
        from .plotting import plot_coverage
        plot_coverage(positions(sc.samples.points), positions(Y), out / "plot.svg",
                      title=f"coverage {report.coverage_percent:.1f}%")
    log.info("status=%s coverage=%.2f%% emmd %.6g -> %.6g", res.status, report.coverage_percent,
             emmd_init, res.emmd)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def run_bench(dims, horizons, sample_counts, repeats: int, seed: int, out_path, plot_path=None) -> list[dict]:
    rows = scaling_benchmark(dims, horizons, sample_counts, repeats=repeats, seed=seed)
    _write_csv(out_path, BENCH_HEADER,
               [[r["dim"], r["T"], r["M"], repr(r["median_seconds"]), repr(r["iqr_seconds"])] for r in rows])
    if plot_path:
        from .plotting import plot_benchmark
        plot_benchmark(rows, plot_path)
    return rows


def export_samples(config_path, out_path, seed: int | None = None) -> int:
    cfg = load_config(config_path)
    samples = build_samples(cfg, effective_seed(cfg, seed))
    write_samples_csv(samples, out_path)
    return len(samples)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ergmmd", description="Ergodic coverage trajectories via kernel MMD.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="optimize a scenario")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.directory)")
    r.add_argument("--seed", type=int)
    r.add_argument("-v", "--verbose", action="store_true")
    b = sub.add_parser("bench", help="time metric evaluation")
    b.add_argument("--dims", type=int, nargs="+", default=[2])
    b.add_argument("--horizons", type=int, nargs="+", default=[64, 128, 256])
    b.add_argument("--samples", type=int, nargs="+", default=[64])
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="bench.csv")
    b.add_argument("--plot", help="optional SVG path")
    s = sub.add_parser("samples", help="export the sample set a scenario would use")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return run_scenario(args.config, args.out, args.seed)
        if args.command == "bench":
            run_bench(args.dims, args.horizons, args.samples, args.repeats, args.seed, args.out, args.plot)
            return EXIT_OK
        export_samples(args.config, args.out, args.seed)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except MeshParseError as exc:
        print(f"error: domain.mesh: {exc}", file=sys.stderr)
    except (PathologicalDensityError, DegenerateDomainError) as exc:
        print(f"error: domain: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
