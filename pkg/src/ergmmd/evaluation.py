"""Coverage reporting, baseline planners and timing benchmarks."""

from __future__ import annotations

import itertools
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from threadpoolctl import threadpool_limits

from .kernels import RBF, KernelSpec, as_points, gram, positions
from .metric import EmmdObjective, Identity, ProjectionMap
from .systems import BoxBound, Trajectory, step


@dataclass
class CoverageReport:
    coverage_percent: float
    emmd_final: float
    emmd_initial: float
    mmd_squared: float
    trajectory_length: float
    wall_time: float
    coverage_radius: float

    def to_dict(self) -> dict:
        return asdict(self)


def _projected(traj, g: ProjectionMap | None):
    X = traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    if g is not None:
        X = g(X)
    return positions(X)


def coverage_percent(traj, samples, radius: float, g: ProjectionMap | None = None) -> float:
    """Percent of samples within ``radius`` of some projected trajectory point.

    Poses are compared by translation.  Pass ``g=None`` when ``traj`` already
    holds domain points.
    """
    if not radius > 0:
        raise ValueError("coverage radius must be positive")
    Y = _projected(traj, g)
    S = positions(getattr(samples, "points", samples))
    if len(Y) == 0 or len(S) == 0:
        raise ValueError("coverage needs a nonempty trajectory and sample set")
    if Y.shape[1] != S.shape[1]:
        raise ValueError(f"trajectory dim {Y.shape[1]} does not match sample dim {S.shape[1]}")
    dist, _ = cKDTree(Y).query(S, k=1)
    return 100.0 * float(np.mean(dist <= radius))


def trajectory_length(traj, g: ProjectionMap | None = None) -> float:
    Y = _projected(traj, g)
    return float(np.linalg.norm(np.diff(Y, axis=0), axis=1).sum())


def tsp_nearest_neighbor(points, start_index: int = 0) -> np.ndarray:
    """Greedy nearest-neighbour visiting order; ties go to the lowest index."""
    P = positions(getattr(points, "points", points))
    n = len(P)
    if n < 2:
        raise ValueError("need at least two points")
    visited = np.zeros(n, dtype=bool)
    order = [start_index]
    visited[start_index] = True
    cur = start_index
    for _ in range(n - 1):
        d = np.linalg.norm(P - P[cur], axis=1)
        d[visited] = np.inf
        cur = int(np.argmin(d))
        visited[cur] = True
        order.append(cur)
    return np.array(order)


def path_length(points, order) -> float:
    """Length of the open path through ``points`` in ``order``."""
    P = positions(getattr(points, "points", points))[np.asarray(order)]
    return float(np.linalg.norm(np.diff(P, axis=0), axis=1).sum())


def _bounds_from(problem, target):
    for c in problem.constraints.inequalities:
        if isinstance(c, BoxBound) and c.target == target:
            return c.lo, c.hi
    return None


def greedy_mmd_controller(problem, x0, T: int, levels: int | None = None,
                          control_bounds=None, state_bounds=None) -> Trajectory:
    """One-step-lookahead baseline on the same metric.

    Controls come from a ``levels``-per-axis grid over the control box (taken
    from the problem's control BoxBound unless given).  Each step keeps the
    candidate whose appended state gives the lowest metric for the trajectory
    so far; candidates leaving the state box are skipped.
    """
    dyn = problem.dynamics
    m = dyn.control_dim
    control_bounds = control_bounds or _bounds_from(problem, "control")
    if control_bounds is None:
        raise ValueError("greedy controller needs control bounds")
    state_bounds = state_bounds or _bounds_from(problem, "state")
    if levels is None:
        levels = 5 if m <= 3 else 3
    lo = np.broadcast_to(np.asarray(control_bounds[0], dtype=float), (m,))
    hi = np.broadcast_to(np.asarray(control_bounds[1], dtype=float), (m,))
    axes = [np.unique(np.linspace(a, b, levels)) for a, b in zip(lo, hi)]
    cands = np.array(list(itertools.product(*axes)))
    spec = problem.kernel
    g = problem.projection
    W = problem.metric.W
    M = len(W)

    x = np.asarray(x0, dtype=float)
    X = [x]
    Y = as_points(spec, g(x[None]))
    pair_sum = float(gram(spec, Y, Y).sum())
    cross_sum = float(gram(spec, Y, W).sum())
    for t in range(1, T):
        nxt = step(dyn, np.broadcast_to(x, (len(cands), len(x))), cands)
        ok = np.ones(len(cands), dtype=bool)
        if state_bounds is not None:
            ok &= np.all((nxt >= state_bounds[0]) & (nxt <= state_bounds[1]), axis=1)
        if not ok.any():
            ok[:] = True
        Yc = as_points(spec, g(nxt))
        to_traj = gram(spec, Yc, Y).sum(axis=1)
        to_samples = gram(spec, Yc, W).sum(axis=1)
        n = t + 1
        cost = (pair_sum + 2 * to_traj + 1.0) / n ** 2 - 2 * (cross_sum + to_samples) / (n * M)
        cost[~ok] = np.inf
        best = int(np.argmin(cost))
        x = nxt[best]
        X.append(x)
        pair_sum += 2 * to_traj[best] + 1.0
        cross_sum += to_samples[best]
        Y = np.concatenate([Y, Yc[best:best + 1]])
    X = np.array(X)
    A, B = dyn.matrices()
    U = np.zeros((T, m))
    if T > 1:
        U[:-1] = np.linalg.lstsq(B, (X[1:] - X[:-1] @ A.T).T, rcond=None)[0].T
    return Trajectory(X, U, dyn.dt)


BENCH_HEADER = ["dim", "T", "M", "median_seconds", "iqr_seconds"]


def scaling_benchmark(dims, horizons, sample_counts, repeats: int = 3, seed: int = 0,
                      bandwidth: float = 0.2) -> list[dict]:
    """Median wall time of one metric value+gradient evaluation per (dim, T, M)."""
    if min(min(dims), min(horizons), min(sample_counts), repeats) < 1:
        raise ValueError("benchmark sizes must be >= 1")
    rng = np.random.default_rng(seed)
    spec = KernelSpec(RBF, bandwidth)
    rows = []
    with threadpool_limits(limits=1):
        for d, T, M in itertools.product(dims, horizons, sample_counts):
            X = rng.random((T, d))
            obj = EmmdObjective(rng.random((M, d)), spec, Identity())
            obj.value_and_grad(X)
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                obj.value_and_grad(X)
                times.append(time.perf_counter() - t0)
            q1, med, q3 = np.percentile(times, [25, 50, 75])
            rows.append({"dim": d, "T": T, "M": M, "median_seconds": float(med),
                         "iqr_seconds": float(q3 - q1)})
    return rows


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
