"""Nonlinear conjugate gradient inside an augmented-Lagrangian loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernels import KernelSpec, as_points, positions
from .metric import EmmdObjective, Identity, ProjectionMap, SelectCoordinates
from .systems import ConstraintSet, DynamicsModel, RunningCost, Trajectory

log = logging.getLogger(__name__)

MIN_STEP = 1e-16


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iters: int = 20
    max_inner_iters: int = 500
    grad_tol: float = 1e-5
    constraint_tol: float = 1e-4
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.grad_tol, self.constraint_tol, self.penalty_init) <= 0:
            raise ValueError("tolerances and initial penalty must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")
        if not 0 < self.armijo_c1 < 0.5:
            raise ValueError("armijo_c1 must lie in (0, 0.5)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration limits must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> SolverOptions:
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NCGResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    status: str


def _line_search(fun, x, f, g, d, alpha, c1, shrink):
    """Armijo backtracking with optional expansion of an accepted first trial."""
    slope = float(g @ d)
    a = alpha
    while a >= MIN_STEP:
        fa, ga = fun(x + a * d)
        if np.isfinite(fa) and fa <= f + c1 * a * slope:
            break
        a *= shrink
    else:
        return None
    if a == alpha:
        for _ in range(20):
            a2 = a / shrink
            f2, g2 = fun(x + a2 * d)
            if not (np.isfinite(f2) and f2 <= f + c1 * a2 * slope and f2 < fa):
                break
            a, fa, ga = a2, f2, g2
    return a, fa, ga


def ncg_minimize(fun, x0, opts: SolverOptions | None = None, max_iters: int | None = None,
                 grad_tol: float | None = None) -> NCGResult:
    """Minimize ``fun(x) -> (value, gradient)`` with Polak-Ribiere+ conjugate gradients.

    Directions restart to steepest descent every ``len(x)`` steps and
    whenever the conjugate direction is not a descent direction.  The
    gradient norm is the max-norm.
    """
    opts = opts or SolverOptions()
    max_iters = opts.max_inner_iters if max_iters is None else max_iters
    grad_tol = opts.grad_tol if grad_tol is None else grad_tol
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective or gradient not finite at the starting point")
    d = -g
    alpha = 1.0 / max(np.linalg.norm(g), 1e-12)
    prev_slope = None
    since_restart = 0
    status = "max_iters"
    k = 0
    for k in range(max_iters):
        if np.max(np.abs(g)) <= grad_tol:
            status = "converged"
            break
        slope = float(g @ d)
        if slope >= 0 or since_restart >= len(x):
            d = -g
            slope = -float(g @ g)
            since_restart = 0
        if prev_slope is not None:
            alpha = min(alpha * prev_slope / slope, 1e10)
        found = _line_search(fun, x, f, g, d, alpha, opts.armijo_c1, opts.backtrack_factor)
        if found is None:
            if since_restart == 0:
                status = "stalled"
                break
            d = -g
            since_restart = 0
            prev_slope = None
            alpha = 1.0 / max(np.linalg.norm(g), 1e-12)
            continue
        alpha, f_new, g_new = found
        x = x + alpha * d
        beta = max(0.0, float(g_new @ (g_new - g)) / float(g @ g))
        prev_slope = slope
        f, g = f_new, g_new
        d = -g + beta * d
        since_restart += 1
    else:
        k = max_iters
        if np.max(np.abs(g)) <= grad_tol:
            status = "converged"
    return NCGResult(x, float(f), float(np.max(np.abs(g))), k, status)


@dataclass
class ProblemSpec:
    dynamics: DynamicsModel
    x0: np.ndarray
    horizon: int
    samples: object
    kernel: KernelSpec
    projection: ProjectionMap = field(default_factory=Identity)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    running_cost: RunningCost = field(default_factory=RunningCost)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(self.dynamics.state_dim)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self._metric = EmmdObjective(self.samples, self.kernel, self.projection)

    @property
    def metric(self) -> EmmdObjective:
        return self._metric

    def objective(self, X, U):
        e, gX = self._metric.value_and_grad(X)
        c = self.running_cost.value(X, U)
        cX, cU = self.running_cost.grad(X, U)
        return e + c, e, gX + cX, cU


@dataclass
class OptResult:
    trajectory: Trajectory
    objective: float
    emmd: float
    constraint_violation: float
    iterations: int
    converged: bool
    status: str
    history: list = field(default_factory=list)


def _violation(h1, h2) -> float:
    v = 0.0
    if len(h1):
        v = max(v, float(np.max(np.abs(h1))))
    if len(h2):
        v = max(v, float(np.max(h2)), 0.0)
    return v


@dataclass
class ALResult:
    x: np.ndarray
    value: float
    violation: float
    iterations: int
    converged: bool
    status: str
    history: list = field(default_factory=list)


def _no_constraints(z):
    return np.zeros(0), lambda w: np.zeros_like(z)


def augmented_lagrangian(fun, z0, eq=None, ineq=None, opts: SolverOptions | None = None,
                         record=None) -> ALResult:
    """Minimize ``fun(z) -> (f, grad)`` subject to ``h1(z) = 0`` and ``h2(z) <= 0``.

    ``eq`` and ``ineq`` map ``z`` to ``(residual, vjp)`` where ``vjp(w)``
    returns ``J^T w``.  Each outer iteration minimizes

        f + lam.h1 + rho/2 |h1|^2 + rho/2 |max(0, nu/rho + h2)|^2 - |nu|^2 / (2 rho)

    with conjugate gradients, then sets ``lam += rho h1``,
    ``nu = max(0, nu + rho h2)`` and grows ``rho`` when the violation did not
    at least halve.  ``record(z)`` may add fields to each history entry.
    """
    opts = opts or SolverOptions()
    eq = eq or _no_constraints
    ineq = ineq or _no_constraints
    z = np.array(z0, dtype=float)
    lam = np.zeros(len(eq(z)[0]))
    nu = np.zeros(len(ineq(z)[0]))
    rho = opts.penalty_init

    def lagrangian(z):
        f, g = fun(z)
        h1, vjp1 = eq(z)
        h2, vjp2 = ineq(z)
        shifted = np.maximum(0.0, nu / rho + h2)
        L = f + lam @ h1 + 0.5 * rho * (h1 @ h1) + 0.5 * rho * (shifted @ shifted) - (nu @ nu) / (2 * rho)
        if len(h1):
            g = g + vjp1(lam + rho * h1)
        if len(h2):
            g = g + vjp2(rho * shifted)
        return L, g

    history = []
    best = None
    total_iters = 0
    prev_viol = np.inf
    converged = False
    status = "max_outer_iters"
    for outer in range(opts.max_outer_iters):
        res = ncg_minimize(lagrangian, z, opts)
        z = res.x
        total_iters += res.iterations
        f = fun(z)[0]
        h1, h2 = eq(z)[0], ineq(z)[0]
        viol = _violation(h1, h2)
        grow = viol > 0.5 * prev_viol
        entry = {"outer": outer, "objective": float(f), "violation": viol, "penalty": rho,
                 "penalty_increased": bool(grow and rho < opts.penalty_max),
                 "inner_iters": res.iterations, "grad_norm": res.grad_norm}
        if record is not None:
            entry.update(record(z))
        history.append(entry)
        log.debug("outer %d: f=%.6g viol=%.3g rho=%.3g inner=%d (%s)",
                  outer, f, viol, rho, res.iterations, res.status)
        key = (0, f) if viol <= opts.constraint_tol else (1, viol)
        if best is None or key < best[0]:
            best = (key, z.copy(), float(f), viol)
        if viol <= opts.constraint_tol and res.grad_norm <= opts.grad_tol:
            converged = True
            status = "converged"
            best = (key, z.copy(), float(f), viol)
            break
        lam = lam + rho * h1
        nu = np.maximum(0.0, nu + rho * h2)
        if grow:
            rho = min(opts.penalty_growth * rho, opts.penalty_max)
        prev_viol = viol
    if not converged and best[3] > 10 * opts.constraint_tol and rho >= opts.penalty_max:
        status = "infeasible"
    _, z, f, viol = best
    return ALResult(z, f, viol, total_iters, converged, status, history)


def solve(problem: ProblemSpec, init: Trajectory, opts: SolverOptions | None = None) -> OptResult:
    """Optimize states and controls of ``problem`` starting from ``init``.

    Controls are optimized in units of ``dt * u`` so that dynamics residuals
    are well scaled, and the objective is multiplied by ``T`` so its per-state
    gradient does not vanish next to the penalty terms as the horizon grows.
    """
    opts = opts or SolverOptions()
    dyn = problem.dynamics
    T, n, m = init.horizon, dyn.state_dim, dyn.control_dim
    if T != problem.horizon or init.states.shape != (T, n) or init.controls.shape != (T, m):
        raise ValueError(f"initial trajectory must have shapes {(problem.horizon, n)} and {(problem.horizon, m)}")
    cs = problem.constraints
    scale = np.concatenate([np.ones(T * n), np.full(T * m, 1.0 / dyn.dt)])

    def unpack(zs):
        z = zs * scale
        return z[:T * n].reshape(T, n), z[T * n:].reshape(T, m)

    def flat(gX, gU):
        return np.concatenate([gX.ravel(), gU.ravel()]) * scale

    fscale = float(T)

    def fun(zs):
        X, U = unpack(zs)
        f, _, gX, gU = problem.objective(X, U)
        return fscale * f, fscale * flat(gX, gU)

    def eq(zs):
        X, U = unpack(zs)
        return cs.eq(X, U), lambda w: flat(*cs.eq_vjp(X, U, w))

    def ineq(zs):
        X, U = unpack(zs)
        return cs.ineq(X, U), lambda w: flat(*cs.ineq_vjp(X, U, w))

    def record(zs):
        X, U = unpack(zs)
        return {"objective": problem.objective(X, U)[0], "emmd": problem.metric.value(X)}

    z0 = np.concatenate([init.states.ravel(), init.controls.ravel()]) / scale
    res = augmented_lagrangian(fun, z0, eq, ineq, opts, record=record)
    X, U = unpack(res.x)
    return OptResult(Trajectory(X, U, dyn.dt), res.value / fscale, problem.metric.value(X), res.violation,
                     res.iterations, res.converged, res.status, res.history)


def _inverse_dynamics(dyn: DynamicsModel, X: np.ndarray) -> np.ndarray:
    A, B = dyn.matrices()
    U = np.zeros((len(X), dyn.control_dim))
    if len(X) > 1:
        U[:-1] = np.linalg.lstsq(B, (X[1:] - X[:-1] @ A.T).T, rcond=None)[0].T
    return U


def initialize_trajectory(problem: ProblemSpec, strategy: str = "hold", seed: int = 0) -> Trajectory:
    """Starting guess: ``hold``, ``line_to_centroid`` or ``perturbed``.

    ``line_to_centroid`` moves the coordinates seen by the projection toward
    the sample centroid; for projections that cannot be inverted it
    degrades to ``hold``.
    """
    dyn, T, x0 = problem.dynamics, problem.horizon, problem.x0
    X = np.tile(x0, (T, 1))
    U = np.zeros((T, dyn.control_dim))
    if strategy == "hold":
        pass
    elif strategy == "perturbed":
        X = X + 1e-2 * np.random.default_rng(seed).standard_normal(X.shape)
        X[0] = x0
    elif strategy == "line_to_centroid":
        g = problem.projection
        if isinstance(g, Identity):
            idx = list(range(dyn.state_dim))
        elif isinstance(g, SelectCoordinates):
            idx = g.indices
        else:
            idx = None
        if idx is not None and problem.kernel.space == "euclidean":
            pts = as_points(problem.kernel, positions(problem.metric.W))
            target = pts.mean(axis=0)
            s = np.linspace(0.0, 1.0, T)[:, None]
            X[:, idx] = x0[idx] + s * (target - x0[idx])
            if dyn.kind == "double_integrator":
                d = dyn.control_dim
                X[1:, d:] = np.diff(X[:, :d], axis=0) / dyn.dt
            U = _inverse_dynamics(dyn, X)
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    return Trajectory(X, U, dyn.dt)
