"""Dynamics, serial-chain kinematics, constraints and running costs.

Trajectories are transcribed directly: ``T`` states and ``T`` controls are
decision variables, and the dynamics enter as equality residuals
``x[t+1] - f(x[t], u[t])`` for ``t < T - 1``.  The last control never acts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie import Pose, so3_exp_batch

KINDS = ("single_integrator", "double_integrator", "joint_velocity_chain", "se3_twist_integrator")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    controls: np.ndarray
    dt: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.states, dtype=float))
        U = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if len(X) < 1 or len(U) != len(X):
            raise ValueError("need T >= 1 states and as many controls")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(U))):
            raise ValueError("trajectory must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", X)
        object.__setattr__(self, "controls", U)

    @property
    def horizon(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class DynamicsModel:
    """Linear discrete-time models ``x' = A x + B u``."""

    kind: str
    state_dim: int
    control_dim: int
    dt: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        n, m = self.state_dim, self.control_dim
        if self.kind == "double_integrator":
            ok = n == 2 * m
        elif self.kind == "se3_twist_integrator":
            ok = n == m == 6
        else:
            ok = n == m
        if not ok or m < 1:
            raise ValueError(f"inconsistent dims n={n}, m={m} for {self.kind}")

    @classmethod
    def create(cls, kind: str, dim: int, dt: float) -> DynamicsModel:
        """``dim`` is the configuration dimension (positions or joints)."""
        if kind == "double_integrator":
            return cls(kind, 2 * dim, dim, dt)
        if kind == "se3_twist_integrator":
            return cls(kind, 6, 6, dt)
        return cls(kind, dim, dim, dt)

    def matrices(self):
        n, m, dt = self.state_dim, self.control_dim, self.dt
        if self.kind == "double_integrator":
            # symplectic Euler: v' = v + dt u, p' = p + dt v'
            I = np.eye(m)
            A = np.block([[I, dt * I], [np.zeros((m, m)), I]])
            B = np.vstack([dt * dt * I, dt * I])
            return A, B
        return np.eye(n), dt * np.eye(n, m)


def step(model: DynamicsModel, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != model.state_dim or u.shape[-1] != model.control_dim:
        raise ValueError(f"expected state dim {model.state_dim} and control dim {model.control_dim}")
    A, B = model.matrices()
    if model.kind == "double_integrator":
        m = model.control_dim
        v = x[..., m:] + model.dt * u
        return np.concatenate([x[..., :m] + model.dt * v, v], axis=-1)
    return x @ A.T + u @ B.T


def rollout(model: DynamicsModel, x0, controls) -> Trajectory:
    """Apply ``step`` once per control; returns T+1 states.

    The control sequence is padded with a zero row so that states and
    controls have equal length.
    """
    U = np.atleast_2d(np.asarray(controls, dtype=float))
    X = [np.asarray(x0, dtype=float)]
    for u in U:
        X.append(step(model, X[-1], u))
    U = np.vstack([U, np.zeros((1, model.control_dim))])
    return Trajectory(np.array(X), U, model.dt)


# ---------------------------------------------------------------------------
# serial chains


@dataclass(frozen=True)
class SerialChain:
    """Revolute chain: ``prod_i Trans(offset_i) Rot(axis_i, q_i)`` then the tool offset."""

    axes: np.ndarray
    offsets: np.ndarray
    tool_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_limits: np.ndarray | None = None
    velocity_limits: np.ndarray | None = None
    name: str = "chain"

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float).reshape(-1, 3)
        offsets = np.asarray(self.offsets, dtype=float).reshape(len(axes), 3)
        if np.max(np.abs(np.linalg.norm(axes, axis=1) - 1.0)) > 1e-9:
            raise ValueError("joint axes must be unit vectors")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "tool_offset", np.asarray(self.tool_offset, dtype=float).reshape(3))
        if self.joint_limits is not None:
            lim = np.asarray(self.joint_limits, dtype=float).reshape(len(axes), 2)
            if np.any(lim[:, 0] >= lim[:, 1]):
                raise ValueError("joint limits need lo < hi")
            object.__setattr__(self, "joint_limits", lim)
        if self.velocity_limits is not None:
            vel = np.asarray(self.velocity_limits, dtype=float).reshape(len(axes))
            if np.any(vel <= 0):
                raise ValueError("velocity limits must be positive")
            object.__setattr__(self, "velocity_limits", vel)

    @property
    def dof(self) -> int:
        return len(self.axes)

    def reach(self) -> float:
        return float(np.linalg.norm(self.offsets, axis=1).sum() + np.linalg.norm(self.tool_offset))

    @classmethod
    def from_dict(cls, d: dict) -> SerialChain:
        return cls(axes=d["axes"], offsets=d["offsets"], tool_offset=d.get("tool_offset", [0, 0, 0]),
                   joint_limits=d.get("joint_limits"), velocity_limits=d.get("velocity_limits"),
                   name=d.get("name", "chain"))

    def to_dict(self) -> dict:
        out = {"name": self.name, "axes": self.axes.tolist(), "offsets": self.offsets.tolist(),
               "tool_offset": self.tool_offset.tolist()}
        if self.joint_limits is not None:
            out["joint_limits"] = self.joint_limits.tolist()
        if self.velocity_limits is not None:
            out["velocity_limits"] = self.velocity_limits.tolist()
        return out


def fk_frames(chain: SerialChain, Q):
    """Batched kinematics for joint vectors ``Q`` of shape (T, dof).

    Returns the end-effector transforms (T, 4, 4), the world joint axes
    (T, dof, 3) and the world joint origins (T, dof, 3).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    T = len(Q)
    R = np.broadcast_to(np.eye(3), (T, 3, 3)).copy()
    p = np.zeros((T, 3))
    axes = np.empty((T, chain.dof, 3))
    origins = np.empty((T, chain.dof, 3))
    for i in range(chain.dof):
        p = p + R @ chain.offsets[i]
        origins[:, i] = p
        axes[:, i] = R @ chain.axes[i]
        R = R @ so3_exp_batch(Q[:, i:i + 1] * chain.axes[i])
    p = p + R @ chain.tool_offset
    G = np.zeros((T, 4, 4))
    G[:, :3, :3] = R
    G[:, :3, 3] = p
    G[:, 3, 3] = 1.0
    return G, axes, origins


def forward_kinematics(chain: SerialChain, q) -> Pose:
    G, _, _ = fk_frames(chain, np.asarray(q, dtype=float)[None])
    return Pose.from_matrix(G[0])


def fk_position_jacobian(chain: SerialChain, Q) -> np.ndarray:
    """d(end-effector position)/dq, shape (T, 3, dof)."""
    G, axes, origins = fk_frames(chain, Q)
    return np.cross(axes, G[:, None, :3, 3] - origins).transpose(0, 2, 1)


def fk_body_jacobian(chain: SerialChain, Q) -> np.ndarray:
    """Jacobian into the right chart ``G exp(delta)``, shape (T, 6, dof)."""
    G, axes, origins = fk_frames(chain, Q)
    Rt = np.swapaxes(G[:, :3, :3], 1, 2)
    lin = np.cross(axes, G[:, None, :3, 3] - origins)
    ang_b = np.einsum("tij,tkj->tik", Rt, axes)
    lin_b = np.einsum("tij,tkj->tik", Rt, lin)
    return np.concatenate([ang_b, lin_b], axis=1)


def synthetic_arm() -> SerialChain:
    """A 7-joint arm with Panda-like proportions and limits.

    Synthetic: the geometry is plausible, not a calibrated robot model.
    """
    z, y = [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]
    return SerialChain(
        name="synthetic7",
        axes=[z, y, z, y, z, y, z],
        offsets=[[0, 0, 0.333], [0, 0, 0], [0, 0, 0.316], [0.0825, 0, 0],
                 [-0.0825, 0, 0.384], [0, 0, 0], [0.088, 0, 0]],
        tool_offset=[0.0, 0.0, -0.107],
        joint_limits=[[-2.8973, 2.8973], [-1.7628, 1.7628], [-2.8973, 2.8973], [-3.0718, -0.0698],
                      [-2.8973, 2.8973], [-0.0175, 3.7525], [-2.8973, 2.8973]],
        velocity_limits=[2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61],
    )


# ---------------------------------------------------------------------------
# constraints and costs


class DynamicsDefect:
    """Equality residuals ``x[t+1] - f(x[t], u[t])``, t = 0..T-2."""

    def __init__(self, model: DynamicsModel):
        self.model = model
        self.A, self.B = model.matrices()

    def residual(self, X, U):
        if len(X) < 2:
            return np.zeros(0)
        # same arithmetic as step(), so rollouts have exactly zero defects
        return (X[1:] - step(self.model, X[:-1], U[:-1])).ravel()

    def size(self, X, U):
        return max(len(X) - 1, 0) * X.shape[1]

    def vjp(self, X, U, w):
        gX, gU = np.zeros_like(X), np.zeros_like(U)
        if len(X) < 2:
            return gX, gU
        W = w.reshape(len(X) - 1, X.shape[1])
        gX[1:] += W
        gX[:-1] -= W @ self.A
        gU[:-1] -= W @ self.B
        return gX, gU


class FixedState:
    """Boundary condition ``x[index] = value`` (index -1 for the final state)."""

    def __init__(self, index: int, value):
        self.index = index
        self.value = np.asarray(value, dtype=float)

    def residual(self, X, U):
        return X[self.index] - self.value

    def size(self, X, U):
        return X.shape[1]

    def vjp(self, X, U, w):
        gX, gU = np.zeros_like(X), np.zeros_like(U)
        gX[self.index] += w
        return gX, gU


class BoxBound:
    """Inequalities ``v - hi <= 0`` and ``lo - v <= 0`` on states or controls.

    ``margin`` tightens both sides.  Infinite bounds are dropped.  A residual
    is positive exactly when the (tightened) limit is violated.
    """

    def __init__(self, target: str, lo, hi, margin: float = 0.0, active_rows=None):
        if target not in ("state", "control"):
            raise ValueError("target must be 'state' or 'control'")
        self.target = target
        self.lo = np.asarray(lo, dtype=float) + margin
        self.hi = np.asarray(hi, dtype=float) - margin
        self.active_rows = active_rows

    def _rows(self, V):
        return V if self.active_rows is None else V[self.active_rows]

    def residual(self, X, U):
        V = self._rows(X if self.target == "state" else U)
        lo = np.broadcast_to(self.lo, V.shape)
        hi = np.broadcast_to(self.hi, V.shape)
        up = np.where(np.isfinite(hi), V - hi, -np.inf)
        down = np.where(np.isfinite(lo), lo - V, -np.inf)
        r = np.stack([up, down], axis=-1).ravel()
        return r[np.isfinite(r)]

    def _mask(self, V):
        lo = np.broadcast_to(self.lo, V.shape)
        hi = np.broadcast_to(self.hi, V.shape)
        return np.stack([np.isfinite(hi), np.isfinite(lo)], axis=-1).ravel()

    def size(self, X, U):
        return int(self._mask(self._rows(X if self.target == "state" else U)).sum())

    def vjp(self, X, U, w):
        gX, gU = np.zeros_like(X), np.zeros_like(U)
        V = self._rows(X if self.target == "state" else U)
        mask = self._mask(V)
        full = np.zeros(mask.shape)
        full[mask] = w
        full = full.reshape(V.shape + (2,))
        g = full[..., 0] - full[..., 1]
        target = gX if self.target == "state" else gU
        if self.active_rows is None:
            target += g
        else:
            target[self.active_rows] += g
        return gX, gU


@dataclass
class ConstraintSet:
    equalities: list = field(default_factory=list)
    inequalities: list = field(default_factory=list)

    @staticmethod
    def _stack(items, X, U):
        if not items:
            return np.zeros(0)
        return np.concatenate([c.residual(X, U) for c in items])

    @staticmethod
    def _vjp(items, X, U, w):
        gX, gU = np.zeros_like(X), np.zeros_like(U)
        k = 0
        for c in items:
            n = c.size(X, U)
            a, b = c.vjp(X, U, w[k:k + n])
            gX += a
            gU += b
            k += n
        return gX, gU

    def eq(self, X, U):
        return self._stack(self.equalities, X, U)

    def ineq(self, X, U):
        return self._stack(self.inequalities, X, U)

    def eq_vjp(self, X, U, w):
        return self._vjp(self.equalities, X, U, w)

    def ineq_vjp(self, X, U, w):
        return self._vjp(self.inequalities, X, U, w)


def evaluate_constraints(cs: ConstraintSet, traj: Trajectory):
    """(equality residuals, inequality residuals); inequality > 0 means violated."""
    return cs.eq(traj.states, traj.controls), cs.ineq(traj.states, traj.controls)


def standard_constraints(model: DynamicsModel, x0=None, control_bounds=None, state_bounds=None,
                         final_state=None, margin: float = 0.0) -> ConstraintSet:
    """Dynamics defects, boundary conditions and box limits.

    Bounds are ``(lo, hi)`` pairs of scalars or per-coordinate arrays.
    """
    cs = ConstraintSet(equalities=[DynamicsDefect(model)])
    if x0 is not None:
        cs.equalities.append(FixedState(0, x0))
    if final_state is not None:
        cs.equalities.append(FixedState(-1, final_state))
    if control_bounds is not None:
        # the last control never acts on the state
        cs.inequalities.append(BoxBound("control", *control_bounds, margin=margin,
                                        active_rows=slice(0, -1)))
    if state_bounds is not None:
        cs.inequalities.append(BoxBound("state", *state_bounds, margin=margin))
    return cs


def smoothness_cost(states, weight: float = 1.0) -> float:
    X = np.asarray(states, dtype=float)
    return float(weight * np.sum(np.diff(X, axis=0) ** 2))


def smoothness_grad(states, weight: float = 1.0) -> np.ndarray:
    X = np.asarray(states, dtype=float)
    d = np.diff(X, axis=0)
    g = np.zeros_like(X)
    g[1:] += 2.0 * weight * d
    g[:-1] -= 2.0 * weight * d
    return g


@dataclass(frozen=True)
class RunningCost:
    """``control_weight * sum ||u_t||^2 + smoothness_weight * sum ||x_{t+1} - x_t||^2``."""

    control_weight: float = 0.0
    smoothness_weight: float = 0.0

    def value(self, X, U) -> float:
        v = self.control_weight * float(np.sum(U[:-1] ** 2)) if len(U) > 1 else 0.0
        if self.smoothness_weight and len(X) > 1:
            v += smoothness_cost(X, self.smoothness_weight)
        return v

    def grad(self, X, U):
        gU = np.zeros_like(U)
        gU[:-1] = 2.0 * self.control_weight * U[:-1]
        gX = smoothness_grad(X, self.smoothness_weight) if self.smoothness_weight and len(X) > 1 \
            else np.zeros_like(X)
        return gX, gU
