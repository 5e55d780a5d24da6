"""Ergodic MMD metric between a trajectory and domain samples.

For trajectory states ``x_t`` projected to ``y_t = g(x_t)`` and samples
``w_j``::

    E(x) = 1/T^2 sum_{t,t'} k(y_t, y_t') - 2/(T M) sum_{t,j} k(y_t, w_j)

Diagonal pairs are included (V-statistic), so ``E + c >= 0`` where ``c`` is
the sample-only mean of ``k(w_j, w_j')``.
"""

from __future__ import annotations

import numpy as np

from .kernels import RBF, KernelSpec, as_points, gram, weighted_grad_sum
from .lie import se3_exp_batch, se3_inverse_batch, se3_log_batch
from .systems import SerialChain, Trajectory, fk_body_jacobian, fk_frames, fk_position_jacobian

# bounds the size of Gram blocks materialized at once
_BLOCK = 2048


class ProjectionMap:
    """Maps a (T, n) state array into the kernel's domain.

    ``space`` is ``"euclidean"`` or ``"se3"``.  ``vjp`` pulls per-point
    domain gradients (Euclidean gradients, or right-chart tangent vectors
    for SE(3)) back to state space.
    """

    kind = "abstract"
    space = "euclidean"

    def __call__(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, X: np.ndarray, G: np.ndarray) -> np.ndarray:
        return np.einsum("tdn,td->tn", self.jacobian(X), G)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class Identity(ProjectionMap):
    kind = "identity"

    def __call__(self, X):
        return np.asarray(X, dtype=float)

    def jacobian(self, X):
        T, n = np.shape(X)
        return np.broadcast_to(np.eye(n), (T, n, n))

    def vjp(self, X, G):
        return np.asarray(G, dtype=float)


class SelectCoordinates(ProjectionMap):
    kind = "select_coordinates"

    def __init__(self, indices):
        self.indices = list(indices)

    def __call__(self, X):
        return np.asarray(X, dtype=float)[:, self.indices]

    def jacobian(self, X):
        T, n = np.shape(X)
        return np.broadcast_to(np.eye(n)[self.indices], (T, len(self.indices), n))

    def vjp(self, X, G):
        out = np.zeros(np.shape(X))
        np.add.at(out.T, self.indices, np.asarray(G).T)
        return out

    def to_dict(self):
        return {"kind": self.kind, "indices": self.indices}


class SerialChainFK(ProjectionMap):
    """End-effector position (Euclidean) or pose (SE(3)) of a joint vector."""

    kind = "serial_chain_fk"

    def __init__(self, chain: SerialChain, output: str = "position"):
        if output not in ("position", "pose"):
            raise ValueError("output must be 'position' or 'pose'")
        self.chain = chain
        self.output = output
        self.space = "euclidean" if output == "position" else "se3"

    def __call__(self, X):
        G, _, _ = fk_frames(self.chain, X)
        return G[:, :3, 3] if self.output == "position" else G

    def jacobian(self, X):
        if self.output == "position":
            return fk_position_jacobian(self.chain, X)
        return fk_body_jacobian(self.chain, X)

    def to_dict(self):
        return {"kind": self.kind, "output": self.output, "chain": self.chain.to_dict()}


class SE3ExpChart(ProjectionMap):
    """``g(xi) = base @ exp(xi)`` for twist states ``xi``."""

    kind = "se3_exp_chart"
    space = "se3"

    def __init__(self, base=None, step: float = 1e-6):
        self.base = np.eye(4) if base is None else np.asarray(base, dtype=float)
        self.step = step

    def __call__(self, X):
        return self.base @ se3_exp_batch(np.asarray(X, dtype=float))

    def jacobian(self, X):
        # central differences in the right chart at g(x)
        X = np.asarray(X, dtype=float)
        G_inv = se3_inverse_batch(self(X))
        J = np.empty((len(X), 6, 6))
        for i in range(6):
            e = np.zeros(6)
            e[i] = self.step
            plus = se3_log_batch(G_inv @ self(X + e))
            minus = se3_log_batch(G_inv @ self(X - e))
            J[:, :, i] = (plus - minus) / (2 * self.step)
        return J

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.tolist()}


def _states(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.states
    X = np.asarray(traj, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _sample_points(samples, spec: KernelSpec) -> np.ndarray:
    w = getattr(samples, "weights", None)
    if w is not None and np.ptp(w) > 1e-15:
        raise ValueError("non-uniform sample weights; resample with importance_filter first")
    return as_points(spec, getattr(samples, "points", samples))


def _gram_sum(spec, X, Y) -> float:
    total = 0.0
    for i in range(0, len(X), _BLOCK):
        total += gram(spec, X[i:i + _BLOCK], Y).sum()
    return float(total)


def _check_space(spec: KernelSpec, g: ProjectionMap):
    if spec.space != g.space:
        raise ValueError(f"projection lands in {g.space} but kernel {spec.family} works on {spec.space}")


def emmd(traj, samples, spec: KernelSpec, g: ProjectionMap | None = None) -> float:
    g = g or Identity()
    _check_space(spec, g)
    Y = as_points(spec, g(_states(traj)))
    W = _sample_points(samples, spec)
    T, M = len(Y), len(W)
    return _gram_sum(spec, Y, Y) / T ** 2 - 2.0 * _gram_sum(spec, Y, W) / (T * M)


def sample_constant_term(samples, spec: KernelSpec) -> float:
    W = _sample_points(samples, spec)
    return _gram_sum(spec, W, W) / len(W) ** 2


def mmd_empirical(xs, ys, spec: KernelSpec) -> float:
    """Biased squared MMD between two point sets."""
    X = as_points(spec, xs)
    Y = as_points(spec, ys)
    n, m = len(X), len(Y)
    return _gram_sum(spec, X, X) / n ** 2 - 2.0 * _gram_sum(spec, X, Y) / (n * m) \
        + _gram_sum(spec, Y, Y) / m ** 2


def emmd_domain_gradient(Y, W, spec: KernelSpec) -> np.ndarray:
    """Gradient of the metric with respect to the projected points ``Y``."""
    T, M = len(Y), len(W)
    out = np.empty((T, 6 if spec.family != RBF else Y.shape[1]))
    for i in range(0, T, _BLOCK):
        out[i:i + _BLOCK] = (2.0 / T ** 2) * weighted_grad_sum(spec, Y[i:i + _BLOCK], Y) \
            - (2.0 / (T * M)) * weighted_grad_sum(spec, Y[i:i + _BLOCK], W)
    return out


def emmd_gradient(traj, samples, spec: KernelSpec, g: ProjectionMap | None = None) -> np.ndarray:
    """Per-state gradient of ``emmd``, shape (T, n)."""
    g = g or Identity()
    _check_space(spec, g)
    X = _states(traj)
    Y = as_points(spec, g(X))
    W = _sample_points(samples, spec)
    return g.vjp(X, emmd_domain_gradient(Y, W, spec))


_RBF_BLOCK = 1 << 16


class EmmdObjective:
    """Metric value and state gradient with the sample set bound once."""

    def __init__(self, samples, spec: KernelSpec, g: ProjectionMap | None = None):
        self.spec = spec
        self.g = g or Identity()
        _check_space(spec, self.g)
        self.W = _sample_points(samples, spec)

    def value(self, X) -> float:
        return emmd(X, self.W, self.spec, self.g)

    def value_and_grad(self, X):
        X = _states(X)
        Y = as_points(self.spec, self.g(X))
        T, M = len(Y), len(self.W)
        if self.spec.family == RBF:
            # one pass over each Gram block for both value and gradient
            # row blocks keep each Gram slice cache-sized
            s2 = 2.0 * self.spec.bandwidth ** 2
            rows = max(1, _RBF_BLOCK // max(T, M))
            syy = syw = 0.0
            gy = np.empty_like(Y)
            for i in range(0, T, rows):
                Yb = Y[i:i + rows]
                Kyy = gram(self.spec, Yb, Y)
                Kyw = gram(self.spec, Yb, self.W)
                syy += Kyy.sum()
                syw += Kyw.sum()
                gy[i:i + rows] = (2.0 / T ** 2) * (Kyy @ Y - Yb * Kyy.sum(1)[:, None]) \
                    - (2.0 / (T * M)) * (Kyw @ self.W - Yb * Kyw.sum(1)[:, None])
            gy *= 2.0 / s2
            return float(syy / T ** 2 - 2.0 * syw / (T * M)), self.g.vjp(X, gy)
        val = _gram_sum(self.spec, Y, Y) / T ** 2 - 2.0 * _gram_sum(self.spec, Y, self.W) / (T * M)
        return float(val), self.g.vjp(X, emmd_domain_gradient(Y, self.W, self.spec))
