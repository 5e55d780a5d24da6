"""Bounded, continuous kernels on Euclidean space and on SE(3).

Euclidean point sets are ``(N, d)`` arrays; SE(3) point sets are stacks of
homogeneous matrices with shape ``(N, 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .lie import check_tangent_weight, se3_exp_batch, se3_inverse_batch, se3_log_batch

RBF = "rbf_euclidean"
SE3 = "se3_logmap"
FAMILIES = (RBF, SE3)

# keeps the (rows, cols, 4, 4) relative-pose buffers bounded
_SE3_CHUNK = 4096


class DegenerateDomainError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str = RBF
    bandwidth: float = 1.0
    tangent_weight: np.ndarray = field(default_factory=lambda: np.eye(6))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "tangent_weight", check_tangent_weight(self.tangent_weight))

    @property
    def space(self) -> str:
        return "se3" if self.family == SE3 else "euclidean"


def as_points(spec: KernelSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if spec.family == SE3:
        if X.shape == (4, 4):
            X = X[None]
        if X.ndim != 3 or X.shape[1:] != (4, 4):
            raise ValueError("SE(3) points must have shape (N, 4, 4)")
    else:
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("Euclidean points must have shape (N, d)")
    return X


def _se3_sqdist(W, rel):
    xi = se3_log_batch(rel)
    return np.einsum("...i,ij,...j->...", xi, W, xi)


def _se3_relative(A, B):
    return se3_inverse_batch(A)[:, None] @ B[None, :]


def gram(spec: KernelSpec, X, Y) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(X[i], Y[j])``."""
    X = as_points(spec, X)
    Y = as_points(spec, Y)
    if spec.family == RBF:
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
        return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * spec.bandwidth ** 2))
    W = spec.tangent_weight
    out = np.empty((len(X), len(Y)))
    rows = max(1, _SE3_CHUNK // max(1, len(Y)))
    for i in range(0, len(X), rows):
        out[i:i + rows] = np.exp(-_se3_sqdist(W, _se3_relative(X[i:i + rows], Y)))
    return out


def _single(x):
    if hasattr(x, "matrix"):
        x = x.matrix()
    x = np.asarray(x, dtype=float)
    return x[None] if x.ndim else x.reshape(1, 1)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    return float(gram(spec, _single(a), _single(b))[0, 0])


def _se3_grad_rel(W, rel):
    """Central differences of k on the right chart at ``a``, given rel = a^-1 b.

    Perturbing ``a -> a exp(h e_i)`` turns rel into ``exp(-h e_i) rel``.
    """
    base = se3_log_batch(rel)
    h = 1e-6 * np.maximum(1.0, np.linalg.norm(base, axis=-1))
    grad = np.empty(rel.shape[:-2] + (6,))
    for i in range(6):
        e = np.zeros(rel.shape[:-2] + (6,))
        e[..., i] = h
        plus = np.exp(-_se3_sqdist(W, se3_exp_batch(-e) @ rel))
        minus = np.exp(-_se3_sqdist(W, se3_exp_batch(e) @ rel))
        grad[..., i] = (plus - minus) / (2.0 * h)
    return grad


def kernel_grad_first(spec: KernelSpec, a, b) -> np.ndarray:
    """Gradient of k(a, b) with respect to its first argument.

    Euclidean: ordinary gradient.  SE(3): 6-vector in the chart a exp(delta).
    """
    if spec.family == RBF:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        k = np.exp(-np.sum((a - b) ** 2) / (2.0 * spec.bandwidth ** 2))
        return -(a - b) / spec.bandwidth ** 2 * k
    a = as_points(spec, _single(a))
    b = as_points(spec, _single(b))
    return _se3_grad_rel(spec.tangent_weight, _se3_relative(a, b))[0, 0]


def weighted_grad_sum(spec: KernelSpec, X, Y, weights=None) -> np.ndarray:
    """``out[i] = sum_j w[i, j] * grad_1 k(X[i], Y[j])`` for every row of X.

    ``weights`` defaults to all ones.  Returns (N, d) or (N, 6).
    """
    X = as_points(spec, X)
    Y = as_points(spec, Y)
    if spec.family == RBF:
        K = gram(spec, X, Y)
        if weights is not None:
            K = K * weights
        return -(X * K.sum(axis=1)[:, None] - K @ Y) / spec.bandwidth ** 2
    W = spec.tangent_weight
    out = np.empty((len(X), 6))
    rows = max(1, _SE3_CHUNK // max(1, len(Y)))
    for i in range(0, len(X), rows):
        g = _se3_grad_rel(W, _se3_relative(X[i:i + rows], Y))
        if weights is not None:
            g = g * np.asarray(weights)[i:i + rows, :, None]
        out[i:i + rows] = g.sum(axis=1)
    return out


def positions(points) -> np.ndarray:
    """Euclidean positions of a point set (translation part for poses)."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 3 and P.shape[1:] == (4, 4):
        return P[:, :3, 3]
    return P.reshape(len(P), -1)


def bandwidth_median_heuristic(samples, seed: int = 0, max_points: int = 1000) -> float:
    """Median pairwise distance over a random subset, divided by sqrt(2).

    Accepts a DomainSampleSet or an array of points.  Even counts use the
    mean of the two middle distances.
    """
    pts = positions(getattr(samples, "points", samples))
    if len(pts) < 2 or np.all(pts == pts[0]):
        raise DegenerateDomainError("bandwidth needs at least two distinct samples")
    if len(pts) > max_points:
        idx = np.random.default_rng(seed).choice(len(pts), size=max_points, replace=False)
        pts = pts[np.sort(idx)]
    d = pdist(pts)
    med = float(np.median(d))
    if med == 0.0:
        # mostly duplicated samples; fall back to the distinct pairs
        med = float(np.median(d[d > 0]))
    return med / np.sqrt(2.0)
