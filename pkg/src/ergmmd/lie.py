"""SO(3)/SE(3) exponential and logarithm maps.

Twists are 6-vectors ordered ``(angular, linear)``.  Poses are stored as a
rotation matrix plus a translation; batched routines work on stacks of 4x4
homogeneous matrices with shape ``(..., 4, 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-6
BRANCH_MARGIN = 1e-6


class BranchSingularityError(ValueError):
    """Rotation angle too close to pi for a unique principal logarithm."""


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthogonal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> Pose:
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: Pose) -> Pose:
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)


@dataclass(frozen=True)
class Twist:
    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))

    @classmethod
    def from_vector(cls, xi) -> Twist:
        xi = np.asarray(xi, dtype=float).reshape(6)
        return cls(xi[:3], xi[3:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])


def _as_vector(xi) -> np.ndarray:
    if isinstance(xi, Twist):
        return xi.vector()
    return np.asarray(xi, dtype=float)


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrices for a stack of 3-vectors, shape (..., 3, 3)."""
    w = np.asarray(w, dtype=float)
    K = np.zeros(w.shape[:-1] + (3, 3))
    K[..., 0, 1] = -w[..., 2]
    K[..., 0, 2] = w[..., 1]
    K[..., 1, 0] = w[..., 2]
    K[..., 1, 2] = -w[..., 0]
    K[..., 2, 0] = -w[..., 1]
    K[..., 2, 1] = w[..., 0]
    return K


def vee(K: np.ndarray) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return np.stack([K[..., 2, 1], K[..., 0, 2], K[..., 1, 0]], axis=-1)


def _exp_coefficients(theta: np.ndarray):
    # A = sin(t)/t, B = (1-cos(t))/t^2, C = (t-sin(t))/t^3
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    A = np.where(small, 1.0 - t2 / 6.0, np.sin(t) / t)
    # half-angle form avoids cancellation in 1 - cos(t)
    B = np.where(small, 0.5 - t2 / 24.0, 0.5 * (np.sin(0.5 * t) / (0.5 * t)) ** 2)
    C = np.where(small, 1.0 / 6.0 - t2 / 120.0, (t - np.sin(t)) / (t * t * t))
    return A, B, C


def so3_exp_batch(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    A, B, _ = _exp_coefficients(theta)
    K = hat(w)
    return np.eye(3) + A[..., None, None] * K + B[..., None, None] * (K @ K)


def se3_exp_batch(xi: np.ndarray) -> np.ndarray:
    """Exponential of a stack of twists, returning (..., 4, 4) matrices."""
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("twist must be finite")
    w, v = xi[..., :3], xi[..., 3:]
    theta = np.linalg.norm(w, axis=-1)
    A, B, C = _exp_coefficients(theta)
    K = hat(w)
    K2 = K @ K
    eye = np.eye(3)
    R = eye + A[..., None, None] * K + B[..., None, None] * K2
    V = eye + B[..., None, None] * K + C[..., None, None] * K2
    T = np.zeros(xi.shape[:-1] + (4, 4))
    T[..., :3, :3] = R
    T[..., :3, 3] = np.einsum("...ij,...j->...i", V, v)
    T[..., 3, 3] = 1.0
    return T


def so3_log_batch(R: np.ndarray, check_branch: bool = True) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    s_vec = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    s = np.linalg.norm(s_vec, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if check_branch and np.any(theta > np.pi - BRANCH_MARGIN):
        raise BranchSingularityError(
            "rotation angle within %g of pi; logarithm branch is ambiguous" % BRANCH_MARGIN)
    small = theta < SMALL_ANGLE
    s_safe = np.where(small, 1.0, s)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / s_safe)
    return scale[..., None] * s_vec


def se3_log_batch(T: np.ndarray, check_branch: bool = True) -> np.ndarray:
    """Logarithm of a stack of (..., 4, 4) poses, returning (..., 6) twists."""
    T = np.asarray(T, dtype=float)
    w = so3_log_batch(T[..., :3, :3], check_branch=check_branch)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    half = 0.5 * t
    # D = (1 - (t/2) cot(t/2)) / t^2
    D = np.where(small, 1.0 / 12.0 + theta * theta / 720.0,
                 (1.0 - half * np.cos(half) / np.sin(half)) / (t * t))
    K = hat(w)
    V_inv = np.eye(3) - 0.5 * K + D[..., None, None] * (K @ K)
    v = np.einsum("...ij,...j->...i", V_inv, T[..., :3, 3])
    return np.concatenate([w, v], axis=-1)


def se3_inverse_batch(T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    Rt = np.swapaxes(T[..., :3, :3], -1, -2)
    out = np.zeros_like(T)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, T[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def se3_exp(xi) -> Pose:
    return Pose.from_matrix(se3_exp_batch(_as_vector(xi).reshape(6)))


def se3_log(P: Pose) -> Twist:
    """Principal logarithm; raises BranchSingularityError near a half turn."""
    return Twist.from_vector(se3_log_batch(P.matrix()))


def check_tangent_weight(W) -> np.ndarray:
    """Validate a 6x6 symmetric positive-definite tangent weight.

    A length-6 vector is accepted as the diagonal.
    """
    W = np.asarray(W, dtype=float)
    if W.shape == (6,):
        W = np.diag(W)
    if W.shape != (6, 6):
        raise ValueError("tangent weight must be 6x6 or a length-6 diagonal")
    if not np.all(np.isfinite(W)) or np.max(np.abs(W - W.T)) > 1e-12:
        raise ValueError("tangent weight must be finite and symmetric")
    if np.min(np.linalg.eigvalsh(W)) <= 0.0:
        raise ValueError("tangent weight must be positive definite")
    return W


def weighted_tangent_norm_sq(xi, W) -> float:
    W = check_tangent_weight(W)
    x = _as_vector(xi).reshape(6)
    return float(x @ W @ x)
