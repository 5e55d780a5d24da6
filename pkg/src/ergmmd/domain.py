"""Domain sample sets from meshes, 2D Gaussian mixtures and CSV point clouds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import DegenerateDomainError


class MeshParseError(ValueError):
    pass


class PathologicalDensityError(RuntimeError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        F = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(F) == 0:
            raise MeshParseError("mesh has no faces")
        if F.min() < 0 or F.max() >= len(V):
            raise MeshParseError("face index out of range")
        if np.any((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])):
            raise MeshParseError("face with repeated vertex")
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "faces", F)

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def _cross(self) -> np.ndarray:
        tri = self.triangles()
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        n = self._cross()
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


@dataclass(frozen=True)
class DomainSampleSet:
    """M samples of the utility measure.

    ``weights=None`` means uniform weights, which is what the metric uses.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if len(P) < 1:
            raise ValueError("sample set must contain at least one point")
        object.__setattr__(self, "points", P)
        if self.normals is not None:
            N = np.asarray(self.normals, dtype=float).reshape(len(P), 3)
            if np.max(np.abs(np.linalg.norm(N, axis=1) - 1.0)) > 1e-9:
                raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", N)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(len(P))
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def load_mesh(path) -> TriangleMesh:
    """Read the ``v``/``f`` records of an ASCII OBJ file.

    Polygons are fan-triangulated.  Face tokens may carry ``/vt/vn`` suffixes,
    which are ignored.  Indices are 1-based; negative indices are rejected.
    """
    path = Path(path)
    vertices, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise MeshParseError(f"{path}:{lineno}: bad vertex") from exc
                if len(vertices[-1]) != 3:
                    raise MeshParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
            elif parts[0] == "f":
                try:
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                except ValueError as exc:
                    raise MeshParseError(f"{path}:{lineno}: bad face") from exc
                if len(idx) < 3:
                    raise MeshParseError(f"{path}:{lineno}: face needs 3 vertices")
                for i in idx:
                    if i < 1 or i > len(vertices):
                        raise MeshParseError(f"{path}:{lineno}: face index {i} out of range")
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0] - 1, idx[k] - 1, idx[k + 1] - 1))
    if not faces:
        raise MeshParseError(f"{path}: empty mesh")
    try:
        return TriangleMesh(np.array(vertices), np.array(faces))
    except MeshParseError as exc:
        raise MeshParseError(f"{path}: {exc}") from exc


def sample_surface_uniform(mesh: TriangleMesh, M: int, seed: int = 0) -> DomainSampleSet:
    """Area-weighted face choice, then uniform barycentric coordinates."""
    if M < 1:
        raise ValueError("M must be >= 1")
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise DegenerateDomainError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=M, p=areas / total)
    r1, r2 = rng.random(M), rng.random(M)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    tri = mesh.triangles()[face]
    points = np.einsum("mk,mkj->mj", bary, tri)
    return DomainSampleSet(points, normals=mesh.face_normals()[face])


def normal_alignment_scores(normals, directions) -> np.ndarray:
    """``max_d max(0, n . d)`` over the given unit directions."""
    N = np.asarray(normals, dtype=float)
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    return np.clip(N @ D.T, 0.0, None).max(axis=1)


def importance_filter(samples: DomainSampleSet, scores, M_out: int, seed: int = 0) -> DomainSampleSet:
    """Resample with replacement, probability proportional to ``scores``."""
    s = np.asarray(scores, dtype=float).reshape(len(samples))
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite and nonnegative")
    if not s.sum() > 0:
        raise ValueError("importance scores are all zero")
    idx = np.random.default_rng(seed).choice(len(s), size=M_out, p=s / s.sum())
    normals = None if samples.normals is None else samples.normals[idx]
    return DomainSampleSet(samples.points[idx], normals=normals)


def offset_along_normals(samples: DomainSampleSet, buffer: float) -> DomainSampleSet:
    if samples.normals is None:
        raise ValueError("offset_along_normals needs sample normals")
    return DomainSampleSet(samples.points + buffer * samples.normals,
                           normals=samples.normals, weights=samples.weights)


@dataclass(frozen=True)
class GaussianMixture2D:
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    covariances: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.asarray(self.means, dtype=float).reshape(len(w), 2)
        cov = np.asarray(self.covariances, dtype=float).reshape(len(w), 2, 2)
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        for c in cov:
            if not np.allclose(c, c.T) or np.min(np.linalg.eigvalsh(c)) <= 0:
                raise ValueError("mixture covariances must be positive definite")
        object.__setattr__(self, "weights", w / w.sum() if len(w) else w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    def pdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(len(X))
        for w, mu, cov in zip(self.weights, self.means, self.covariances):
            d = X - mu
            sol = np.linalg.solve(cov, d.T).T
            out += w * np.exp(-0.5 * np.sum(d * sol, axis=1)) / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
        return out

    def peak_bound(self) -> float:
        return float(sum(w / (2 * np.pi * np.sqrt(np.linalg.det(c)))
                         for w, c in zip(self.weights, self.covariances)))


def sample_density_2d(density: GaussianMixture2D, bounds, M: int, seed: int = 0,
                      batch: int = 100_000, max_proposals: int = 10_000_000) -> DomainSampleSet:
    """Rejection sampling of a Gaussian mixture restricted to a box.

    A mixture without components is the uniform density on the box.
    """
    B = np.asarray(bounds, dtype=float).reshape(2, 2)
    lo, hi = B[:, 0], B[:, 1]
    if not np.all(hi > lo):
        raise ValueError("bounds must be nondegenerate [[xlo, xhi], [ylo, yhi]]")
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    if len(density.weights) == 0:
        return DomainSampleSet(lo + (hi - lo) * rng.random((M, 2)))
    peak = density.peak_bound()
    accepted, proposed, count = [], 0, 0
    while count < M:
        X = lo + (hi - lo) * rng.random((batch, 2))
        keep = rng.random(batch) * peak < density.pdf(X)
        accepted.append(X[keep])
        count += int(keep.sum())
        proposed += batch
        if proposed >= max_proposals and count / proposed < 1e-4:
            raise PathologicalDensityError(
                f"acceptance rate {count / proposed:.2e} after {proposed} proposals")
    return DomainSampleSet(np.concatenate(accepted)[:M])


def _header(dim: int, normals: bool, weights: bool) -> list[str]:
    cols = ["x", "y", "z"][:dim]
    if normals:
        cols += ["nx", "ny", "nz"]
    if weights:
        cols.append("w")
    return cols


def write_samples_csv(samples: DomainSampleSet, path) -> None:
    """Write ``x,y,z[,nx,ny,nz][,w]`` (2D sets write ``x,y``)."""
    if samples.dim > 3:
        raise ValueError("CSV export supports points of dimension <= 3")
    cols = [samples.points]
    if samples.normals is not None:
        cols.append(samples.normals)
    if samples.weights is not None:
        cols.append(samples.weights[:, None])
    data = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(samples.dim, samples.normals is not None, samples.weights is not None))
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def read_samples_csv(path) -> DomainSampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty sample file") from None
        rows = [[float(v) for v in r] for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.array(rows)
    dim = sum(h in ("x", "y", "z") for h in header)
    if dim < 1 or header != _header(dim, "nx" in header, "w" in header):
        raise ValueError(f"{path}: unexpected header {','.join(header)}")
    col = dim
    normals = weights = None
    if "nx" in header:
        normals = data[:, col:col + 3]
        col += 3
    if "w" in header:
        weights = data[:, col]
    return DomainSampleSet(data[:, :dim], normals=normals, weights=weights)


def poses_from_normals(samples: DomainSampleSet) -> np.ndarray:
    """Viewing poses, shape (M, 4, 4): at each point, local z looks along -normal."""
    if samples.normals is None or samples.dim != 3:
        raise ValueError("pose samples need 3D points with normals")
    z = -samples.normals
    ref = np.where(np.abs(z[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    x = ref - np.sum(ref * z, axis=1, keepdims=True) * z
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y = np.cross(z, x)
    T = np.zeros((len(z), 4, 4))
    T[:, :3, 0], T[:, :3, 1], T[:, :3, 2] = x, y, z
    T[:, :3, 3] = samples.points
    T[:, 3, 3] = 1.0
    return T
