from importlib import resources

import numpy as np
import pytest
from scipy import stats

from ergmmd.domain import (DomainSampleSet, GaussianMixture2D, MeshParseError, PathologicalDensityError,
                           TriangleMesh, importance_filter, load_mesh, normal_alignment_scores,
                           offset_along_normals, read_samples_csv, sample_density_2d,
                           sample_surface_uniform, write_samples_csv)

CUBE = resources.files("ergmmd") / "assets" / "cube.obj"


def write_obj(tmp_path, text):
    p = tmp_path / "m.obj"
    p.write_text(text)
    return p


def test_load_single_triangle(tmp_path):
    m = load_mesh(write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert m.faces.shape == (1, 3)


def test_load_quad_is_fan_triangulated(tmp_path):
    m = load_mesh(write_obj(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n"))
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


@pytest.mark.parametrize("face", ["f 0 1 2", "f 1 2 4"])
def test_load_bad_index(tmp_path, face):
    with pytest.raises(MeshParseError):
        load_mesh(write_obj(tmp_path, f"v 0 0 0\nv 1 0 0\nv 0 1 0\n{face}\n"))


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_mesh(tmp_path / "nope.obj")


def test_cube_asset():
    m = load_mesh(CUBE)
    assert len(m.faces) == 12
    assert m.face_areas().sum() == pytest.approx(6 * 0.04)


def test_samples_on_single_triangle_plane():
    V = np.array([[0, 0, 0.2], [1, 0, 0.5], [0, 1, -0.1]])
    m = TriangleMesh(V, [[0, 1, 2]])
    S = sample_surface_uniform(m, 100, seed=0)
    n = np.cross(V[1] - V[0], V[2] - V[0])
    assert np.abs((S.points - V[0]) @ n).max() < 1e-9
    bary = np.linalg.lstsq(np.column_stack([V[1] - V[0], V[2] - V[0]]), (S.points - V[0]).T, rcond=None)[0]
    assert bary.min() >= -1e-12 and bary.sum(axis=0).max() <= 1 + 1e-12


def test_area_weighted_face_choice():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [10, 0, 0], [13, 0, 0], [10, 2, 0]], dtype=float)
    m = TriangleMesh(V, [[0, 1, 2], [3, 4, 5]])
    S = sample_surface_uniform(m, 10_000, seed=1)
    frac = np.mean(S.points[:, 0] >= 10)
    assert abs(frac - 0.75) <= 0.02


def test_single_sample_has_unit_normal():
    S = sample_surface_uniform(load_mesh(CUBE), 1, seed=0)
    assert len(S) == 1
    assert np.linalg.norm(S.normals[0]) == pytest.approx(1.0, abs=1e-12)


def test_surface_sampling_deterministic():
    m = load_mesh(CUBE)
    a, b = sample_surface_uniform(m, 50, 4), sample_surface_uniform(m, 50, 4)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.normals, b.normals)


def test_importance_uniform_scores_chi_square():
    S = DomainSampleSet(np.arange(10.0)[:, None])
    out = importance_filter(S, np.ones(10), 10_000, seed=0)
    counts = np.bincount(out.points[:, 0].astype(int), minlength=10)
    assert stats.chisquare(counts).pvalue > 0.001


def test_importance_single_survivor():
    S = DomainSampleSet(np.array([[0.0], [1.0], [2.0]]))
    out = importance_filter(S, [1, 0, 0], 20, seed=0)
    assert np.all(out.points == 0.0)


def test_importance_all_zero_raises():
    with pytest.raises(ValueError):
        importance_filter(DomainSampleSet(np.zeros((3, 1))), np.zeros(3), 5)


def test_importance_top_face_on_cube():
    S = sample_surface_uniform(load_mesh(CUBE), 2000, seed=2)
    out = importance_filter(S, normal_alignment_scores(S.normals, [[0, 0, 1]]), 500, seed=3)
    np.testing.assert_allclose(out.normals, np.tile([0, 0, 1.0], (500, 1)), atol=1e-12)
    np.testing.assert_allclose(out.points[:, 2], 0.4, atol=1e-12)


def test_importance_preserves_support():
    S = sample_surface_uniform(load_mesh(CUBE), 200, seed=5)
    out = importance_filter(S, np.random.default_rng(0).random(200), 300, seed=6)
    src = {tuple(p) for p in S.points}
    assert all(tuple(p) in src for p in out.points)


def test_offset_along_normals():
    S = DomainSampleSet(np.random.default_rng(0).random((5, 3)), normals=np.tile([0, 0, 1.0], (5, 1)))
    assert np.array_equal(offset_along_normals(S, 0.0).points, S.points)
    np.testing.assert_allclose(offset_along_normals(S, 0.1).points[:, 2] - S.points[:, 2], 0.1, atol=1e-15)
    back = offset_along_normals(offset_along_normals(S, 0.3), -0.3)
    np.testing.assert_allclose(back.points, S.points, atol=1e-12)


def test_gaussian_mean_clt():
    cov = np.diag([0.01, 0.02])
    mix = GaussianMixture2D([1.0], [[0.5, 0.5]], [cov])
    M = 10_000
    S = sample_density_2d(mix, [[0, 1], [0, 1]], M, seed=0)
    sd = np.sqrt(np.diag(cov))
    assert np.all(np.abs(S.points.mean(axis=0) - 0.5) <= 3 * sd / np.sqrt(M))


def test_uniform_fallback_ks():
    M = 5000
    S = sample_density_2d(GaussianMixture2D(), [[0, 2], [-1, 1]], M, seed=3)
    assert stats.kstest(S.points[:, 0], stats.uniform(0, 2).cdf).statistic < 1.63 / np.sqrt(M)
    assert stats.kstest(S.points[:, 1], stats.uniform(-1, 2).cdf).statistic < 1.63 / np.sqrt(M)


def test_density_single_sample_in_bounds():
    mix = GaussianMixture2D([1.0], [[0.2, 0.8]], [np.eye(2) * 0.05])
    S = sample_density_2d(mix, [[0, 1], [0, 1]], 1, seed=0)
    assert len(S) == 1 and np.all((S.points >= 0) & (S.points <= 1))


def test_density_pathological():
    mix = GaussianMixture2D([1.0], [[50.0, 50.0]], [np.eye(2) * 1e-3])
    with pytest.raises(PathologicalDensityError):
        sample_density_2d(mix, [[0, 1], [0, 1]], 10, seed=0, max_proposals=200_000)


def test_sample_set_validation():
    with pytest.raises(ValueError):
        DomainSampleSet(np.zeros((2, 3)), normals=np.ones((2, 3)))
    with pytest.raises(ValueError):
        DomainSampleSet(np.zeros((2, 3)), weights=[0.5, 0.6])


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    n = rng.standard_normal((4, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    S = DomainSampleSet(rng.random((4, 3)), normals=n, weights=[0.1, 0.2, 0.3, 0.4])
    p = tmp_path / "s.csv"
    write_samples_csv(S, p)
    assert p.read_text().splitlines()[0] == "x,y,z,nx,ny,nz,w"
    back = read_samples_csv(p)
    assert np.array_equal(back.points, S.points)
    assert np.array_equal(back.normals, S.normals)
    assert np.array_equal(back.weights, S.weights)


def test_csv_bad_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_samples_csv(p)
