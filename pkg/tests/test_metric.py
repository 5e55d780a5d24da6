import numpy as np
import pytest
from scipy.stats import qmc

from ergmmd.domain import DomainSampleSet
from ergmmd.kernels import RBF, SE3, KernelSpec
from ergmmd.lie import se3_exp_batch
from ergmmd.metric import (EmmdObjective, Identity, SE3ExpChart, SelectCoordinates, SerialChainFK, emmd,
                           emmd_gradient, mmd_empirical, sample_constant_term)
from ergmmd.systems import SerialChain, Trajectory, synthetic_arm


def brute_emmd(Y, W, sigma):
    k = lambda a, b: np.exp(-np.sum((a - b) ** 2) / (2 * sigma ** 2))
    T, M = len(Y), len(W)
    first = sum(k(a, b) for a in Y for b in Y) / T ** 2
    second = sum(k(a, w) for a in Y for w in W) / (T * M)
    return first - 2 * second


def fd_grad(f, X, h=1e-6):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        G[idx] = (f(X + E) - f(X - E)) / (2 * h)
    return G


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def test_single_point_on_sample():
    assert emmd(np.array([[0.3, 0.4]]), np.array([[0.3, 0.4]]), KernelSpec(RBF, 0.5)) == -1.0


def test_constant_kernel_limit():
    rng = np.random.default_rng(0)
    val = emmd(rng.random((6, 2)), rng.random((9, 2)), KernelSpec(RBF, 1e9))
    assert val == pytest.approx(-1.0, abs=1e-6)


def test_brute_force_oracle():
    rng = np.random.default_rng(1)
    Y, W = rng.random((3, 2)), rng.random((4, 2))
    assert emmd(Y, W, KernelSpec(RBF, 0.7)) == pytest.approx(brute_emmd(Y, W, 0.7), abs=1e-12)


def test_accepts_trajectory_and_sample_set():
    rng = np.random.default_rng(2)
    X, W = rng.random((5, 2)), rng.random((4, 2))
    traj = Trajectory(X, np.zeros((5, 2)), 0.1)
    spec = KernelSpec(RBF, 0.4)
    assert emmd(traj, DomainSampleSet(W), spec) == emmd(X, W, spec)


def test_sample_constant_term():
    spec = KernelSpec(RBF, 0.3)
    assert sample_constant_term(np.array([[0.2, 0.1]]), spec) == 1.0
    assert sample_constant_term(np.array([[0.2, 0.1], [0.2, 0.1]]), spec) == 1.0
    W = np.random.default_rng(3).random((5, 2))
    brute = np.mean([[np.exp(-np.sum((a - b) ** 2) / (2 * 0.09)) for b in W] for a in W])
    assert sample_constant_term(W, spec) == pytest.approx(brute, abs=1e-12)


def test_mmd_empirical_cases():
    spec = KernelSpec(RBF, 0.5)
    X = np.random.default_rng(4).random((3, 2))
    assert abs(mmd_empirical(X, X, spec)) <= 1e-12
    assert mmd_empirical([[0.0]], [[50.0]], spec) == pytest.approx(2.0, abs=1e-9)
    Y = np.random.default_rng(5).random((4, 2))
    assert mmd_empirical(X, Y, spec) == pytest.approx(emmd(X, Y, spec) + sample_constant_term(Y, spec),
                                                      abs=1e-12)


def test_identity_and_nonnegativity_random():
    rng = np.random.default_rng(6)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        X, W = rng.random((int(rng.integers(1, 21)), d)), rng.random((int(rng.integers(1, 31)), d))
        spec = KernelSpec(RBF, float(rng.uniform(0.05, 2)))
        total = emmd(X, W, spec) + sample_constant_term(W, spec)
        assert total == pytest.approx(mmd_empirical(X, W, spec), abs=1e-12)
        assert total >= -1e-12


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    X, W = rng.random((12, 3)), rng.random((20, 3))
    spec = KernelSpec(RBF, 0.3)
    assert abs(emmd(X, W, spec) - emmd(X[rng.permutation(12)], W, spec)) <= 1e-14


def test_halton_weak_convergence_trend():
    W = np.random.default_rng(8).random((2000, 2))
    spec = KernelSpec(RBF, 0.2)
    c = sample_constant_term(W, spec)
    vals = [emmd(qmc.Halton(d=2, scramble=False).random(T), W, spec) + c for T in (16, 64, 256, 1024)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_gradient_zero_at_single_sample():
    g = emmd_gradient(np.array([[0.3, 0.4]]), np.array([[0.3, 0.4]]), KernelSpec(RBF, 0.5))
    np.testing.assert_array_equal(g, 0.0)


def test_gradient_fd_rbf():
    rng = np.random.default_rng(9)
    X, W = rng.random((5, 2)), rng.random((8, 2))
    spec = KernelSpec(RBF, 0.4)
    g = emmd_gradient(X, W, spec)
    assert rel_err(g, fd_grad(lambda Z: emmd(Z, W, spec), X)) < 1e-5


def test_gradient_translation_invariance():
    rng = np.random.default_rng(10)
    X, W = rng.random((6, 3)), rng.random((9, 3))
    spec = KernelSpec(RBF, 0.3)
    shift = np.array([3.0, -1.5, 0.25])
    np.testing.assert_allclose(emmd_gradient(X + shift, W + shift, spec), emmd_gradient(X, W, spec), atol=1e-10)


def test_gradient_fd_select_coordinates():
    rng = np.random.default_rng(11)
    X, W = rng.random((5, 4)), rng.random((7, 2))
    spec, g = KernelSpec(RBF, 0.3), SelectCoordinates([2, 0])
    G = emmd_gradient(X, W, spec, g)
    assert np.all(G[:, [1, 3]] == 0)
    assert rel_err(G, fd_grad(lambda Z: emmd(Z, W, spec, g), X)) < 1e-5


def test_gradient_fd_chain_position():
    rng = np.random.default_rng(12)
    g = SerialChainFK(synthetic_arm())
    Q = rng.uniform(-1, 1, (4, 7))
    W = g(rng.uniform(-1, 1, (6, 7)))
    spec = KernelSpec(RBF, 0.2)
    assert rel_err(emmd_gradient(Q, W, spec, g), fd_grad(lambda Z: emmd(Z, W, spec, g), Q)) < 1e-5


def test_gradient_fd_chain_pose():
    rng = np.random.default_rng(13)
    g = SerialChainFK(synthetic_arm(), "pose")
    Q = rng.uniform(-0.5, 0.5, (3, 7))
    W = g(rng.uniform(-0.5, 0.5, (4, 7)))
    spec = KernelSpec(SE3, 1.0, [1, 1, 1, 4, 4, 4])
    assert rel_err(emmd_gradient(Q, W, spec, g), fd_grad(lambda Z: emmd(Z, W, spec, g), Q, 1e-5)) < 1e-5


def test_gradient_fd_se3_chart():
    rng = np.random.default_rng(14)
    g = SE3ExpChart(se3_exp_batch(np.array([0.1, 0.2, -0.3, 1.0, 0.0, 0.5])))
    X = rng.standard_normal((3, 6)) * 0.4
    W = g(rng.standard_normal((5, 6)) * 0.4)
    spec = KernelSpec(SE3, 1.0)
    assert rel_err(emmd_gradient(X, W, spec, g), fd_grad(lambda Z: emmd(Z, W, spec, g), X, 1e-5)) < 1e-5


def test_objective_matches_functions():
    rng = np.random.default_rng(15)
    X, W = rng.random((7, 2)), rng.random((9, 2))
    spec = KernelSpec(RBF, 0.35)
    obj = EmmdObjective(W, spec)
    v, G = obj.value_and_grad(X)
    assert v == pytest.approx(emmd(X, W, spec), abs=1e-14)
    np.testing.assert_allclose(G, emmd_gradient(X, W, spec), atol=1e-14)


def test_space_mismatch_rejected():
    with pytest.raises(ValueError):
        emmd(np.zeros((2, 6)), se3_exp_batch(np.zeros((1, 6))), KernelSpec(SE3, 1.0), Identity())


def test_nonuniform_weights_rejected():
    S = DomainSampleSet(np.array([[0.0], [1.0]]), weights=[0.2, 0.8])
    with pytest.raises(ValueError):
        emmd(np.zeros((1, 1)), S, KernelSpec(RBF, 1.0))


def test_planar_chain_projection():
    chain = SerialChain(axes=[[0, 0, 1], [0, 0, 1]], offsets=[[0, 0, 0], [1, 0, 0]], tool_offset=[1, 0, 0])
    np.testing.assert_allclose(SerialChainFK(chain)(np.array([[0.0, 0.0], [np.pi / 2, 0.0]])),
                               [[2, 0, 0], [0, 2, 0]], atol=1e-12)
