import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddmpc.errors import DegenerateDataError, DimensionError, NumericError
from ddmpc.plants import LtiPlant, lti_rollout, random_lti
from ddmpc.predictor import (GMatrix, InitWindow, compute_g_matrix, load_g_matrix, pinv_svd,
                             predict, save_g_matrix, solve_min_norm_k)
from ddmpc.trajectory import SystemDims, Trajectory, partition_hankel, record_episode


def fit(plant, n_ini, l, T, rng):
    u = rng.standard_normal((T, plant.dims[1]))
    traj = record_episode(plant, u)
    return compute_g_matrix(partition_hankel(traj, n_ini, l))


def test_min_norm_examples(rng):
    np.testing.assert_allclose(solve_min_norm_k(np.eye(2), [3, 4]), [3, 4])
    np.testing.assert_allclose(solve_min_norm_k([[1, 1]], [2]), [1, 1])
    S = rng.standard_normal((5, 8))
    b = rng.standard_normal(5)
    U, s, Vt = np.linalg.svd(S, full_matrices=False)
    np.testing.assert_allclose(solve_min_norm_k(S, b), Vt.T @ ((U.T @ b) / s), atol=1e-10)


def test_min_norm_errors():
    with pytest.raises(NumericError):
        solve_min_norm_k([[1.0, np.inf]], [1.0])
    with pytest.raises(DimensionError):
        solve_min_norm_k(np.eye(2), [1.0])


@given(st.integers(0, 10_000))
def test_pinv_identities(seed):
    r = np.random.default_rng(seed)
    S = r.standard_normal((6, 4)) @ r.standard_normal((4, 9))  # rank 4
    P = pinv_svd(S)
    scale = np.linalg.norm(S)
    assert np.linalg.norm(S @ P @ S - S) <= 1e-8 * scale
    assert np.linalg.norm(P @ S @ P - P) <= 1e-8 * np.linalg.norm(P)


def test_scalar_lti_exactness(rng):
    p = LtiPlant(0.5, 1.0, 1.0)
    n_ini, l = 2, 4
    g = fit(p, n_ini, l, 60, rng)
    for _ in range(20):
        x0 = rng.standard_normal(1)
        u = rng.standard_normal((n_ini + l, 1))
        y = lti_rollout(p.A, p.B, p.C, p.D, x0, u)
        win = InitWindow(u[:n_ini], y[:n_ini])
        y_hat = predict(g, win, u[n_ini:])
        assert np.linalg.norm(y_hat - y[n_ini:]) <= 1e-8 * np.linalg.norm(y[n_ini:])


def test_mimo_lti_exactness(rng):
    h, m, c = 4, 2, 2
    p = random_lti(h, m, c, rng)
    n_ini, l = 4, 3
    T = (m + 1) * (n_ini + l + h) + 20
    g = fit(p, n_ini, l, T, rng)
    for _ in range(20):
        x0 = rng.standard_normal(h)
        u = rng.standard_normal((n_ini + l, m))
        y = lti_rollout(p.A, p.B, p.C, p.D, x0, u)
        y_hat = predict(g, InitWindow(u[:n_ini], y[:n_ini]), u[n_ini:])
        assert np.linalg.norm(y_hat - y[n_ini:]) <= 1e-8 * np.linalg.norm(y[n_ini:])


def test_zero_output_gives_zero_map(rng):
    traj = Trajectory(rng.standard_normal((30, 2)), np.zeros((30, 1)))
    g = compute_g_matrix(partition_hankel(traj, 2, 3))
    assert not np.any(g.map)


def test_degenerate_stack():
    traj = Trajectory(np.zeros((10, 1)), np.zeros((10, 1)))
    with pytest.raises(DegenerateDataError):
        compute_g_matrix(partition_hankel(traj, 1, 1))


def test_full_arm_dims_width(rng):
    traj = Trajectory(rng.standard_normal((401, 9)), rng.standard_normal((401, 6)))
    g = compute_g_matrix(partition_hankel(traj, 2, 6), h=15)
    assert g.map.shape == (36, 84)
    parts = g.partitions
    assert [parts[k].stop - parts[k].start for k in ("u_ini", "y_ini", "u")] == [18, 12, 54]


def test_predict_zero_and_linear(rng):
    g = GMatrix(rng.standard_normal((6, 3 * 2 + 1 * 3)), SystemDims(1, 2, 1), 2, 3)
    zero = InitWindow.zeros(2, 1, 2)
    assert not np.any(predict(g, zero, np.zeros((3, 1))))
    u1, u2 = rng.standard_normal((3, 1)), rng.standard_normal((3, 1))
    np.testing.assert_allclose(predict(g, zero, u1 + u2),
                               predict(g, zero, u1) + predict(g, zero, u2), atol=1e-12)
    w1 = InitWindow(rng.standard_normal((2, 1)), rng.standard_normal((2, 2)))
    w2 = InitWindow(rng.standard_normal((2, 1)), rng.standard_normal((2, 2)))
    w12 = InitWindow(w1.u_ini + w2.u_ini, w1.y_ini + w2.y_ini)
    np.testing.assert_allclose(predict(g, w12, u1 + u2),
                               predict(g, w1, u1) + predict(g, w2, u2), atol=1e-12)
    with pytest.raises(DimensionError):
        predict(g, zero, np.zeros((2, 1)))


def test_gmatrix_file_round_trip(tmp_path, rng):
    g = GMatrix(rng.standard_normal((4, 3 * 2 + 2 * 4)), SystemDims(2, 1, 5), 2, 4)
    save_g_matrix(g, tmp_path / "g.txt")
    back = load_g_matrix(tmp_path / "g.txt")
    np.testing.assert_array_equal(back.map, g.map)
    assert (back.dims, back.n_ini, back.l) == (g.dims, 2, 4)
