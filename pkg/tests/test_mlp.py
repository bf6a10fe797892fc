import numpy as np
import pytest

from ddmpc.errors import DimensionError, DivergenceError
from ddmpc.mlp import (MlpModel, TrainConfig, gradient_check, infer, load_model, rmse_and_grads,
                       save_model, split_indices, train)


def small_model(seed=0, in_dim=3, out_dim=2):
    return MlpModel.initialize(in_dim, out_dim, 5, 2, np.random.default_rng(seed))


def test_gradient_check_passes(rng):
    model = small_model()
    X, Y = rng.standard_normal((8, 3)), rng.standard_normal((8, 2))
    assert gradient_check(model, (X, Y), eps=1e-5) <= 1e-4


def test_gradient_gap_shrinks_with_eps(rng):
    model = small_model(1)
    X, Y = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    _, grads = rmse_and_grads(model, X, Y)
    gaps = []
    for eps in (1e-2, 1e-3):
        flat, g = model.weights[0].reshape(-1), grads[0].reshape(-1)
        gap = 0.0
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            fp = rmse_and_grads(model, X, Y)[0]
            flat[k] = orig - eps
            fm = rmse_and_grads(model, X, Y)[0]
            flat[k] = orig
            gap = max(gap, abs((fp - fm) / (2 * eps) - g[k]))
        gaps.append(gap)
    assert gaps[1] < gaps[0]


def test_zero_weights_output_the_mean():
    m = small_model()
    for W, b in zip(m.weights, m.biases):
        W[:] = 0.0
        b[:] = 0.0
    m.y_mean = np.array([1.5, -2.0])
    m.y_scale = np.array([3.0, 4.0])
    np.testing.assert_array_equal(infer(m, np.ones(3)), [1.5, -2.0])


def test_batch_and_single_agree_bitwise(rng):
    m = small_model(2)
    X = rng.standard_normal((7, 3))
    batch = infer(m, X)
    for x, row in zip(X, batch):
        assert np.array_equal(infer(m, x), row)
    with pytest.raises(DimensionError):
        infer(m, np.ones(4))


def test_split_is_reproducible_partition():
    a, b = split_indices(100, 7), split_indices(100, 7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert sorted(np.concatenate(a)) == list(range(100))
    assert [len(x) for x in a] == [80, 10, 10]
    assert not np.array_equal(split_indices(100, 8)[0], a[0])


@pytest.fixture(scope="module")
def identity_fit():
    X = np.random.default_rng(0).uniform(-1, 1, (2000, 2))
    cfg = TrainConfig(lr=3e-3, batch=64, epochs=40, hidden=16, n_hidden=1, seed=3)
    return X, train(X, X, cfg)


def test_identity_fit(identity_fit):
    X, res = identity_fit
    assert res.test_rmse <= 1e-2
    assert res.val_rmse[-1] < res.val_rmse[0]
    assert res.train_rmse[-1] < 0.1 * res.train_rmse[0]


def test_best_validation_checkpoint_is_returned(identity_fit):
    X, res = identity_fit
    best = int(np.argmin(res.val_rmse))
    assert res.best_epoch == best
    _, va, _ = res.splits
    Xn = (X[va] - res.model.x_mean) / res.model.x_scale
    Yn = (X[va] - res.model.y_mean) / res.model.y_scale
    got = np.sqrt(np.mean((res.model.forward_normalized(Xn) - Yn) ** 2))
    assert got == pytest.approx(res.val_rmse[best], rel=1e-12)


def test_normalization_makes_fit_unit_invariant():
    r = np.random.default_rng(4)
    X = r.uniform(-1, 1, (700, 2))
    Y = np.sin(X[:, :1]) + X[:, 1:] ** 2
    cfg = TrainConfig(batch=64, epochs=3, hidden=8, n_hidden=1, seed=1)
    a = train(X, Y, cfg)
    b = train(1000 * X + 5, 1000 * Y - 3, cfg)
    np.testing.assert_allclose(a.val_rmse, b.val_rmse, rtol=1e-6)
    np.testing.assert_allclose(1000 * infer(a.model, X[:5]) - 3,
                               infer(b.model, 1000 * X[:5] + 5), rtol=1e-6, atol=1e-6)


def test_save_load_round_trip(tmp_path, identity_fit):
    _, res = identity_fit
    save_model(res.model, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    X = np.random.default_rng(9).uniform(-1, 1, (10, 2))
    np.testing.assert_array_equal(infer(back, X), infer(res.model, X))
    assert back.in_range([0.0, 0.0]) and not back.in_range([5.0, 0.0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_and_input_checks():
    r = np.random.default_rng(0)
    X = r.standard_normal((700, 2))
    with pytest.raises(DivergenceError):
        train(X, X, TrainConfig(lr=1e300, batch=64, epochs=2, hidden=4, n_hidden=1))
    with pytest.raises(ValueError):
        train(X[:100], X[:100], TrainConfig(batch=64))
    with pytest.raises(ValueError):
        train(X, np.full_like(X, np.nan), TrainConfig(batch=64))
    with pytest.raises(ValueError):
        TrainConfig(split=(0.5, 0.5, 0.5))
