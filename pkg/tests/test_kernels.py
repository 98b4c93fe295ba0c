"""Backend equivalence: the numba kernels must agree with the pure-numpy
fallbacks to float64 round-off."""

import numpy as np
import pytest

from imd2cancel import kernels


@pytest.fixture(scope="module", autouse=True)
def warm():
    kernels.warmup()


def test_backend_flag_reported():
    assert isinstance(kernels.NUMBA_ENABLED, bool)


def test_cheb_features_matches_numpy():
    rng = np.random.default_rng(0)
    emb = rng.uniform(0.0, 1.0, (200, 3))
    fast = kernels.cheb_features(emb, 8)
    ref = kernels._cheb_features_np(emb, 8)
    np.testing.assert_allclose(fast, ref, rtol=1e-14, atol=1e-15)


def test_cheb_features_order_one():
    emb = np.random.default_rng(1).uniform(0, 1, (10, 2))
    np.testing.assert_array_equal(kernels.cheb_features(emb, 1), np.ones((10, 2)))


@pytest.mark.parametrize("act", ["tanh", "relu", "sigmoid"])
def test_nn_loss_grad_flat_matches_numpy(act):
    rng = np.random.default_rng(2)
    dims = np.array([[3, 3], [2, 3], [1, 2]], dtype=np.int64)
    flat = rng.normal(size=int(np.sum(dims[:, 0] * dims[:, 1])))
    F = np.ascontiguousarray(rng.uniform(0, 1, (100, 3)))
    t = rng.normal(size=100)
    loss_f, grad_f, y_f = kernels.nn_loss_grad_flat(F, t, flat, dims, act)
    loss_r, grads_r, y_r = kernels._nn_loss_grad_np(F, t, kernels._split_flat(flat, dims),
                                                    kernels.ACTIVATION_CODES[act])
    grad_r = np.concatenate([g.ravel() for g in grads_r])
    assert loss_f == pytest.approx(loss_r, rel=1e-12)
    np.testing.assert_allclose(y_f, y_r, rtol=1e-12)
    np.testing.assert_allclose(grad_f, grad_r, rtol=1e-10, atol=1e-14)


def test_nn_forward_batch_matches_loss_grad_outputs():
    rng = np.random.default_rng(3)
    ws = [rng.normal(size=(3, 2)), rng.normal(size=(2, 3)), rng.normal(size=(1, 2))]
    F = rng.uniform(0, 1, (30, 2))
    t = np.zeros(30)
    _, _, y = kernels.nn_loss_grad(F, t, ws, "tanh")
    y2 = kernels.nn_forward_batch(F, ws, "tanh")
    np.testing.assert_allclose(y, y2, rtol=1e-12)
