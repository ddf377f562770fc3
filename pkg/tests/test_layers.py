from fractions import Fraction

import numpy as np
import pytest

from p3net.errors import InvalidCache, NoForwardState, ShapeMismatch
from p3net.nn.layers import (Adam, BatchNorm, Linear, adam_step, bn_relu_infer, dropout_relu,
                             dropout_threshold, fc_forward, fc_rows)
from p3net.nn.mt19937 import Mt19937


class TestLinear:
    def test_identity_and_constant(self):
        layer = Linear(3, 3)
        layer.W[...] = np.eye(3)
        layer.b[...] = 0
        x = np.arange(6, dtype=np.float32).reshape(2, 3)
        np.testing.assert_array_equal(fc_forward(layer, x), x)
        layer.W[...] = 0
        layer.b[...] = [1, 2, 3]
        np.testing.assert_array_equal(fc_forward(layer, x), [[1, 2, 3], [1, 2, 3]])

    def test_matches_exact_dot_products(self):
        rng = np.random.default_rng(0)
        layer = Linear(7, 5, rng, dtype=np.float64)
        x = rng.normal(size=(4, 7))
        y = fc_forward(layer, x)
        for i in range(4):
            for j in range(5):
                exact = sum(Fraction(x[i, k]) * Fraction(layer.W[k, j]) for k in range(7)) + Fraction(layer.b[j])
                assert y[i, j] == pytest.approx(float(exact), rel=1e-13, abs=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            fc_forward(Linear(3, 2), np.zeros((2, 4)))
        with pytest.raises(ShapeMismatch):
            fc_rows(np.zeros((2, 4)), np.zeros((3, 2)), np.zeros(2))

    def test_rows_independent_of_batch(self):
        rng = np.random.default_rng(1)
        W = rng.normal(size=(256, 64)).astype(np.float32)
        b = rng.normal(size=64).astype(np.float32)
        x = rng.normal(size=(9, 256)).astype(np.float32)
        full = fc_rows(x, W, b)
        for i in range(9):
            np.testing.assert_array_equal(fc_rows(x[i:i + 1], W, b)[0], full[i])

    def test_init_range(self):
        layer = Linear(100, 50, np.random.default_rng(2))
        assert np.abs(layer.W).max() <= 0.1 and np.abs(layer.b).max() <= 0.1

    def test_backward_before_forward(self):
        with pytest.raises(NoForwardState):
            Linear(2, 2).backward(np.zeros((1, 2)))


class TestBatchNorm:
    def test_training_normalisation(self):
        bn = BatchNorm(6, dtype=np.float64)
        z = np.random.default_rng(3).normal(5.0, 3.0, size=(16, 6))
        y = bn.forward_train(z)  # gamma = 1, beta = 0: output is the normalised batch
        assert np.all(np.abs(y.mean(axis=0)) < 1e-6)
        assert np.all(np.abs(y.var(axis=0) - 1) < 1e-4)

    def test_running_stats_update(self):
        bn = BatchNorm(2, dtype=np.float64)
        z = np.array([[1.0, 2.0], [3.0, 6.0]])
        bn.forward_train(z)
        np.testing.assert_allclose(bn.running_mean, 0.1 * np.array([2.0, 4.0]))
        # unbiased batch variance: [2, 8]
        np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * np.array([2.0, 8.0]))
        bn.forward_train(z, update_stats=False)
        np.testing.assert_allclose(bn.running_mean, 0.1 * np.array([2.0, 4.0]))

    def test_identity_inference(self):
        bn = BatchNorm(4, dtype=np.float64)
        bn.running_var[...] = 1 - bn.eps
        bn.refresh_cache()
        x = np.array([[-1.0, 0.5, 2.0, -0.0]])
        np.testing.assert_allclose(bn_relu_infer(bn, x), np.maximum(x, 0), rtol=1e-15)

    def test_input_at_mean_with_nonpositive_beta(self):
        bn = BatchNorm(3, dtype=np.float64)
        bn.running_mean[...] = [1.0, -2.0, 0.5]
        bn.beta[...] = [0.0, -1.0, -0.25]
        bn.refresh_cache()
        np.testing.assert_array_equal(bn_relu_infer(bn, bn.running_mean[None].copy()), 0)

    def test_fused_matches_unfused(self):
        rng = np.random.default_rng(4)
        bn = BatchNorm(32)
        bn.gamma[...] = rng.normal(size=32)
        bn.beta[...] = rng.normal(size=32)
        bn.running_mean[...] = rng.normal(size=32)
        bn.running_var[...] = rng.random(32) * 3
        bn.refresh_cache()
        x = rng.normal(size=(50, 32)).astype(np.float32)
        g, bt, mu, var = (a.astype(np.float64) for a in (bn.gamma, bn.beta, bn.running_mean, bn.running_var))
        ref = np.maximum(g * (x - mu) / np.sqrt(var + bn.eps) + bt, 0)
        got = bn_relu_infer(bn, x.copy())
        np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-6)

    def test_stale_cache(self):
        bn = BatchNorm(3)
        with pytest.raises(InvalidCache):
            bn_relu_infer(bn, np.zeros((1, 3), np.float32))
        bn.refresh_cache()
        bn.gamma[0] = 2.0
        with pytest.raises(InvalidCache):
            bn_relu_infer(bn, np.zeros((1, 3), np.float32))


class TestDropout:
    def test_threshold(self):
        assert dropout_threshold(0.5) == 2**31

    def test_negative_inputs_zeroed(self):
        y, keep = dropout_relu(-np.ones((4, 8)), Mt19937(1))
        assert not y.any() and not keep.any()

    def test_inactive_is_relu(self):
        x = np.abs(np.random.default_rng(0).normal(size=(3, 5)))
        y, _ = dropout_relu(x, None, active=False)
        np.testing.assert_array_equal(y, x)

    def test_rule_against_raw_words(self):
        x = np.random.default_rng(5).normal(size=(6, 7))
        words = Mt19937(9).words(42).reshape(6, 7)
        y, keep = dropout_relu(x, Mt19937(9))
        expected = np.where((x > 0) & (words >= 2**31), x, 0)
        np.testing.assert_array_equal(y, expected)  # survivors are not rescaled
        np.testing.assert_array_equal(keep, expected != 0)

    def test_drop_fraction(self):
        _, keep = dropout_relu(np.ones(10**6), Mt19937(123))
        assert 0.497 <= 1 - keep.mean() <= 0.503


class TestAdam:
    def test_first_step_by_hand(self):
        p = np.array([0.0])
        opt = Adam([p], lr=1e-3, eps=1e-8)
        opt.step([np.array([1.0])])
        # m_hat = v_hat = 1 after bias correction
        assert p[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)

    def test_zero_gradient_keeps_param(self):
        p = np.array([0.25, -1.0])
        Adam([p]).step([np.zeros(2)])
        np.testing.assert_array_equal(p, [0.25, -1.0])

    def test_replicas_stay_identical(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = a.copy()
        oa, ob = Adam([a]), Adam([b])
        for _ in range(20):
            g = rng.normal(size=(3, 4))
            oa.step([g])
            adam_step([b], [g.copy()], ob)
        np.testing.assert_array_equal(a, b)

    def test_matches_textbook_update(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=5)
        ref = p.copy()
        m = np.zeros(5)
        v = np.zeros(5)
        opt = Adam([p], lr=0.01)
        for t in range(1, 6):
            g = rng.normal(size=5)
            opt.step([g])
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p, ref, rtol=1e-12)

    def test_shape_mismatch(self):
        opt = Adam([np.zeros(3)])
        with pytest.raises(ShapeMismatch):
            opt.step([np.zeros(4)])
        with pytest.raises(ShapeMismatch):
            opt.step([])
        with pytest.raises(ShapeMismatch):
            opt.load_state({"t": 1, "m0": np.zeros(2), "v0": np.zeros(2)})
