"""Layer forward/backward checks against finite differences and hand cases."""

import math

import numpy as np
import pytest

from rtfed.nn import (
    BatchNorm,
    Concat,
    ConfigError,
    Conv2D,
    Conv3D,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    Relu,
    Sequential,
    ShapeError,
    grad_check,
    softmax_cross_entropy,
)


def fd_input_grad(fn, x, eps=1e-5):
    """Central differences of a scalar-valued fn w.r.t. the input array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        lp = fn(x)
        flat[i] = orig - eps
        lm = fn(x)
        flat[i] = orig
        gflat[i] = (lp - lm) / (2 * eps)
    return g


class TestDense:
    def test_identity_weights(self):
        layer = Dense("d", 2, 2, dtype=np.float64)
        layer.params["w"] = np.eye(2)
        out, _ = layer.forward(np.array([[3.0, 5.0]]))
        np.testing.assert_array_equal(out, [[3.0, 5.0]])

    def test_row_sum_plus_bias(self):
        layer = Dense("d", 2, 1, dtype=np.float64)
        layer.params["w"] = np.array([[1.0], [1.0]])
        layer.params["b"] = np.array([1.0])
        out, _ = layer.forward(np.array([[2.0, 3.0]]))
        np.testing.assert_array_equal(out, [[6.0]])

    def test_shape_mismatch_names_both_shapes(self):
        layer = Dense("d", 3, 2, dtype=np.float64)
        with pytest.raises(ShapeError, match=r"\(1, 4\).*\(3, 2\)"):
            layer.forward(np.ones((1, 4)))

    def test_grads_match_finite_differences(self):
        rng = np.random.default_rng(7)
        layer = Dense("d", 4, 3, dtype=np.float64)
        layer.params["w"] = rng.standard_normal((4, 3))
        layer.params["b"] = rng.standard_normal(3)
        net = Sequential([layer])
        x = rng.standard_normal((2, 4))
        labels = np.array([0, 2])
        assert grad_check(net, x, labels) < 1e-6

    def test_input_grad_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        layer = Dense("d", 4, 3, dtype=np.float64)
        layer.params["w"] = rng.standard_normal((4, 3))
        x = rng.standard_normal((2, 4))
        labels = np.array([1, 0])

        def loss_of(xv):
            out, _ = layer.forward(xv)
            loss, _, _ = softmax_cross_entropy(out, labels)
            return loss

        out, cache = layer.forward(x)
        _, dlogits, _ = softmax_cross_entropy(out, labels)
        dx, _ = layer.backward(dlogits, cache)
        np.testing.assert_allclose(dx, fd_input_grad(loss_of, x), atol=1e-8)


class TestConv:
    def test_ones_kernel_counts_neighbours(self):
        layer = Conv2D("c", 1, 1, dtype=np.float64)
        layer.params["w"] = np.ones((1, 1, 3, 3))
        out, _ = layer.forward(np.ones((1, 1, 3, 3)))
        assert out[0, 0, 1, 1] == 9.0
        for i, j in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            assert out[0, 0, i, j] == 4.0

    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(0)
        layer = Conv2D("c", 1, 1, dtype=np.float64)
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        layer.params["w"] = w
        x = rng.standard_normal((2, 1, 5, 4))
        out, _ = layer.forward(x)
        np.testing.assert_allclose(out, x)

    def test_channel_mismatch(self):
        layer = Conv2D("c", 2, 1)
        with pytest.raises(ShapeError, match="channel"):
            layer.forward(np.ones((1, 3, 4, 4), dtype=np.float32))

    def test_conv3d_grads_match_finite_differences(self):
        rng = np.random.default_rng(11)
        layer = Conv3D("c", 2, 3, dtype=np.float64)
        layer.params["w"] = 0.3 * rng.standard_normal((3, 2, 3, 3, 3))
        layer.params["b"] = 0.1 * rng.standard_normal(3)
        net = Sequential([layer, Flatten("f")])
        x = rng.standard_normal((1, 2, 4, 4, 4))
        labels = np.array([rng.integers(3 * 4 * 4 * 4)])
        assert grad_check(net, x, labels) < 1e-4

    def test_conv2d_grads_match_finite_differences(self):
        rng = np.random.default_rng(12)
        layer = Conv2D("c", 2, 2, dtype=np.float64)
        layer.params["w"] = 0.3 * rng.standard_normal((2, 2, 3, 3))
        layer.params["b"] = 0.1 * rng.standard_normal(2)
        net = Sequential([layer, Flatten("f")])
        x = rng.standard_normal((2, 2, 4, 4))
        labels = np.array([3, 17])
        assert grad_check(net, x, labels) < 1e-4

    def test_conv2d_input_grad(self):
        rng = np.random.default_rng(13)
        layer = Conv2D("c", 2, 2, dtype=np.float64)
        layer.params["w"] = 0.3 * rng.standard_normal((2, 2, 3, 3))
        x = rng.standard_normal((1, 2, 4, 4))
        labels = np.array([5])

        def loss_of(xv):
            out, _ = layer.forward(xv)
            loss, _, _ = softmax_cross_entropy(out.reshape(1, -1), labels)
            return loss

        out, cache = layer.forward(x)
        _, dlogits, _ = softmax_cross_entropy(out.reshape(1, -1), labels)
        dx, _ = layer.backward(dlogits.reshape(out.shape), cache)
        np.testing.assert_allclose(dx, fd_input_grad(loss_of, x), atol=1e-7)


class TestMaxPool:
    def test_two_by_two(self):
        layer = MaxPool("p", (2, 2))
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out, _ = layer.forward(x)
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 4.0

    def test_tie_breaks_to_first_element(self):
        layer = MaxPool("p", (2, 2))
        x = np.ones((1, 1, 4, 4))
        out, cache = layer.forward(x)
        dout = np.ones_like(out)
        dx, _ = layer.backward(dout, cache)
        expected = np.zeros((1, 1, 4, 4))
        expected[0, 0, 0::2, 0::2] = 1.0
        np.testing.assert_array_equal(dx, expected)

    def test_gradient_mass_conserved(self):
        rng = np.random.default_rng(5)
        layer = MaxPool("p", (2, 2))
        x = rng.standard_normal((1, 1, 4, 4))
        out, cache = layer.forward(x)
        dout = np.ones_like(out)
        dx, _ = layer.backward(dout, cache)
        assert dx.sum() == pytest.approx(out.size)  # one unit per window

    def test_non_divisible_dims_rejected(self):
        layer = MaxPool("p", (2, 2))
        with pytest.raises(ConfigError, match="divisible"):
            layer.forward(np.ones((1, 1, 5, 4)))

    def test_3d_backward_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        layer = MaxPool("p", (2, 2, 2))
        x = rng.standard_normal((1, 2, 4, 4, 4))
        labels = np.array([7])

        def loss_of(xv):
            out, _ = layer.forward(xv)
            loss, _, _ = softmax_cross_entropy(out.reshape(1, -1), labels)
            return loss

        out, cache = layer.forward(x)
        _, dlogits, _ = softmax_cross_entropy(out.reshape(1, -1), labels)
        dx, _ = layer.backward(dlogits.reshape(out.shape), cache)
        np.testing.assert_allclose(dx, fd_input_grad(loss_of, x), atol=1e-7)


class TestBatchNorm:
    def test_normalizes_to_zero_mean_unit_var(self):
        rng = np.random.default_rng(8)
        layer = BatchNorm("bn", 3, dtype=np.float64)
        x = rng.standard_normal((16, 3, 5, 5)) * 4.0 + 2.0
        out, _ = layer.forward(x, mode="train")
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-4)

    def test_zero_variance_input_gives_beta(self):
        layer = BatchNorm("bn", 2, dtype=np.float64)
        layer.params["gamma"] = np.full(2, 2.0)
        layer.params["beta"] = np.full(2, 3.0)
        x = np.full((4, 2), 7.0)
        out, _ = layer.forward(x, mode="train")
        np.testing.assert_allclose(out, 3.0, atol=1e-6)

    def test_batch_of_one_rejected_in_train(self):
        layer = BatchNorm("bn", 2)
        with pytest.raises(ConfigError, match="batch"):
            layer.forward(np.ones((1, 2), dtype=np.float32), mode="train")

    def test_infer_uses_running_stats(self):
        layer = BatchNorm("bn", 1, dtype=np.float64)
        layer.buffers["running_mean"] = np.array([10.0])
        layer.buffers["running_var"] = np.array([4.0])
        out, _ = layer.forward(np.array([[12.0]]), mode="infer")
        np.testing.assert_allclose(out, [[2.0 / math.sqrt(4.0 + 1e-5)]])

    def test_running_stats_momentum_update(self):
        layer = BatchNorm("bn", 1, dtype=np.float64)
        x = np.array([[1.0], [3.0]])
        layer.forward(x, mode="train")
        np.testing.assert_allclose(layer.buffers["running_mean"], [0.9 * 0.0 + 0.1 * 2.0])
        np.testing.assert_allclose(layer.buffers["running_var"], [0.9 * 1.0 + 0.1 * 1.0])

    def test_grads_match_finite_differences(self):
        rng = np.random.default_rng(9)
        layer = BatchNorm("bn", 3, dtype=np.float64)
        layer.params["gamma"] = 1.0 + 0.2 * rng.standard_normal(3)
        layer.params["beta"] = 0.2 * rng.standard_normal(3)
        net = Sequential([layer, Flatten("f")])
        x = rng.standard_normal((4, 3, 2, 2))
        labels = np.array([1, 5, 0, 9])
        assert grad_check(net, x, labels) < 1e-4

    def test_input_grad_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        layer = BatchNorm("bn", 2, dtype=np.float64)
        x = rng.standard_normal((6, 2))
        labels = np.array([0, 1, 1, 0, 1, 0])

        def loss_of(xv):
            out, _ = layer.forward(xv, mode="train")
            loss, _, _ = softmax_cross_entropy(out, labels)
            return loss

        out, cache = layer.forward(x, mode="train")
        _, dlogits, _ = softmax_cross_entropy(out, labels)
        dx, _ = layer.backward(dlogits, cache)
        np.testing.assert_allclose(dx, fd_input_grad(loss_of, x), atol=1e-7)


class TestDropout:
    def test_rate_zero_is_identity(self):
        layer = Dropout("do", 0.0)
        x = np.arange(12.0).reshape(3, 4)
        for mode in ("train", "infer"):
            out, _ = layer.forward(x, mode=mode, rng=np.random.default_rng(0))
            np.testing.assert_array_equal(out, x)

    def test_infer_is_identity(self):
        layer = Dropout("do", 0.7)
        x = np.arange(6.0).reshape(2, 3)
        out, _ = layer.forward(x, mode="infer")
        np.testing.assert_array_equal(out, x)

    def test_rate_one_rejected(self):
        with pytest.raises(ConfigError):
            Dropout("do", 1.0)

    def test_mask_deterministic_in_seed(self):
        layer = Dropout("do", 0.5)
        x = np.ones((4, 4))
        a, _ = layer.forward(x, mode="train", rng=np.random.default_rng(42))
        b, _ = layer.forward(x, mode="train", rng=np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_inverted_scaling_preserves_mean(self):
        # law of large numbers: E[out] == E[in] for inverted dropout
        layer = Dropout("do", 0.25)
        x = np.ones(100_000)
        out, _ = layer.forward(x, mode="train", rng=np.random.default_rng(1))
        assert 0.99 <= out.mean() <= 1.01


class TestConcat:
    def test_forward_joins_and_backward_splits(self):
        rng = np.random.default_rng(30)
        xs = [rng.standard_normal((3, 2)), rng.standard_normal((3, 5))]
        layer = Concat("cat")
        out, cache = layer.forward(xs)
        assert out.shape == (3, 7)
        np.testing.assert_array_equal(out[:, :2], xs[0])
        dout = rng.standard_normal((3, 7))
        parts, _ = layer.backward(dout, cache)
        np.testing.assert_array_equal(parts[0], dout[:, :2])
        np.testing.assert_array_equal(parts[1], dout[:, 2:])

    def test_single_input_passthrough(self):
        x = np.ones((2, 4))
        layer = Concat("cat")
        out, cache = layer.forward([x])
        np.testing.assert_array_equal(out, x)
        parts, _ = layer.backward(out, cache)
        assert len(parts) == 1


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_loss_is_log_k(self):
        logits = np.zeros((3, 7))
        loss, _, probs = softmax_cross_entropy(logits, np.array([0, 3, 6]))
        assert loss == pytest.approx(math.log(7.0), abs=1e-9)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_saturated_correct_prediction(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 50.0
        loss, _, _ = softmax_cross_entropy(logits, np.array([2]))
        assert loss < 1e-9

    def test_hand_computed_value(self):
        # -ln(e^3 / (e^1 + e^2 + e^3))
        logits = np.array([[1.0, 2.0, 3.0]])
        loss, _, _ = softmax_cross_entropy(logits, np.array([2]))
        expected = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
        assert loss == pytest.approx(expected, abs=1e-9)
        assert loss == pytest.approx(0.407606, abs=1e-6)

    def test_stable_for_large_logits(self):
        logits = np.array([[1000.0, 0.0]])
        loss, grad, probs = softmax_cross_entropy(logits, np.array([0]))
        assert np.isfinite(loss) and np.isfinite(grad).all()
        assert probs[0, 0] == pytest.approx(1.0)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="range"):
            softmax_cross_entropy(np.zeros((1, 3)), np.array([3]))

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((3, 4))
        labels = np.array([0, 2, 3])

        def loss_of(lv):
            loss, _, _ = softmax_cross_entropy(lv, labels)
            return loss

        _, grad, _ = softmax_cross_entropy(logits, labels)
        np.testing.assert_allclose(grad, fd_input_grad(loss_of, logits), atol=1e-9)


class TestGradCheckFragments:
    def test_pure_linear_fragment(self):
        rng = np.random.default_rng(20)
        d1 = Dense("d1", 5, 4, dtype=np.float64)
        d1.params["w"] = rng.standard_normal((5, 4))
        d1.params["b"] = rng.standard_normal(4)
        net = Sequential([d1])
        x = rng.standard_normal((3, 5))
        assert grad_check(net, x, np.array([0, 1, 3])) < 1e-8

    def test_dense_relu_softmax_fragment(self):
        rng = np.random.default_rng(21)
        d1 = Dense("d1", 5, 6, dtype=np.float64)
        d1.params["w"] = rng.standard_normal((5, 6))
        d1.params["b"] = 0.5 + 0.1 * rng.standard_normal(6)  # keep away from kinks
        d2 = Dense("d2", 6, 3, dtype=np.float64)
        d2.params["w"] = rng.standard_normal((6, 3))
        net = Sequential([d1, Relu("r1"), d2])
        x = rng.standard_normal((2, 5))
        assert grad_check(net, x, np.array([2, 0])) < 1e-5

    def test_conv_block_fragment(self):
        rng = np.random.default_rng(22)
        conv = Conv2D("c1", 1, 2, dtype=np.float64)
        conv.params["w"] = 0.4 * rng.standard_normal((2, 1, 3, 3))
        conv.params["b"] = 0.1 * rng.standard_normal(2)
        bn = BatchNorm("bn1", 2, dtype=np.float64)
        bn.params["gamma"] = 1.0 + 0.1 * rng.standard_normal(2)
        head = Dense("out", 2 * 2 * 2, 3, dtype=np.float64)
        head.params["w"] = rng.standard_normal((8, 3))
        net = Sequential(
            [conv, bn, Relu("r1"), MaxPool("p1", (2, 2)), Flatten("f"), head]
        )
        x = rng.standard_normal((2, 1, 4, 4))
        assert grad_check(net, x, np.array([1, 2])) < 1e-4

    def test_dropout_frozen_mask(self):
        rng = np.random.default_rng(23)
        d1 = Dense("d1", 4, 4, dtype=np.float64)
        d1.params["w"] = rng.standard_normal((4, 4))
        net = Sequential([d1, Dropout("do", 0.5), Dense("d2", 4, 2, dtype=np.float64)])
        net.layers[2].params["w"] = rng.standard_normal((4, 2))
        x = rng.standard_normal((2, 4))
        err = grad_check(
            net, x, np.array([0, 1]), rng_factory=lambda: np.random.default_rng(99)
        )
        assert err < 1e-6
