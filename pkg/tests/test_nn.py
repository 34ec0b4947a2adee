"""Dense-network engine tests, including the finite-difference gradient oracle."""

import numpy as np
import pytest

from gcl.nn import (
    DenseLayer,
    Network,
    bce_with_logits_loss,
    init_network,
    mean_row_l2_loss,
    row_distances,
    stable_sigmoid,
)


def ref_forward(net, x):
    """Straight-line reference evaluator: plain numpy, layer by layer.

    Independent of the kernel backends; returns (output, pre-activations).
    """
    zs = []
    a = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        z = a @ layer.weights + layer.bias
        zs.append(z)
        if layer.activation == "relu":
            a = np.maximum(z, 0.0)
        elif layer.activation == "sigmoid":
            a = 1.0 / (1.0 + np.exp(-z))
        else:
            a = z
    return a, zs


def finite_diff_grads(net, loss_fn, h=1e-4):
    """Central finite differences of ``loss_fn()`` w.r.t. every parameter."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, floor=1e-3):
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = np.max(np.abs(a - n) / denom)
        assert worst < rel, f"gradient mismatch: worst relative error {worst:.3e}"


def random_net(rng, dims, activations):
    """Seeded random net whose relu pre-activations stay away from the kink.

    Central differences are only valid away from the relu kink, so nets whose
    hidden pre-activations come within 1e-2 of zero are resampled.
    """
    for attempt in range(200):
        net = init_network(dims, activations, int(rng.integers(2**31)))
        x = rng.standard_normal((rng.integers(2, 9), dims[0]))
        _, zs = ref_forward(net, x)
        ok = all(
            np.abs(z).min() > 1e-2
            for z, layer in zip(zs, net.layers)
            if layer.activation == "relu"
        )
        if ok:
            return net, x
    raise AssertionError("could not sample a kink-free net")


class TestForward:
    def test_identity_layer_passthrough(self):
        net = Network([DenseLayer(np.eye(3), np.zeros(3), "identity")])
        x = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
        np.testing.assert_array_equal(net.forward(x), x)

    def test_relu_clamps(self):
        net = Network([DenseLayer([[2.0]], [1.0], "relu")])
        out = net.forward([[-3.0]])
        np.testing.assert_array_equal(out, [[0.0]])

    def test_matches_reference_chain(self):
        rng = np.random.default_rng(7)
        net = init_network([8, 6, 5, 3], ["relu", "sigmoid", "identity"], 11)
        x = rng.standard_normal((4, 8))
        expected, _ = ref_forward(net, x)
        np.testing.assert_allclose(net.forward(x), expected, rtol=1e-12)

    def test_dimension_mismatch_names_layer(self):
        net = init_network([4, 2], ["identity"], 0)
        with pytest.raises(ValueError, match="layer 0"):
            net.forward(np.zeros((3, 5)))

    def test_incompatible_layers_rejected(self):
        l0 = DenseLayer(np.zeros((4, 3)), np.zeros(3), "relu")
        l1 = DenseLayer(np.zeros((2, 1)), np.zeros(1), "identity")
        with pytest.raises(ValueError, match="layer 1"):
            Network([l0, l1])

    def test_forward_deterministic(self):
        rng = np.random.default_rng(3)
        net = init_network([6, 4, 2], ["relu", "sigmoid"], 5)
        x = rng.standard_normal((7, 6))
        a = net.forward(x)
        b = net.forward(x)
        assert np.array_equal(a, b)

    def test_shape_closure(self):
        rng = np.random.default_rng(9)
        for dims in ([3, 5, 2], [10, 4, 4, 1], [2, 7]):
            acts = ["relu"] * (len(dims) - 2) + ["sigmoid"]
            net = init_network(dims, acts, 1)
            b = int(rng.integers(1, 9))
            out = net.forward(rng.standard_normal((b, dims[0])))
            assert out.shape == (b, dims[-1])
            grads = net.backward(np.zeros_like(out))
            for g, p in zip(grads, net.parameters()):
                assert g.shape == p.shape


class TestBackward:
    def test_backward_before_forward_raises(self):
        net = init_network([3, 2], ["identity"], 0)
        with pytest.raises(RuntimeError, match="before forward"):
            net.backward(np.zeros((1, 2)))

    def test_zero_loss_grad_gives_zero_grads(self):
        rng = np.random.default_rng(2)
        net = init_network([5, 4, 3], ["relu", "identity"], 8)
        out = net.forward(rng.standard_normal((6, 5)))
        grads = net.backward(np.zeros_like(out))
        for g in grads:
            assert not g.any()

    def test_linear_least_squares_closed_form(self):
        # Single linear layer, squared error: dW = x^T (xW + b - y) * 2/n.
        rng = np.random.default_rng(4)
        x = rng.standard_normal((6, 3))
        y = rng.standard_normal((6, 2))
        net = init_network([3, 2], ["identity"], 13)
        pred = net.forward(x)
        _, grad = mean_row_l2_loss(pred, y, squared=True)
        grads = net.backward(grad)
        resid = pred - y
        np.testing.assert_allclose(grads[0], x.T @ resid * 2.0 / 6.0, rtol=1e-10)
        np.testing.assert_allclose(grads[1], resid.sum(axis=0) * 2.0 / 6.0, rtol=1e-10)

    @pytest.mark.parametrize("seed,acts", [
        (101, ["relu", "identity"]),
        (102, ["sigmoid", "identity"]),
        (103, ["identity", "relu"]),
    ])
    def test_reconstruction_grads_match_finite_differences(self, seed, acts):
        rng = np.random.default_rng(seed)
        net, x = random_net(rng, [5, 6, 5], acts)
        target = rng.standard_normal(x.shape) + x

        def loss_fn():
            return mean_row_l2_loss(net.forward(x), target)[0]

        _, grad = mean_row_l2_loss(net.forward(x), target)
        analytic = net.backward(grad)
        assert_grads_close(analytic, finite_diff_grads(net, loss_fn))

    def test_bce_grads_match_finite_differences(self):
        rng = np.random.default_rng(21)
        net, x = random_net(rng, [4, 5, 1], ["relu", "sigmoid"])
        labels = rng.integers(0, 2, size=(x.shape[0], 1)).astype(float)

        def loss_fn():
            net.forward(x)
            return bce_with_logits_loss(net.last_logits, labels)[0]

        net.forward(x)
        _, grad = bce_with_logits_loss(net.last_logits, labels)
        analytic = net.backward(grad, from_logits=True)
        assert_grads_close(analytic, finite_diff_grads(net, loss_fn))


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_network([6, 3, 2], ["relu", "sigmoid"], 42)
        b = init_network([6, 3, 2], ["relu", "sigmoid"], 42)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_bound_from_fan_formula(self):
        # dims [4, 2]: limit = sqrt(6 / (4 + 2)) = 1.0
        net = init_network([4, 2], ["identity"], 3)
        w = net.layers[0].weights
        assert np.all(np.abs(w) <= 1.0)
        assert not net.layers[0].bias.any()

    def test_different_seeds_differ(self):
        a = init_network([4, 2], ["identity"], 1)
        b = init_network([4, 2], ["identity"], 2)
        assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_too_few_dims_rejected(self):
        with pytest.raises(ValueError):
            init_network([4], [], 0)


class TestLosses:
    def test_row_distances_exact(self):
        pred = np.array([[0.0, 0.0], [3.0, 4.0]])
        target = np.zeros((2, 2))
        np.testing.assert_array_equal(row_distances(pred, target), [0.0, 5.0])

    def test_mean_row_l2_value(self):
        pred = np.array([[3.0, 4.0]])
        loss, _ = mean_row_l2_loss(pred, np.zeros((1, 2)))
        assert loss == 5.0

    def test_zero_residual_zero_gradient(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        loss, grad = mean_row_l2_loss(x, x.copy())
        assert loss == 0.0
        assert not grad.any()

    def test_include_mask_divides_by_retained(self):
        pred = np.array([[3.0, 4.0], [100.0, 0.0]])
        target = np.zeros((2, 2))
        loss, grad = mean_row_l2_loss(pred, target, include=[True, False])
        assert loss == 5.0
        assert not grad[1].any()

    def test_all_rows_excluded_rejected(self):
        with pytest.raises(ValueError, match="excluded"):
            mean_row_l2_loss(np.ones((2, 2)), np.zeros((2, 2)), include=[False, False])

    def test_bce_half_probability(self):
        # single sample, label 1, output 0.5 -> ln 2
        loss, _ = bce_with_logits_loss(np.array([[0.0]]), [1.0])
        assert loss == pytest.approx(np.log(2.0), rel=1e-12)

    def test_bce_matching_outputs_near_zero(self):
        logits = np.array([[40.0], [-40.0], [40.0]])
        loss, _ = bce_with_logits_loss(logits, [1.0, 0.0, 1.0])
        assert 0.0 <= loss < 1e-12

    def test_sigmoid_extremes_finite(self):
        z = np.array([[-1000.0, 0.0, 1000.0]])
        s = stable_sigmoid(z)
        np.testing.assert_allclose(s, [[0.0, 0.5, 1.0]], atol=1e-12)
