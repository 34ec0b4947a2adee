"""RMSprop-with-momentum tests against a hand-coded scalar recurrence."""

import numpy as np
import pytest

from gcl.optim import RmsProp, rmsprop_step


def scalar_recurrence(grads, lr, momentum, smoothing=0.99, eps=1e-8, theta=0.0):
    """Reference: run the update rule directly on one scalar parameter."""
    sq = buf = 0.0
    trajectory = [theta]
    for g in grads:
        sq = smoothing * sq + (1.0 - smoothing) * g * g
        buf = momentum * buf + g / np.sqrt(sq + eps)
        theta = theta - lr * buf
        trajectory.append(theta)
    return trajectory


def test_zero_gradients_leave_params_unchanged():
    p = np.array([[1.0, -2.0], [0.5, 3.0]])
    before = p.copy()
    opt = RmsProp([p], lr=0.1, momentum=0.6)
    opt.step([np.zeros_like(p)])
    np.testing.assert_array_equal(p, before)


def test_quadratic_loss_strictly_decreases_100_steps():
    # theta0 = 0, minimizing (theta - 5)^2 with lr 0.01.
    theta = np.zeros((1, 1))
    opt = RmsProp([theta], lr=0.01, momentum=0.6)
    losses = [(theta[0, 0] - 5.0) ** 2]
    seen_grads = []
    for _ in range(100):
        g = 2.0 * (theta[0, 0] - 5.0)
        seen_grads.append(g)
        opt.step([np.array([[g]])])
        losses.append((theta[0, 0] - 5.0) ** 2)
    assert all(b < a for a, b in zip(losses, losses[1:]))
    # Trajectory matches the scalar recurrence exactly.
    ref = scalar_recurrence(seen_grads, lr=0.01, momentum=0.6)
    assert theta[0, 0] == pytest.approx(ref[-1], rel=1e-12)


def test_momentum_grows_update_on_repeated_gradient():
    theta = np.zeros(1)
    opt = RmsProp([theta], lr=0.01, momentum=0.6)
    opt.step([np.array([1.0])])
    first = abs(theta[0])
    prev = theta[0]
    opt.step([np.array([1.0])])
    second = abs(theta[0] - prev)
    assert second > first
    ref = scalar_recurrence([1.0, 1.0], lr=0.01, momentum=0.6)
    assert theta[0] == pytest.approx(ref[-1], rel=1e-12)


def test_matches_recurrence_on_random_gradients():
    rng = np.random.default_rng(17)
    grads = rng.standard_normal(50)
    theta = np.zeros(1)
    opt = RmsProp([theta], lr=0.003, momentum=0.6)
    for g in grads:
        opt.step([np.array([g])])
    ref = scalar_recurrence(grads, lr=0.003, momentum=0.6)
    assert theta[0] == pytest.approx(ref[-1], rel=1e-12)


def test_convergence_on_random_convex_quadratics():
    # a*(theta-c)^2 with a > 0: loss after 500 steps < loss at step 0 for lr <= 0.01.
    rng = np.random.default_rng(23)
    for _ in range(20):
        a = float(rng.uniform(0.1, 10.0))
        c = float(rng.uniform(-10.0, 10.0))
        lr = float(rng.uniform(1e-4, 0.01))
        theta = np.array([float(rng.uniform(-10.0, 10.0))])
        start = a * (theta[0] - c) ** 2
        if start == 0.0:
            continue
        opt = RmsProp([theta], lr=lr, momentum=0.6)
        for _ in range(500):
            opt.step([np.array([2.0 * a * (theta[0] - c)])])
        assert a * (theta[0] - c) ** 2 < start


def test_nonfinite_gradient_rejected():
    p = np.zeros(2)
    opt = RmsProp([p], lr=0.01)
    with pytest.raises(RuntimeError, match="non-finite"):
        opt.step([np.array([1.0, np.nan])])


def test_shape_mismatch_rejected():
    p = np.zeros((2, 2))
    opt = RmsProp([p], lr=0.01)
    with pytest.raises(ValueError):
        opt.step([np.zeros(3)])


def test_square_avg_nonnegative_invariant():
    rng = np.random.default_rng(5)
    p = rng.standard_normal((3, 4))
    opt = RmsProp([p], lr=0.01, momentum=0.6)
    for _ in range(50):
        opt.step([rng.standard_normal(p.shape)])
    assert np.all(opt.square_avg[0] >= 0.0)


def test_functional_step_requires_bound_params():
    p = np.zeros(2)
    opt = RmsProp([p], lr=0.01)
    rmsprop_step(opt, [p], [np.ones(2)])
    with pytest.raises(ValueError, match="bound"):
        rmsprop_step(opt, [np.zeros(2)], [np.ones(2)])
