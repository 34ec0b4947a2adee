"""Pure-numpy implementations of the hot training kernels.

This module mirrors the API of the compiled extension ``gcl._kernels._native``
and is used as a fallback when the extension is not built.  All functions
operate on C-contiguous float64 arrays and are deterministic for fixed inputs.
"""

import numpy as np

IDENTITY = 0
RELU = 1
SIGMOID = 2

NAME = "numpy"


def _sigmoid_inplace(z):
    # Branch on sign so exp never overflows.
    pos = z >= 0.0
    neg = ~pos
    z[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    z[neg] = ez / (1.0 + ez)
    return z


def dense_forward(x, w, b, act):
    """Fused dense layer: activation(x @ w + b)."""
    z = x @ w
    z += b
    if act == RELU:
        np.maximum(z, 0.0, out=z)
    elif act == SIGMOID:
        _sigmoid_inplace(z)
    return z


def dense_backward(da, x, w, a, act, need_dx):
    """Gradients of a dense layer from the gradient w.r.t. its output.

    ``a`` is the cached post-activation output; the activation derivative is
    recovered from it (relu mask from a > 0, sigmoid from a(1-a)).  Returns
    ``(dx, dw, db)`` with ``dx`` None when ``need_dx`` is false.
    """
    if act == RELU:
        dz = da * (a > 0.0)
    elif act == SIGMOID:
        dz = da * a * (1.0 - a)
    else:
        dz = da
    dw = x.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ w.T if need_dx else None
    return dx, dw, db


def rmsprop_update(param, grad, square_avg, momentum_buf, lr, momentum, smoothing, eps):
    """One in-place RMSprop-with-momentum step on a single parameter tensor."""
    square_avg *= smoothing
    square_avg += (1.0 - smoothing) * grad * grad
    momentum_buf *= momentum
    momentum_buf += grad / np.sqrt(square_avg + eps)
    param -= lr * momentum_buf


def row_l2(x, t):
    """Per-row Euclidean distance between two b-by-d matrices."""
    d = x - t
    return np.sqrt(np.einsum("ij,ij->i", d, d))
