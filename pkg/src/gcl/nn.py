"""Minimal dense-network engine.

Everything here operates on 2-D C-contiguous float64 arrays ("matrices"): a
batch is one matrix with one feature vector per row.  The engine covers
exactly what the training loop needs: fully connected layers with relu /
sigmoid / identity activations, reverse-mode gradients through the fixed
layer chain, fan-based uniform initialization, and the two batch losses
(mean per-row Euclidean reconstruction distance, binary cross entropy).

Hot operations are delegated to ``gcl._kernels`` which dispatches to the
compiled extension when available and to numpy otherwise.
"""

import numpy as np

from . import _kernels

ACTIVATIONS = ("identity", "relu", "sigmoid")

_ACT_CODE = {
    "identity": _kernels.IDENTITY,
    "relu": _kernels.RELU,
    "sigmoid": _kernels.SIGMOID,
}

# Guard added under the square root of the L2-distance gradient so a row with
# zero residual yields a zero gradient instead of 0/0.  Loss *values* are
# reported without the guard.
GRAD_GUARD = 1e-12


def as_matrix(x, name="input"):
    """Validate and return ``x`` as a C-contiguous float64 2-D array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def stable_sigmoid(z):
    """Elementwise logistic function, safe against exp overflow."""
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class DenseLayer:
    """One fully connected layer: activation(x @ weights + bias)."""

    def __init__(self, weights, bias, activation):
        self.weights = as_matrix(weights, "weights")
        self.bias = np.ascontiguousarray(bias, dtype=np.float64)
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weights.shape[1]:
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weights "
                f"{self.weights.shape}"
            )
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    @property
    def in_dim(self):
        return self.weights.shape[0]

    @property
    def out_dim(self):
        return self.weights.shape[1]


class Network:
    """A chain of dense layers with cached forward activations.

    ``forward`` caches per-layer inputs and outputs (plus the pre-activation
    of the final layer) so that ``backward`` can run without recomputation.
    The cache is overwritten by the next ``forward`` call.
    """

    def __init__(self, layers):
        if not layers:
            raise ValueError("network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ValueError(
                    f"layer {i} expects {layers[i].in_dim} inputs but layer "
                    f"{i - 1} emits {layers[i - 1].out_dim}"
                )
        self.layers = list(layers)
        self._inputs = None
        self._outputs = None
        self._logits = None

    @property
    def layer_dims(self):
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def parameters(self):
        """Flat parameter list: [w0, b0, w1, b1, ...]."""
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
        return params

    def forward(self, x):
        """Run the batch through the chain; returns the b-by-out_dim output."""
        x = as_matrix(x)
        if x.shape[1] != self.in_dim:
            raise ValueError(
                f"layer 0 expects {self.in_dim} input columns, got {x.shape[1]}"
            )
        inputs, outputs = [], []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            inputs.append(x)
            if i == last:
                # Final layer: keep the pre-activation so losses can work on
                # logits, then apply the activation separately.
                z = _kernels.dense_forward(
                    x, layer.weights, layer.bias, _kernels.IDENTITY
                )
                self._logits = z
                if layer.activation == "relu":
                    x = np.maximum(z, 0.0)
                elif layer.activation == "sigmoid":
                    x = stable_sigmoid(z)
                else:
                    x = z
            else:
                x = _kernels.dense_forward(
                    x, layer.weights, layer.bias, _ACT_CODE[layer.activation]
                )
            outputs.append(x)
        if not np.isfinite(x).all():
            raise RuntimeError("non-finite values in network output")
        self._inputs = inputs
        self._outputs = outputs
        return x

    @property
    def last_logits(self):
        """Pre-activation of the final layer from the latest forward pass."""
        if self._logits is None:
            raise RuntimeError("forward has not been run")
        return self._logits

    def backward(self, out_grad, from_logits=False):
        """Backpropagate a loss gradient through the cached forward pass.

        ``out_grad`` is d(loss)/d(output), or d(loss)/d(final pre-activation)
        when ``from_logits`` is true (used for the fused sigmoid + cross
        entropy path).  Returns gradients aligned with ``parameters()``.
        """
        if self._inputs is None:
            raise RuntimeError("backward called before forward")
        da = as_matrix(out_grad, "out_grad")
        if da.shape != self._outputs[-1].shape:
            raise ValueError(
                f"loss gradient shape {da.shape} does not match output "
                f"{self._outputs[-1].shape}"
            )
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            act = layer.activation
            if i == len(self.layers) - 1 and from_logits:
                act = "identity"
            dx, dw, db = _kernels.dense_backward(
                da,
                self._inputs[i],
                layer.weights,
                self._outputs[i],
                _ACT_CODE[act],
                i > 0,
            )
            grads[2 * i] = dw
            grads[2 * i + 1] = db
            da = dx
        return grads


def init_network(dims, activations, seed):
    """Build a network with uniform fan-scaled weights and zero biases.

    Weights for a layer with ``fan_in`` inputs and ``fan_out`` outputs are
    drawn from uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)), in layer
    order from a generator seeded with ``seed``, so results are reproducible
    bit for bit.
    """
    if len(dims) < 2:
        raise ValueError("dims must list at least an input and an output size")
    if len(activations) != len(dims) - 1:
        raise ValueError(
            f"need {len(dims) - 1} activations for {len(dims)} dims, "
            f"got {len(activations)}"
        )
    if any(d <= 0 for d in dims):
        raise ValueError(f"all dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Network(layers)


def row_distances(pred, target):
    """Plain per-row Euclidean distances (no gradient guard)."""
    return _kernels.row_l2(as_matrix(pred), as_matrix(target))


def mean_row_l2_loss(pred, target, include=None, squared=False):
    """Mean per-row Euclidean distance between ``pred`` and ``target``.

    ``include`` is an optional boolean row mask; excluded rows contribute
    nothing and the mean divides by the retained count.  Returns
    ``(loss, grad)`` with ``grad`` taken w.r.t. ``pred``.  With ``squared``
    the per-row term is the squared distance instead.
    """
    pred = as_matrix(pred, "pred")
    target = as_matrix(target, "target")
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    ss = np.einsum("ij,ij->i", diff, diff)
    if include is None:
        count = pred.shape[0]
    else:
        include = np.asarray(include, dtype=bool)
        count = int(include.sum())
        if count == 0:
            raise ValueError("all rows excluded from the loss")
    if squared:
        per_row = ss
        grad = (2.0 / count) * diff
    else:
        per_row = np.sqrt(ss)
        grad = diff / (np.sqrt(ss + GRAD_GUARD)[:, None] * count)
    if include is not None:
        per_row = np.where(include, per_row, 0.0)
        grad[~include] = 0.0
    loss = float(per_row.sum() / count)
    return loss, grad


def bce_with_logits_loss(logits, targets):
    """Mean binary cross entropy evaluated from pre-sigmoid outputs.

    Numerically stable for saturated outputs.  Returns ``(loss, grad)`` with
    ``grad`` taken w.r.t. the logits, so the caller backpropagates with
    ``from_logits=True``.
    """
    z = as_matrix(logits, "logits")
    t = np.asarray(targets, dtype=np.float64).reshape(z.shape)
    # softplus(z) - t*z == -[t*log(p) + (1-t)*log(1-p)] for p = sigmoid(z)
    loss = float(np.mean(np.logaddexp(0.0, z) - t * z))
    grad = (stable_sigmoid(z) - t) / z.size
    return loss, grad
