"""RMSprop with momentum.

Update rule per parameter tensor, matching the common formulation where the
momentum buffer accumulates the preconditioned gradient:

    square_avg   <- smoothing * square_avg + (1 - smoothing) * g^2
    momentum_buf <- momentum * momentum_buf + g / sqrt(square_avg + eps)
    param        <- param - lr * momentum_buf
"""

import numpy as np

from . import _kernels


class RmsProp:
    """Optimizer state bound to a fixed list of parameter tensors."""

    def __init__(self, params, lr, momentum=0.0, smoothing=0.99, eps=1e-8):
        if lr < 0 or not (0.0 <= smoothing < 1.0) or eps <= 0:
            raise ValueError("invalid RMSprop hyperparameters")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.smoothing = float(smoothing)
        self.eps = float(eps)
        self.params = list(params)
        self.square_avg = [np.zeros_like(p) for p in self.params]
        self.momentum_buf = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        """Apply one update in place; grads align with the parameter list."""
        if len(grads) != len(self.params):
            raise ValueError(
                f"got {len(grads)} gradients for {len(self.params)} parameters"
            )
        for g in grads:
            if not np.isfinite(g).all():
                raise RuntimeError(
                    "non-finite gradient entries (training diverged)"
                )
        for p, g, sq, mom in zip(
            self.params, grads, self.square_avg, self.momentum_buf
        ):
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{p.shape}"
                )
            _kernels.rmsprop_update(
                p,
                np.ascontiguousarray(g, dtype=np.float64),
                sq,
                mom,
                self.lr,
                self.momentum,
                self.smoothing,
                self.eps,
            )

    def state_arrays(self):
        """Accumulators in parameter order, for checkpointing."""
        return list(self.square_avg), list(self.momentum_buf)


def rmsprop_step(state, params, grads):
    """Functional form: one update of ``params`` under ``state``."""
    if state.params is not params and any(
        a is not b for a, b in zip(state.params, params)
    ):
        raise ValueError("state is bound to a different parameter list")
    state.step(grads)
    return params
