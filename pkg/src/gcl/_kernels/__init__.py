"""Backend selection for the hot training kernels.

The compiled Cython extension is preferred when it has been built; otherwise
the numpy implementation is used.  Set ``GCL_BACKEND=numpy`` or
``GCL_BACKEND=native`` to force one (``native`` raises if the extension is
missing).  Both backends expose the same functions and agree numerically; see
``benchmarks/bench_backends.py`` for a speed comparison.
"""

import os

from . import numpy_backend

IDENTITY = numpy_backend.IDENTITY
RELU = numpy_backend.RELU
SIGMOID = numpy_backend.SIGMOID


def load_backend(name):
    """Return the backend module for ``name`` ('numpy' or 'native')."""
    if name == "numpy":
        return numpy_backend
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown backend {name!r} (expected 'numpy' or 'native')")


def _select():
    forced = os.environ.get("GCL_BACKEND", "").strip().lower()
    if forced:
        return load_backend(forced)
    try:
        from . import _native

        return _native
    except ImportError:
        return numpy_backend


_impl = _select()

BACKEND = _impl.NAME
dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
rmsprop_update = _impl.rmsprop_update
row_l2 = _impl.row_l2
