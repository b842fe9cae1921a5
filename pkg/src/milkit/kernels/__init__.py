"""Numeric kernel backends.

Two interchangeable implementations of the hot inner-loop kernels:

* ``_core`` — compiled Cython extension (matrix products go straight to BLAS
  dgemm, elementwise and Adam updates are fused C loops);
* ``_numpy`` — pure-Python/numpy fallback with identical signatures.

The compiled core is selected at import time when available, otherwise the
fallback. Set ``MILKIT_BACKEND=python`` or ``=cython`` to force a choice
(forcing an unavailable backend raises). ``use_backend`` rebinds the kernel
functions at runtime; modules that call ``kernels.matmul(...)`` through the
package namespace pick up the switch immediately.
"""

import os

from . import _numpy

_BACKENDS = {_numpy.BACKEND_NAME: _numpy}
try:
    from . import _core

    _BACKENDS[_core.BACKEND_NAME] = _core
except ImportError:
    _core = None

_KERNELS = [
    "matmul",
    "matmul_bwd",
    "tanh_fwd",
    "tanh_bwd",
    "relu_fwd",
    "relu_bwd",
    "softmax_fwd",
    "softmax_bwd",
    "add_bias_fwd",
    "add_bias_bwd",
    "reduce_sum_fwd",
    "reduce_sum_bwd",
    "reduce_mean_fwd",
    "reduce_mean_bwd",
    "reduce_max_fwd",
    "reduce_max_bwd",
    "adam_step",
]

BACKEND = None


def available_backends():
    return sorted(_BACKENDS)


def get_backend_module(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        ) from None


def use_backend(name):
    """Bind the package-level kernel functions to the named backend."""
    global BACKEND
    mod = get_backend_module(name)
    for fn in _KERNELS:
        globals()[fn] = getattr(mod, fn)
    BACKEND = name


_requested = os.environ.get("MILKIT_BACKEND", "").strip().lower()
if _requested:
    if _requested not in _BACKENDS:
        raise ImportError(
            f"MILKIT_BACKEND={_requested!r} but that backend is not available "
            f"(have: {available_backends()})"
        )
    use_backend(_requested)
else:
    use_backend("cython" if "cython" in _BACKENDS else "python")
