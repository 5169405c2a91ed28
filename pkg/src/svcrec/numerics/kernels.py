"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback. Both expose the same functions, see ``_pykernels``.
"""
from . import _pykernels

try:
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:  # extension not built
    _impl = _pykernels
    BACKEND = "python"

softmax_masked = _impl.softmax_masked
scaled_softplus = _impl.scaled_softplus
scaled_softplus_grad = _impl.scaled_softplus_grad
attention_row_update = _impl.attention_row_update
max_aggregate = _impl.max_aggregate
adam_update = _impl.adam_update


def available_backends():
    """Map backend name -> kernel module, for tests and benchmarks."""
    out = {"python": _pykernels}
    if BACKEND == "cython":
        out["cython"] = _impl
    return out
