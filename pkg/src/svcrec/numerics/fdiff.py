"""Central finite differences, used as the oracle for hand-derived gradients."""
import math

import numpy as np

from ..errors import InputError, OracleError


def finite_diff_grad(loss_fn, params, h=1e-5):
    """Numerical gradient of ``loss_fn(params)`` for every entry of every array.

    ``params`` is a dict of float64 arrays; entries are perturbed in place and
    restored afterwards.
    """
    if not h > 0:
        raise InputError("step h must be positive")
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn(params))
            flat[i] = orig - h
            fm = float(loss_fn(params))
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise OracleError(f"non-finite loss while perturbing {name}[{i}]")
            gflat[i] = (fp - fm) / (2.0 * h)
        out[name] = g
    return out


def max_relative_error(analytic, numeric):
    """Max entrywise error scaled by the tensor's largest gradient magnitude."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)
