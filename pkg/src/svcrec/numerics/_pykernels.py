"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same results (to rounding). ``kernels.py`` picks one at import.
"""
import math

import numpy as np

from ..errors import InputError

SOFTPLUS_LINEAR_CUTOFF = 30.0


def softmax_masked(scores, active):
    scores = np.asarray(scores, dtype=np.float64)
    active = np.asarray(active, dtype=np.intp)
    if active.size == 0:
        raise InputError("softmax_masked needs a nonempty active set")
    if active.min() < 0 or active.max() >= scores.shape[0]:
        raise InputError("active index out of range")
    out = np.zeros_like(scores)
    sub = scores[active]
    e = np.exp(sub - sub.max())
    out[active] = e / e.sum()
    return out


def scaled_softplus(x, psi):
    """psi * log(1 + exp(x / psi)), linear above x/psi > 30."""
    u = x / psi
    if u > SOFTPLUS_LINEAR_CUTOFF:
        return float(x)
    return float(psi * (max(u, 0.0) + math.log1p(math.exp(-abs(u)))))


def scaled_softplus_grad(x, psi):
    """Return (value, d/dx, d/dpsi)."""
    u = x / psi
    if u > SOFTPLUS_LINEAR_CUTOFF:
        return float(x), 1.0, 0.0
    sp = max(u, 0.0) + math.log1p(math.exp(-abs(u)))
    if u >= 0:
        sig = 1.0 / (1.0 + math.exp(-u))
    else:
        e = math.exp(u)
        sig = e / (1.0 + e)
    return float(psi * sp), sig, sp - u * sig


def attention_row_update(vals, pos, b, bprime, lam, existed):
    """In-place attention row step for one endpoint, then clamp and L1-normalise.

    ``vals`` holds the row over the node's (post-event) neighbour support and
    ``pos`` indexes the event partner in it.
    """
    if not existed:
        x = bprime - b
        nz = vals != 0.0
        nz[pos] = False
        vals[nz] -= x
    vals[pos] = b + lam
    np.maximum(vals, 0.0, out=vals)
    total = vals.sum()
    if total > 0.0:
        vals /= total
    else:
        vals[:] = 1.0 / vals.shape[0]


def max_aggregate(W_h, nbr_z, weights):
    """Per-coordinate max over neighbours of weights[r] * (W_h @ nbr_z[r]).

    Returns (h, argmax) where argmax[c] is the winning neighbour row for
    coordinate c (first one on ties).
    """
    q = (nbr_z @ W_h.T) * weights[:, None]
    arg = q.argmax(axis=0)
    return q[arg, np.arange(q.shape[1])], arg


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, t, clip):
    """One in-place Adam step on flat float64 arrays.

    ``clip <= 0`` disables clamping. Returns the largest absolute gradient
    entry actually fed into the moments.
    """
    g = np.clip(grad, -clip, clip) if clip > 0 else grad
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return float(np.abs(g).max()) if g.size else 0.0
