"""Dense kernels and elementwise nonlinearities (float64 throughout)."""
import numpy as np

from ..errors import InputError
from . import kernels


def matvec(M, v):
    M = np.asarray(M, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if M.ndim != 2 or v.ndim != 1 or M.shape[1] != v.shape[0]:
        raise InputError(f"matvec: cannot apply {M.shape} matrix to {v.shape} vector")
    return M @ v


def softmax_masked(scores, active):
    """Softmax over ``active`` indices of ``scores``; zero everywhere else."""
    return kernels.softmax_masked(scores, active)


def scaled_softplus(x, psi):
    """psi * log(1 + exp(x / psi)); ``psi`` must be positive."""
    if not psi > 0:
        raise InputError(f"scaled_softplus needs psi > 0, got {psi}")
    return kernels.scaled_softplus(float(x), float(psi))


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    return -softplus(-np.asarray(x, dtype=np.float64))


ACTIVATIONS = ("tanh", "logistic")


def activate(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "logistic":
        return sigmoid(x)
    raise InputError(f"unknown activation {name!r}")


def activation_grad_from_output(name, y):
    """Derivative of the activation expressed through its output."""
    if name == "tanh":
        return 1.0 - y * y
    if name == "logistic":
        return y * (1.0 - y)
    raise InputError(f"unknown activation {name!r}")
