"""Adam with optional per-entry gradient clamping."""
import numpy as np

from ..errors import InputError
from . import kernels


class Adam:
    """Adaptive-moment optimizer over a dict of named float64 arrays.

    Parameters are updated in place. When ``clip`` is set every gradient
    entry is clamped to [-clip, clip] before entering the moments;
    ``max_effective_grad`` keeps the largest magnitude that went in on the
    last step, so callers can observe the clamp.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip=None):
        if clip is not None and clip <= 0:
            raise InputError("clip must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip = clip
        self.t = 0
        self.m = {k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()}
        self.v = {k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()}
        self.max_effective_grad = 0.0

    def step(self, params, grads):
        for k, p in params.items():
            if k not in self.m:
                raise InputError(f"optimizer has no state for {k!r}")
            g = grads[k]
            if p.shape != self.m[k].shape or np.shape(g) != p.shape:
                raise InputError(
                    f"shape mismatch for {k!r}: param {p.shape}, grad {np.shape(g)}, "
                    f"state {self.m[k].shape}")
        self.t += 1
        clip = float(self.clip) if self.clip is not None else 0.0
        mx = 0.0
        for k, p in params.items():
            if not p.flags.c_contiguous:
                raise InputError(f"parameter {k!r} must be C-contiguous")
            g = np.ascontiguousarray(grads[k], dtype=np.float64)
            mx = max(mx, kernels.adam_update(
                p.reshape(-1), g.reshape(-1), self.m[k].reshape(-1), self.v[k].reshape(-1),
                self.lr, self.beta1, self.beta2, self.eps, self.t, clip))
        self.max_effective_grad = mx
