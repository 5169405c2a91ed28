"""Supervised head: align requirement vectors, score against services, rank.

``W_psi`` maps requirement space (d_r) to service space (d_s). With the
transform switched off ``W_psi``/``b_psi`` are None and ``W_lam`` is
d_s x d_r, scoring raw requirement vectors directly.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import InputError
from .numerics import log_sigmoid, matvec, sigmoid


@dataclass
class RecParams:
    W_psi: np.ndarray
    b_psi: np.ndarray
    W_lam: np.ndarray

    @property
    def uses_transform(self):
        return self.W_psi is not None

    @property
    def d_r(self):
        """Requirement dimension the head accepts."""
        return (self.W_psi if self.uses_transform else self.W_lam).shape[1]

    @classmethod
    def init(cls, d_r, d_s, rng, transform=True):
        if transform:
            return cls(rng.normal(0.0, 1.0 / math.sqrt(d_r), size=(d_s, d_r)), np.zeros(d_s),
                       rng.normal(0.0, 1.0 / math.sqrt(d_s), size=(d_s, d_s)))
        return cls(None, None, rng.normal(0.0, 1.0 / math.sqrt(d_r), size=(d_s, d_r)))

    def tensors(self):
        if self.uses_transform:
            return {"W_psi": self.W_psi, "b_psi": self.b_psi, "W_lam": self.W_lam}
        return {"W_lam": self.W_lam}

    def copy(self):
        return RecParams(None if self.W_psi is None else self.W_psi.copy(),
                         None if self.b_psi is None else self.b_psi.copy(), self.W_lam.copy())

    def load_tensors(self, tensors):
        for k, cur in self.tensors().items():
            if k not in tensors:
                raise InputError(f"tensor {k} missing from checkpoint")
            if tensors[k].shape != cur.shape:
                raise InputError(f"tensor {k}: expected shape {cur.shape}, got {tensors[k].shape}")
            cur[...] = tensors[k]


@dataclass(frozen=True)
class ScoredService:
    service: int
    score: float
    prob: float


def transform(params, v_r):
    if not params.uses_transform:
        return np.asarray(v_r, dtype=np.float64)
    return matvec(params.W_psi, v_r) + params.b_psi


def match_score(params, aligned_r, z_s):
    aligned_r = np.asarray(aligned_r, dtype=np.float64)
    z_s = np.asarray(z_s, dtype=np.float64)
    if z_s.shape != (params.W_lam.shape[0],):
        raise InputError(f"service vector of shape {z_s.shape}, expected ({params.W_lam.shape[0]},)")
    return float(z_s @ matvec(params.W_lam, aligned_r))


def match_prob(score):
    return sigmoid(score)


def sample_negatives(positives, universe, rng, factor=6):
    """Uniform draw without replacement of up to ``factor * |C+|`` non-components."""
    pos = set(positives)
    pool = sorted(set(universe) - pos)
    if not pool:
        raise InputError("no candidate negatives: universe is covered by the positives")
    k = min(factor * len(pos), len(pool))
    picked = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in picked]


def _labelled(positives, negatives):
    pos, neg = list(positives), list(negatives)
    if set(pos) & set(neg):
        raise InputError("positive and negative sets overlap")
    ids = np.array(pos + neg, dtype=np.intp)
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return ids, y


def supervised_loss(params, v_r, Z, positives, negatives):
    """Binary cross-entropy over C+ and C-; returns (loss, per-pair probabilities)."""
    ids, y = _labelled(positives, negatives)
    x = Z[ids] @ matvec(params.W_lam, transform(params, v_r))
    loss = -float(np.sum(y * log_sigmoid(x) + (1.0 - y) * log_sigmoid(-x)))
    return loss, sigmoid(x)


def supervised_grads(params, v_r, Z, positives, negatives):
    """Return (loss, grads) for the head parameters; Z is a constant."""
    ids, y = _labelled(positives, negatives)
    a = transform(params, v_r)
    Zc = Z[ids]
    x = Zc @ (params.W_lam @ a)
    loss = -float(np.sum(y * log_sigmoid(x) + (1.0 - y) * log_sigmoid(-x)))
    u = Zc.T @ (sigmoid(x) - y)
    grads = {"W_lam": np.outer(u, a)}
    if params.uses_transform:
        da = params.W_lam.T @ u
        grads["W_psi"] = np.outer(da, np.asarray(v_r, dtype=np.float64))
        grads["b_psi"] = da
    return loss, grads


def score_all(params, v_r, Z):
    return Z @ matvec(params.W_lam, transform(params, v_r))


def rank_services(params, v_r, Z, N, exclude=()):
    """Top-N services by score, ties broken by ascending index."""
    if N < 1:
        raise InputError("N must be >= 1")
    if Z.shape[0] == 0:
        raise InputError("no services to rank")
    scores = score_all(params, v_r, Z)
    order = np.lexsort((np.arange(len(scores)), -scores))
    excl = set(exclude)
    out = []
    for i in order:
        if int(i) in excl:
            continue
        out.append(ScoredService(int(i), float(scores[i]), float(sigmoid(scores[i]))))
        if len(out) == N:
            break
    return out
