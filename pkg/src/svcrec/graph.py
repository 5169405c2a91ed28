"""Dynamic service co-invocation graph.

Holds co-invocation counts ``A``, temporal attention ``S``, the current
service representations ``Z`` and per-service last-update times. Nodes are
integer indices into ``ids``; rows of ``A`` and ``S`` are dicts keyed by
neighbour index, so both stay sparse.
"""
from dataclasses import dataclass
import itertools
import json
import os
from types import MappingProxyType

import numpy as np

from .errors import InputError, IngestionError
from .numerics import kernels
from .numerics.io import read_embeddings, write_embeddings_bin


@dataclass(frozen=True, eq=False)
class CoInvocationEvent:
    """Services ``u`` and ``v`` co-invoked at time ``t`` (days).

    Equality and hashing ignore endpoint order; the stored order is kept
    because the intensity reads the pair in that order.
    """
    u: int
    v: int
    t: float

    def __post_init__(self):
        if self.u == self.v:
            raise InputError(f"self co-invocation of service {self.u}")
        if self.t < 0:
            raise InputError(f"negative event time {self.t}")

    def pair(self):
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)

    def __eq__(self, other):
        if not isinstance(other, CoInvocationEvent):
            return NotImplemented
        return self.pair() == other.pair() and self.t == other.t

    def __hash__(self):
        return hash((self.pair(), self.t))


@dataclass(frozen=True)
class GraphSnapshot:
    """Read-only copy of the graph at one instant."""
    ids: tuple
    A: MappingProxyType
    S: MappingProxyType
    Z: np.ndarray
    last_update: np.ndarray
    current_time: float


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


class GraphState:
    def __init__(self, ids, Z, last_update=None, current_time=0.0):
        self.ids = list(ids)
        self.index = {s: i for i, s in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise InputError("duplicate service ids")
        self.Z = np.array(Z, dtype=np.float64, copy=True)
        if self.Z.ndim != 2 or self.Z.shape[0] != len(self.ids):
            raise InputError(f"Z has shape {self.Z.shape} for {len(self.ids)} services")
        n = len(self.ids)
        self.A = [dict() for _ in range(n)]
        self.S = [dict() for _ in range(n)]
        if last_update is None:
            last_update = np.zeros(n)
        self.last_update = np.array(last_update, dtype=np.float64, copy=True)
        self.current_time = float(current_time)

    @property
    def n_services(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.Z.shape[1]

    def _check(self, s):
        if not isinstance(s, (int, np.integer)) or not 0 <= s < len(self.ids):
            raise InputError(f"unknown service {s!r}")

    def neighbors(self, s):
        """Sorted neighbour indices of ``s`` (entries with a positive count)."""
        self._check(s)
        return sorted(v for v, c in self.A[s].items() if c > 0)

    def attention_weights(self, s, nbrs):
        return np.array([self.S[s].get(r, 0.0) for r in nbrs])

    def apply_event_topology(self, event, lam):
        """Increment the co-invocation count and update both attention rows."""
        if not lam > 0:
            raise InputError(f"intensity must be positive, got {lam}")
        u, v = event.u, event.v
        self._check(u)
        self._check(v)
        pre_count = self.A[u].get(v, 0)
        pre_sizes = {u: len(self.A[u]), v: len(self.A[v])}
        self.A[u][v] = pre_count + 1
        self.A[v][u] = pre_count + 1
        existed = pre_count > 0
        for j, i in ((u, v), (v, u)):
            row = self.S[j]
            if i not in row:
                row[i] = 0.0
            keys = list(row)
            vals = np.fromiter(row.values(), dtype=np.float64, count=len(keys))
            b = 1.0 / len(self.A[j])
            bprime = 1.0 / pre_sizes[j] if pre_sizes[j] else 0.0
            kernels.attention_row_update(vals, keys.index(i), b, bprime, float(lam), existed)
            self.S[j] = dict(zip(keys, vals.tolist()))
        self.current_time = max(self.current_time, event.t)

    def snapshot(self):
        A = MappingProxyType({j: MappingProxyType(dict(r)) for j, r in enumerate(self.A) if r})
        S = MappingProxyType({j: MappingProxyType(dict(r)) for j, r in enumerate(self.S) if r})
        return GraphSnapshot(tuple(self.ids), A, S, _frozen(self.Z),
                             _frozen(self.last_update), self.current_time)

    def copy(self):
        out = GraphState(self.ids, self.Z, self.last_update, self.current_time)
        out.A = [dict(r) for r in self.A]
        out.S = [dict(r) for r in self.S]
        return out

    def topology_checkpoint(self):
        """Copy of (A, S, last_update, current_time, Z)."""
        return ([dict(r) for r in self.A], [dict(r) for r in self.S],
                self.last_update.copy(), self.current_time, self.Z.copy())

    def restore_topology(self, ckpt, with_z=False):
        A, S, last, now, Z = ckpt
        self.A = [dict(r) for r in A]
        self.S = [dict(r) for r in S]
        self.last_update = last.copy()
        self.current_time = now
        if with_z:
            self.Z = Z.copy()

    def assign(self, other):
        """Overwrite this state with a copy of ``other``."""
        self.ids = list(other.ids)
        self.index = dict(other.index)
        self.Z = other.Z.copy()
        self.A = [dict(r) for r in other.A]
        self.S = [dict(r) for r in other.S]
        self.last_update = other.last_update.copy()
        self.current_time = other.current_time

    def edges(self):
        """Yield (u, v, count, S[u][v], S[v][u]) for u < v."""
        for u, row in enumerate(self.A):
            for v in sorted(row):
                if u < v:
                    yield u, v, row[v], self.S[u].get(v, 0.0), self.S[v].get(u, 0.0)

    def save(self, path, z_path):
        """Write the JSON checkpoint plus Z as an embedding binary at ``z_path``.

        The Z reference is stored relative to the JSON file's directory.
        """
        write_embeddings_bin(z_path, self.ids, self.Z)
        doc = {
            "services": self.ids,
            "edges": [[self.ids[u], self.ids[v], c, su, sv] for u, v, c, su, sv in self.edges()],
            "Z": os.path.relpath(z_path, os.path.dirname(os.path.abspath(path))),
            "last_update": {s: float(t) for s, t in zip(self.ids, self.last_update)},
            "current_time": self.current_time,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path, z_path=None):
        with open(path) as fh:
            doc = json.load(fh)
        if z_path is None:
            z_path = os.path.join(os.path.dirname(os.path.abspath(path)), doc["Z"])
        zids, Z = read_embeddings(z_path)
        if zids != doc["services"]:
            raise IngestionError(f"{path}: Z rows do not match the service list")
        st = cls(doc["services"], Z, [doc["last_update"][s] for s in doc["services"]],
                 doc.get("current_time", 0.0))
        for su, sv, c, a_uv, a_vu in doc["edges"]:
            u, v = st.index[su], st.index[sv]
            st.A[u][v] = st.A[v][u] = int(c)
            st.S[u][v] = float(a_uv)
            st.S[v][u] = float(a_vu)
        return st


def generate_events(components, t):
    """All unordered pairs of a component set as events at ``t``, sorted by pair."""
    comps = sorted(set(int(c) for c in components))
    return [CoInvocationEvent(u, v, t) for u, v in itertools.combinations(comps, 2)]


def init_from_history(samples, ids, Z0):
    """Build the starting graph from the earliest requirement samples.

    Counts every co-invoked pair, gives each row of ``S`` uniform attention
    over its neighbours and stamps each service with its latest appearance.
    """
    state = GraphState(ids, Z0)
    n = len(state.ids)
    prev_t = -np.inf
    for smp in samples:
        if smp.timestamp < prev_t:
            raise InputError("history samples must be sorted by timestamp")
        prev_t = smp.timestamp
        for s in smp.services:
            if not isinstance(s, (int, np.integer)) or not 0 <= s < n:
                raise IngestionError(f"sample {smp.id}: service {s!r} not in registry")
        for u, v in itertools.combinations(sorted(set(smp.services)), 2):
            state.A[u][v] = state.A[u].get(v, 0) + 1
            state.A[v][u] = state.A[v].get(u, 0) + 1
        for s in smp.services:
            state.last_update[s] = max(state.last_update[s], smp.timestamp)
        state.current_time = max(state.current_time, smp.timestamp)
    for j in range(n):
        if state.A[j]:
            w = 1.0 / len(state.A[j])
            state.S[j] = {v: w for v in sorted(state.A[j])}
        state.A[j] = {v: state.A[j][v] for v in sorted(state.A[j])}
    return state
