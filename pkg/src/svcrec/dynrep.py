"""Event-driven service representation learner.

Each co-invocation event updates both endpoint representations from three
terms (neighbour aggregation, self-propagation, elapsed time) and scores the
pair with a scaled-softplus intensity. Training minimises the negative
log-intensity of observed events plus a survival term over sampled
non-events.

Gradients use single-step truncation: a representation that was produced
by an update earlier in the *current* batch is a differentiable function of
the parameters through that one update; everything before it (the inputs
to that update, older representations) is constant. ``BatchTrace`` records
exactly what is needed to recompute and differentiate that function.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InputError, InvariantError, OutOfOrderEventError, SamplerExhaustedError
from .graph import CoInvocationEvent
from .numerics import activate, activation_grad_from_output, kernels, sigmoid, softmax_masked

NONEVENT_FORMS = ("survival", "paper-literal")
PARAM_NAMES = ("W_a", "W_rec", "W_t", "W_h", "rho", "omega")


@dataclass
class DyRepParams:
    W_a: np.ndarray
    W_rec: np.ndarray
    W_t: np.ndarray
    W_h: np.ndarray
    rho: np.ndarray  # shape (1,); psi = softplus(rho)
    omega: np.ndarray
    activation: str = "tanh"
    time_scale: float = 30.0

    @property
    def dim(self):
        return self.W_rec.shape[0]

    @property
    def psi(self):
        return float(np.logaddexp(0.0, self.rho[0]))

    @classmethod
    def zeros(cls, d_s, activation="tanh", time_scale=30.0, psi=1.0):
        return cls(np.zeros((d_s, d_s)), np.zeros((d_s, d_s)), np.zeros(d_s),
                   np.zeros((d_s, d_s)), np.array([math.log(math.expm1(psi))]),
                   np.zeros(2 * d_s), activation, time_scale)

    @classmethod
    def init(cls, d_s, rng, activation="tanh", time_scale=30.0):
        """Start close to an identity update: self-propagation I, aggregation
        0.5 I, no time drive. Random maps here scramble the initial embeddings
        within a few updates; a small jitter keeps entries distinct."""
        eye = np.eye(d_s)
        jitter = 0.01 / math.sqrt(d_s)
        return cls(
            W_a=0.5 * eye + rng.normal(0.0, jitter, size=(d_s, d_s)),
            W_rec=eye + rng.normal(0.0, jitter, size=(d_s, d_s)),
            W_t=np.zeros(d_s),
            W_h=eye + rng.normal(0.0, jitter, size=(d_s, d_s)),
            rho=np.array([math.log(math.expm1(1.0))]),
            omega=rng.normal(0.0, 1.0 / math.sqrt(2 * d_s), size=2 * d_s),
            activation=activation, time_scale=time_scale)

    def tensors(self):
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self):
        return DyRepParams(*(getattr(self, k).copy() for k in PARAM_NAMES),
                           activation=self.activation, time_scale=self.time_scale)

    def load_tensors(self, tensors):
        for k in PARAM_NAMES:
            cur = getattr(self, k)
            if tensors[k].shape != cur.shape:
                raise InputError(f"tensor {k}: expected shape {cur.shape}, got {tensors[k].shape}")
            cur[...] = tensors[k]


@dataclass
class EventBatchLoss:
    L_events: float
    L_nonevents: float
    P: int
    M: int

    @property
    def total(self):
        return self.L_events + self.L_nonevents


@dataclass
class UpdateRecord:
    """Constant inputs of one representation update, plus its forward output."""
    service: int
    nbr_z: np.ndarray
    weights: np.ndarray
    z_prev: np.ndarray
    dt: float  # already divided by time_scale
    z: np.ndarray = None


@dataclass
class BatchTrace:
    records: list = field(default_factory=list)
    live: dict = field(default_factory=dict)  # service -> index of its latest record
    events: list = field(default_factory=list)
    nonevents: list = field(default_factory=list)

    def endpoint(self, state, s):
        return (self.live.get(s, -1), state.Z[s].copy())


def _weights(state, s, nbrs):
    scores = state.attention_weights(s, nbrs)
    return softmax_masked(scores, np.arange(len(nbrs)))


def aggregate(state, params, s):
    """Attention-weighted per-coordinate max over transformed neighbour states."""
    nbrs = state.neighbors(s)
    if not nbrs:
        return np.zeros(params.dim)
    h, _ = kernels.max_aggregate(params.W_h, state.Z[nbrs], _weights(state, s, nbrs))
    return h


def _forward_record(params, rec):
    if rec.nbr_z.shape[0]:
        h, arg = kernels.max_aggregate(params.W_h, rec.nbr_z, rec.weights)
    else:
        h, arg = np.zeros(params.dim), None
    pre = params.W_a @ h + params.W_rec @ rec.z_prev + params.W_t * rec.dt
    return activate(params.activation, pre), h, arg


def _prepare_update(state, params, s, t):
    if t < state.last_update[s]:
        raise OutOfOrderEventError(
            f"event at t={t} precedes last update {state.last_update[s]} of service {s}")
    nbrs = state.neighbors(s)
    if nbrs:
        nbr_z = state.Z[nbrs].copy()
        w = _weights(state, s, nbrs)
    else:
        nbr_z = np.zeros((0, params.dim))
        w = np.zeros(0)
    rec = UpdateRecord(s, nbr_z, w, state.Z[s].copy(), (t - state.last_update[s]) / params.time_scale)
    rec.z = _forward_record(params, rec)[0]
    return rec


def update_representation(state, params, s, t):
    """Update ``Z[s]`` in place for an event at time ``t`` and return it."""
    state._check(s)
    rec = _prepare_update(state, params, s, t)
    state.Z[s] = rec.z
    state.last_update[s] = t
    state.current_time = max(state.current_time, t)
    return rec.z


def intensity(params, z_u, z_v):
    x = float(params.omega[:params.dim] @ z_u + params.omega[params.dim:] @ z_v)
    return kernels.scaled_softplus(x, params.psi)


def process_event(state, params, event, trace=None):
    """Score the event from pre-event states, update both endpoints, then topology.

    Returns the intensity. When ``trace`` is given the event and both updates
    are recorded for ``unsupervised_grads``.
    """
    u, v, t = event.u, event.v, event.t
    state._check(u)
    state._check(v)
    lam = intensity(params, state.Z[u], state.Z[v])
    if not lam > 0:
        raise InvariantError(f"non-positive intensity {lam} for event {event}")
    if trace is not None:
        trace.events.append((trace.endpoint(state, u), trace.endpoint(state, v)))
    # both updates read the pre-event graph
    rec_u = _prepare_update(state, params, u, t)
    rec_v = _prepare_update(state, params, v, t)
    for rec in (rec_u, rec_v):
        state.Z[rec.service] = rec.z
        state.last_update[rec.service] = t
        if trace is not None:
            trace.live[rec.service] = len(trace.records)
            trace.records.append(rec)
    state.apply_event_topology(event, lam)
    return lam


def sample_nonevents(state, events, rng, factor=5, max_tries=1000):
    """Draw ``factor * len(events)`` ordered pairs that are not positive events."""
    n = state.n_services
    if n < 2:
        raise InputError("need at least two services to sample non-events")
    if not events:
        return []
    positives = {e.pair() for e in events}
    t = max(e.t for e in events)
    out = []
    for _ in range(factor * len(events)):
        for _ in range(max_tries):
            u = int(rng.integers(n))
            v = int(rng.integers(n - 1))
            if v >= u:
                v += 1
            if (min(u, v), max(u, v)) not in positives:
                out.append(CoInvocationEvent(u, v, t))
                break
        else:
            raise SamplerExhaustedError(
                f"no admissible non-event after {max_tries} draws ({n} services)")
    return out


def record_nonevents(state, trace, nonevents):
    for e in nonevents:
        trace.nonevents.append((trace.endpoint(state, e.u), trace.endpoint(state, e.v)))


def unsupervised_loss(lam_events, lam_nonevents, form="survival"):
    lam_events = np.asarray(lam_events, dtype=np.float64)
    lam_nonevents = np.asarray(lam_nonevents, dtype=np.float64)
    if np.any(lam_events <= 0) or np.any(lam_nonevents <= 0):
        raise InvariantError("intensities must be positive")
    L_ev = float(-np.log(lam_events).sum())
    M = lam_nonevents.shape[0]
    if form == "survival":
        L_non = float(lam_nonevents.mean()) if M else 0.0
    elif form == "paper-literal":
        L_non = float(np.log(lam_nonevents).sum())
    else:
        raise InputError(f"unknown nonevent form {form!r}")
    return EventBatchLoss(L_ev, L_non, int(lam_events.shape[0]), M)


def _trace_forward(params, trace):
    return [_forward_record(params, rec) for rec in trace.records]


def _endpoint_z(fwd, ep):
    idx, z_const = ep
    return fwd[idx][0] if idx >= 0 else z_const


def trace_loss(params, trace, form="survival"):
    """L2 of a recorded batch as a function of the current parameters."""
    fwd = _trace_forward(params, trace)
    lam_e = [intensity(params, _endpoint_z(fwd, a), _endpoint_z(fwd, b)) for a, b in trace.events]
    lam_n = [intensity(params, _endpoint_z(fwd, a), _endpoint_z(fwd, b)) for a, b in trace.nonevents]
    return unsupervised_loss(lam_e, lam_n, form)


def unsupervised_grads(params, trace, form="survival"):
    """Return (EventBatchLoss, grads) for the truncated batch loss."""
    d = params.dim
    psi = params.psi
    fwd = _trace_forward(params, trace)
    g = {k: np.zeros_like(getattr(params, k)) for k in PARAM_NAMES}
    gz = [np.zeros(d) for _ in trace.records]
    g_psi = 0.0
    lam_e, lam_n = [], []
    M = len(trace.nonevents)

    def pair(ep_u, ep_v, coef_fn, sink):
        nonlocal g_psi
        zu, zv = _endpoint_z(fwd, ep_u), _endpoint_z(fwd, ep_v)
        x = float(params.omega[:d] @ zu + params.omega[d:] @ zv)
        lam, dx, dpsi = kernels.scaled_softplus_grad(x, psi)
        sink.append(lam)
        c = coef_fn(lam)
        g["omega"][:d] += c * dx * zu
        g["omega"][d:] += c * dx * zv
        g_psi += c * dpsi
        if ep_u[0] >= 0:
            gz[ep_u[0]] += c * dx * params.omega[:d]
        if ep_v[0] >= 0:
            gz[ep_v[0]] += c * dx * params.omega[d:]

    for a, b in trace.events:
        pair(a, b, lambda lam: -1.0 / lam, lam_e)
    for a, b in trace.nonevents:
        if form == "survival":
            pair(a, b, lambda lam: 1.0 / M, lam_n)
        else:
            pair(a, b, lambda lam: 1.0 / lam, lam_n)

    for rec, (z, h, arg), gzi in zip(trace.records, fwd, gz):
        if not gzi.any():
            continue
        dpre = gzi * activation_grad_from_output(params.activation, z)
        g["W_a"] += np.outer(dpre, h)
        g["W_rec"] += np.outer(dpre, rec.z_prev)
        g["W_t"] += dpre * rec.dt
        if arg is not None:
            dh = params.W_a.T @ dpre
            # coordinate c of h came from neighbour arg[c]
            g["W_h"] += (rec.weights[arg] * dh)[:, None] * rec.nbr_z[arg]
    g["rho"][0] = g_psi * sigmoid(float(params.rho[0]))
    loss = unsupervised_loss(lam_e, lam_n, form)
    return loss, g
