"""Analytic-vs-numerical gradient comparison on small random instances."""
from dataclasses import dataclass
import math

import numpy as np

from . import dynrep
from .dynrep import BatchTrace, DyRepParams
from .graph import CoInvocationEvent, GraphState
from .numerics import finite_diff_grad, max_relative_error
from .recommend import RecParams, supervised_grads, supervised_loss

TOLERANCE = 1e-4


@dataclass
class Instance:
    state: GraphState
    rec: RecParams
    dy: DyRepParams
    v_r: np.ndarray
    positives: list
    negatives: list
    events: list


def random_instance(seed, d_r=6, d_s=4, n_services=5, n_events=3, activation="tanh"):
    rng = np.random.default_rng(seed)
    state = GraphState([f"s{i}" for i in range(n_services)],
                       rng.uniform(-0.9, 0.9, size=(n_services, d_s)))
    # a little prior topology so aggregation paths carry gradient
    for k in range(n_services - 1):
        state.apply_event_topology(CoInvocationEvent(k, k + 1, 0.0), float(rng.uniform(0.2, 2.0)))
    dy = DyRepParams(
        W_a=rng.normal(0, 0.5, (d_s, d_s)), W_rec=rng.normal(0, 0.5, (d_s, d_s)),
        W_t=rng.normal(0, 0.5, d_s), W_h=rng.normal(0, 0.5, (d_s, d_s)),
        rho=rng.normal(0, 0.5, 1), omega=rng.normal(0, 0.7, 2 * d_s),
        activation=activation, time_scale=30.0)
    rec = RecParams(rng.normal(0, 0.5, (d_s, d_r)), rng.normal(0, 0.5, d_s),
                    rng.normal(0, 0.5, (d_s, d_s)))
    perm = rng.permutation(n_services).tolist()
    n_pos = max(1, n_services // 3)
    times = np.sort(rng.uniform(1.0, 60.0, n_events))
    events = []
    for t in times:
        u, v = rng.choice(n_services, size=2, replace=False)
        events.append(CoInvocationEvent(int(u), int(v), float(t)))
    return Instance(state, rec, dy, rng.normal(size=d_r), perm[:n_pos], perm[n_pos:], events)


def check_supervised(inst, corrupt=False):
    """Per-tensor relative error of the L1 gradient."""
    _, grads = supervised_grads(inst.rec, inst.v_r, inst.state.Z, inst.positives, inst.negatives)
    if corrupt:
        grads["W_lam"] = grads["W_lam"] * 1.01
    params = inst.rec.tensors()

    def loss(_):
        return supervised_loss(inst.rec, inst.v_r, inst.state.Z, inst.positives, inst.negatives)[0]
    num = finite_diff_grad(loss, params)
    return {k: max_relative_error(grads[k], num[k]) for k in params}


def build_trace(inst, rng):
    state = inst.state.copy()
    trace = BatchTrace()
    for ev in inst.events:
        dynrep.process_event(state, inst.dy, ev, trace)
    dynrep.record_nonevents(state, trace, dynrep.sample_nonevents(state, inst.events, rng))
    return trace


def check_unsupervised(inst, form="survival", corrupt=False, seed=0):
    """Per-tensor relative error of the L2 gradient under single-step truncation."""
    trace = build_trace(inst, np.random.default_rng(seed))
    _, grads = dynrep.unsupervised_grads(inst.dy, trace, form)
    if corrupt:
        grads["omega"] = grads["omega"] * 1.01
    params = inst.dy.tensors()
    num = finite_diff_grad(lambda _: dynrep.trace_loss(inst.dy, trace, form).total, params)
    return {k: max_relative_error(grads[k], num[k]) for k in params}


def run(n_instances=20, seed=0, d_r=6, d_s=4, n_services=5, n_events=3, form="survival",
        corrupt=False):
    """Return rows (instance, loss, tensor, rel_err) and the overall maximum."""
    rows = []
    for i in range(n_instances):
        inst = random_instance(seed * 100003 + i, d_r, d_s, n_services, n_events)
        for k, e in check_supervised(inst, corrupt).items():
            rows.append((i, "L1", k, e))
        for k, e in check_unsupervised(inst, form, corrupt, seed=i).items():
            rows.append((i, "L2", k, e))
    worst = max((r[3] for r in rows), default=0.0)
    if not math.isfinite(worst):
        worst = math.inf
    return rows, worst
