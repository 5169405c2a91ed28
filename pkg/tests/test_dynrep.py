import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from svcrec import dynrep, gradcheck
from svcrec.dynrep import BatchTrace, DyRepParams
from svcrec.errors import InputError, InvariantError, OutOfOrderEventError, SamplerExhaustedError
from svcrec.graph import CoInvocationEvent, GraphState

LN2 = math.log(2.0)


def graph(n=4, d=3, seed=0):
    return GraphState([f"s{i}" for i in range(n)],
                      np.random.default_rng(seed).uniform(-0.8, 0.8, (n, d)))


def random_params(d, seed=0, activation="tanh"):
    rng = np.random.default_rng(seed)
    return DyRepParams(rng.normal(0, .5, (d, d)), rng.normal(0, .5, (d, d)), rng.normal(0, .5, d),
                       rng.normal(0, .5, (d, d)), rng.normal(0, .5, 1), rng.normal(0, .5, 2 * d),
                       activation, 30.0)


def straight_line_update(state, p, s, t):
    """Scalar re-derivation of the update rule, loop by loop."""
    d = p.dim
    nbrs = sorted(k for k, c in state.A[s].items() if c > 0)
    h = [0.0] * d
    if nbrs:
        raw = [state.S[s].get(r, 0.0) for r in nbrs]
        m = max(raw)
        e = [math.exp(x - m) for x in raw]
        w = [x / sum(e) for x in e]
        for c in range(d):
            h[c] = max(w[k] * sum(p.W_h[c, j] * state.Z[r, j] for j in range(d))
                       for k, r in enumerate(nbrs))
    dt = (t - state.last_update[s]) / p.time_scale
    out = []
    for c in range(d):
        pre = (sum(p.W_a[c, j] * h[j] for j in range(d))
               + sum(p.W_rec[c, j] * state.Z[s, j] for j in range(d)) + p.W_t[c] * dt)
        out.append(math.tanh(pre) if p.activation == "tanh" else 1 / (1 + math.exp(-pre)))
    return np.array(out)


def test_aggregate_isolated_is_zero():
    g = graph()
    np.testing.assert_array_equal(dynrep.aggregate(g, random_params(3), 0), np.zeros(3))


def test_aggregate_single_neighbor():
    g = graph()
    p = random_params(3)
    g.apply_event_topology(CoInvocationEvent(0, 1, 0.0), 0.5)
    np.testing.assert_allclose(dynrep.aggregate(g, p, 0), p.W_h @ g.Z[1], rtol=1e-14)


def test_aggregate_two_neighbors_hand_computed():
    g = GraphState(["a", "b", "c"], [[0, 0], [1.0, -2.0], [0.5, 3.0]])
    g.A[0] = {1: 1, 2: 1}
    g.S[0] = {1: 0.0, 2: math.log(3.0)}  # softmax weights 1/4, 3/4
    p = DyRepParams.zeros(2)
    p.W_h[:] = np.eye(2)
    # 1/4*[1,-2] = [.25,-.5]; 3/4*[.5,3] = [.375,2.25] -> max [.375, 2.25]
    np.testing.assert_allclose(dynrep.aggregate(g, p, 0), [0.375, 2.25], rtol=1e-14)


def test_update_zero_params():
    g = graph()
    z = dynrep.update_representation(g, DyRepParams.zeros(3), 2, 5.0)
    np.testing.assert_array_equal(z, np.zeros(3))
    assert g.last_update[2] == 5.0
    g2 = graph()
    z = dynrep.update_representation(g2, DyRepParams.zeros(3, activation="logistic"), 2, 5.0)
    np.testing.assert_array_equal(z, np.full(3, 0.5))


def test_update_self_propagation_only():
    g = graph()
    p = DyRepParams.zeros(3)
    p.W_rec[:] = np.eye(3)
    g.apply_event_topology(CoInvocationEvent(1, 2, 0.0), 1.0)
    z_prev = g.Z[1].copy()
    np.testing.assert_allclose(dynrep.update_representation(g, p, 1, 77.0), np.tanh(z_prev), rtol=1e-15)


def test_empty_neighborhood_degenerate_form():
    g = graph()
    p = random_params(3, seed=4)
    z_prev = g.Z[3].copy()
    z = dynrep.update_representation(g, p, 3, 12.0)
    np.testing.assert_allclose(z, np.tanh(p.W_rec @ z_prev + p.W_t * 12.0 / 30.0), rtol=1e-14)


@pytest.mark.parametrize("activation", ["tanh", "logistic"])
@pytest.mark.parametrize("seed", range(5))
def test_update_matches_formula_oracle(seed, activation):
    g = graph(5, 3, seed)
    rng = np.random.default_rng(seed + 100)
    for _ in range(6):
        u, v = rng.choice(5, 2, replace=False)
        g.apply_event_topology(CoInvocationEvent(int(u), int(v), 0.0), float(rng.uniform(.1, 2)))
    g.last_update[:] = rng.uniform(0, 5, 5)
    p = random_params(3, seed, activation)
    for s in range(5):
        expect = straight_line_update(g, p, s, 9.0)
        np.testing.assert_allclose(dynrep.update_representation(g.copy(), p, s, 9.0), expect,
                                   rtol=1e-12, atol=1e-15)


def test_update_out_of_order_rejected():
    g = graph()
    g.last_update[0] = 10.0
    with pytest.raises(OutOfOrderEventError):
        dynrep.update_representation(g, random_params(3), 0, 9.0)


def test_intensity_values():
    p = DyRepParams.zeros(2, psi=1.7)
    assert dynrep.intensity(p, np.ones(2), -np.ones(2)) == pytest.approx(1.7 * LN2, abs=1e-12)
    p = DyRepParams.zeros(2, psi=1.0)
    p.omega[:] = [1.0, 0.0, 0.5, 0.0]
    assert dynrep.intensity(p, np.array([1.0, 0.0]), np.array([2.0, 0.0])) == pytest.approx(2.126928, abs=1e-6)


def test_intensity_is_order_sensitive():
    p = random_params(3, seed=7)
    zu, zv = np.array([0.1, -0.4, 0.3]), np.array([0.6, 0.2, -0.5])
    a, b = dynrep.intensity(p, zu, zv), dynrep.intensity(p, zv, zu)
    assert a != b
    # regression values of this instance
    assert a == pytest.approx(_ref_intensity(p, zu, zv), rel=1e-14)
    assert b == pytest.approx(_ref_intensity(p, zv, zu), rel=1e-14)


def _ref_intensity(p, zu, zv):
    psi = math.log1p(math.exp(p.rho[0]))
    x = sum(p.omega[i] * zu[i] for i in range(3)) + sum(p.omega[3 + i] * zv[i] for i in range(3))
    return psi * math.log1p(math.exp(x / psi))


@given(st.floats(-5, 5), st.floats(0.001, 3))
def test_intensity_positive_and_increasing(x, dx):
    p = DyRepParams.zeros(1, psi=0.8)
    p.omega[:] = [1.0, 0.0]
    lo = dynrep.intensity(p, np.array([x]), np.array([0.0]))
    hi = dynrep.intensity(p, np.array([x + dx]), np.array([0.0]))
    assert 0 < lo < hi


def test_process_event_first_event():
    g = graph()
    p = random_params(3, seed=2)
    z0 = g.Z.copy()
    lam = dynrep.process_event(g, p, CoInvocationEvent(0, 1, 1.0))
    assert lam == pytest.approx(_ref_intensity(p, z0[0], z0[1]), rel=1e-14)
    assert g.S[0] == {1: 1.0} and g.S[1] == {0: 1.0}
    # both updates read the pre-event graph: no neighbours yet
    np.testing.assert_allclose(g.Z[0], np.tanh(p.W_rec @ z0[0] + p.W_t / 30.0), rtol=1e-14)
    np.testing.assert_allclose(g.Z[1], np.tanh(p.W_rec @ z0[1] + p.W_t / 30.0), rtol=1e-14)


def test_process_event_zero_params():
    g = graph()
    lam = dynrep.process_event(g, DyRepParams.zeros(3), CoInvocationEvent(0, 1, 1.0))
    assert lam == pytest.approx(LN2, abs=1e-15)
    np.testing.assert_array_equal(g.Z[[0, 1]], 0.0)


def test_process_event_two_steps_on_same_pair():
    g = graph()
    p = random_params(3, seed=3)
    dynrep.process_event(g, p, CoInvocationEvent(0, 1, 1.0))
    z_mid = g.Z.copy()
    lam2 = dynrep.process_event(g, p, CoInvocationEvent(0, 1, 2.0))
    assert lam2 == pytest.approx(_ref_intensity(p, z_mid[0], z_mid[1]), rel=1e-14)
    # second update of 0 aggregates 1's post-first-event state
    ref = g.copy()
    ref.Z[:] = z_mid
    ref.A = [dict(r) for r in ref.A]
    ref.A[0] = {1: 1}
    ref.A[1] = {0: 1}
    ref.S[0] = {1: 1.0}
    ref.S[1] = {0: 1.0}
    ref.last_update[[0, 1]] = 1.0
    np.testing.assert_allclose(g.Z[0], straight_line_update(ref, p, 0, 2.0), rtol=1e-12)


def test_process_event_deterministic():
    outs = []
    for _ in range(2):
        g = graph()
        p = random_params(3, seed=5)
        lams = [dynrep.process_event(g, p, CoInvocationEvent(u, v, t))
                for u, v, t in [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 2.0), (3, 0, 4.0)]]
        outs.append((lams, g.Z.copy(), g.S))
    assert outs[0][0] == outs[1][0]
    np.testing.assert_array_equal(outs[0][1], outs[1][1])
    assert outs[0][2] == outs[1][2]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)).filter(lambda e: e[0] != e[1]),
                min_size=1, max_size=25), st.integers(0, 1000))
def test_tanh_representations_stay_bounded(pairs, seed):
    g = graph(6, 3, seed)
    p = random_params(3, seed)
    p.W_t *= 50
    for k, (u, v) in enumerate(pairs):
        assert dynrep.process_event(g, p, CoInvocationEvent(u, v, float(k))) > 0
        for s in (u, v):
            assert np.all(np.abs(g.Z[s]) < 1)


def test_sample_nonevents():
    g = graph(6)
    evs = [CoInvocationEvent(0, 1, 3.0)]
    out = dynrep.sample_nonevents(g, evs, np.random.default_rng(0))
    assert len(out) == 5
    assert all(e.pair() != (0, 1) and e.t == 3.0 for e in out)
    again = dynrep.sample_nonevents(g, evs, np.random.default_rng(0))
    assert [(e.u, e.v) for e in out] == [(e.u, e.v) for e in again]
    evs3 = [CoInvocationEvent(0, 1, 3.0), CoInvocationEvent(1, 2, 3.0), CoInvocationEvent(0, 2, 3.0)]
    assert len(dynrep.sample_nonevents(g, evs3, np.random.default_rng(1))) == 15


def test_sample_nonevents_exhaustion_and_tiny_universe():
    with pytest.raises(SamplerExhaustedError):
        dynrep.sample_nonevents(graph(2), [CoInvocationEvent(0, 1, 0.0)], np.random.default_rng(0))
    with pytest.raises(InputError):
        dynrep.sample_nonevents(graph(1), [], np.random.default_rng(0))


def test_unsupervised_loss_values():
    assert dynrep.unsupervised_loss([1.0], []).total == 0.0
    loss = dynrep.unsupervised_loss([math.e], [2.0, 4.0])
    assert loss.L_events == pytest.approx(-1.0) and loss.L_nonevents == pytest.approx(3.0)
    assert loss.total == pytest.approx(2.0) and (loss.P, loss.M) == (1, 2)
    lit = dynrep.unsupervised_loss([1.0], [math.e, math.e], "paper-literal")
    assert lit.L_nonevents == pytest.approx(2.0)
    with pytest.raises(InvariantError):
        dynrep.unsupervised_loss([0.0], [])
    with pytest.raises(InputError):
        dynrep.unsupervised_loss([1.0], [1.0], "other")


def _trace(g, p, events, seed=0):
    tr = BatchTrace()
    for e in events:
        dynrep.process_event(g, p, e, tr)
    dynrep.record_nonevents(g, tr, dynrep.sample_nonevents(g, events, np.random.default_rng(seed)))
    return tr


def test_trace_loss_reproduces_forward_pass():
    g = graph(5, 3)
    p = random_params(3, seed=1)
    evs = [CoInvocationEvent(0, 1, 1.0), CoInvocationEvent(1, 2, 2.0), CoInvocationEvent(0, 2, 3.0)]
    lams = []
    g2 = g.copy()
    for e in evs:
        lams.append(dynrep.process_event(g2, p, e))
    tr = _trace(g, p, evs)
    loss = dynrep.trace_loss(p, tr)
    assert loss.L_events == pytest.approx(-sum(math.log(x) for x in lams), rel=1e-14)
    assert loss.M == 15


def test_grad_zero_omega_single_event():
    g = graph(4, 3)
    p = random_params(3, seed=9)
    p.omega[:] = 0.0
    tr = _trace(g, p, [CoInvocationEvent(0, 1, 1.0)])
    _, grads = dynrep.unsupervised_grads(p, tr)
    psi = p.psi
    # d(-log lam)/d omega at omega=0: -(0.5 / (psi ln2)) * [z_u; z_v] with pre-event z constants
    z0 = graph(4, 3).Z
    ev_part = -(0.5 / (psi * LN2)) * np.concatenate([z0[0], z0[1]])
    non = np.zeros(6)
    for (iu, zu), (iv, zv) in tr.nonevents:
        zu_ = tr.records[iu].z if iu >= 0 else zu
        zv_ = tr.records[iv].z if iv >= 0 else zv
        non += 0.5 / len(tr.nonevents) * np.concatenate([zu_, zv_])
    np.testing.assert_allclose(grads["omega"], ev_part + non, rtol=1e-12)


def test_no_neighbors_means_no_aggregation_gradient():
    g = graph(6, 3)
    p = random_params(3, seed=2)
    tr = _trace(g, p, [CoInvocationEvent(0, 1, 1.0), CoInvocationEvent(2, 3, 1.0)])
    _, grads = dynrep.unsupervised_grads(p, tr)
    np.testing.assert_array_equal(grads["W_a"], 0.0)
    np.testing.assert_array_equal(grads["W_h"], 0.0)


@pytest.mark.parametrize("form", dynrep.NONEVENT_FORMS)
@pytest.mark.parametrize("seed", range(8))
def test_unsupervised_grads_match_finite_differences(seed, form):
    inst = gradcheck.random_instance(seed)
    errs = gradcheck.check_unsupervised(inst, form, seed=seed)
    assert set(errs) == set(dynrep.PARAM_NAMES)
    assert max(errs.values()) < 1e-6


def test_unsupervised_grads_logistic_activation():
    inst = gradcheck.random_instance(3, activation="logistic")
    assert max(gradcheck.check_unsupervised(inst).values()) < 1e-6


def test_gradcheck_detects_corruption():
    inst = gradcheck.random_instance(0)
    assert max(gradcheck.check_unsupervised(inst, corrupt=True).values()) > 1e-3
    assert max(gradcheck.check_supervised(inst, corrupt=True).values()) > 1e-3


def test_params_round_trip_and_shape_check():
    p = random_params(3)
    q = DyRepParams.zeros(3)
    q.load_tensors(p.tensors())
    for k in dynrep.PARAM_NAMES:
        np.testing.assert_array_equal(getattr(q, k), getattr(p, k))
    bad = dict(p.tensors(), W_a=np.zeros((2, 2)))
    with pytest.raises(InputError, match="W_a"):
        q.load_tensors(bad)
