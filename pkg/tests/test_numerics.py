import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from svcrec.errors import InputError, OracleError
from svcrec.numerics import (
    Adam, finite_diff_grad, matvec, max_relative_error, scaled_softplus, softmax_masked,
)
from svcrec.numerics import io as nio
from svcrec.numerics.kernels import available_backends

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
BACKENDS = available_backends()


def test_matvec_examples():
    np.testing.assert_array_equal(matvec(np.eye(2), [0.3, -0.7]), [0.3, -0.7])
    np.testing.assert_array_equal(matvec(np.zeros((2, 2)), [5, 5]), [0, 0])
    np.testing.assert_array_equal(matvec([[1, 2], [3, 4]], [1, 1]), [3, 7])


def test_matvec_dimension_mismatch():
    with pytest.raises(InputError):
        matvec(np.eye(3), [1.0, 2.0])


@given(hnp.arrays(np.float64, (3, 4), elements=finite),
       hnp.arrays(np.float64, 4, elements=finite),
       hnp.arrays(np.float64, 4, elements=finite), finite, finite)
def test_matvec_linear(M, u, v, a, b):
    lhs = matvec(M, a * u + b * v)
    rhs = a * matvec(M, u) + b * matvec(M, v)
    scale = 1 + np.abs(M).sum() * (abs(a) * np.abs(u).max() + abs(b) * np.abs(v).max())
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale


def test_softmax_examples():
    np.testing.assert_allclose(softmax_masked([2.0], [0]), [1.0])
    np.testing.assert_allclose(softmax_masked([1, 1, 1], [0, 1, 2]), [1 / 3] * 3)
    np.testing.assert_allclose(softmax_masked([0, math.log(3)], [0, 1]), [0.25, 0.75])


def test_softmax_empty_active_rejected():
    with pytest.raises(InputError):
        softmax_masked([1.0, 2.0], [])


@pytest.mark.parametrize("backend", sorted(BACKENDS))
@given(scores=hnp.arrays(np.float64, 6, elements=st.floats(-700, 700)),
       mask=st.lists(st.booleans(), min_size=6, max_size=6).filter(any))
def test_softmax_is_distribution_on_support(backend, scores, mask):
    active = np.flatnonzero(mask)
    out = BACKENDS[backend].softmax_masked(scores, active)
    assert np.all(out >= 0)
    assert abs(out.sum() - 1) <= 1e-12
    assert np.all(out[~np.array(mask)] == 0)


def test_scaled_softplus_examples():
    assert scaled_softplus(0, 1) == pytest.approx(0.693147, abs=1e-6)
    assert scaled_softplus(2, 1) == pytest.approx(2.126928, abs=1e-6)
    assert scaled_softplus(0, 2) == pytest.approx(1.386294, abs=1e-6)


def test_scaled_softplus_overflow_guard():
    assert scaled_softplus(1e6, 1.0) == 1e6
    assert math.isfinite(scaled_softplus(-1e6, 1.0))


@given(st.floats(-50, 50), st.floats(0.05, 20))
def test_scaled_softplus_bounds(x, psi):
    y = scaled_softplus(x, psi)
    assert y > 0 or x / psi < -700  # underflow only at absurd ratios
    assert y > max(0.0, x) - psi * math.log(2) - 1e-12


@given(st.floats(-20, 20), st.floats(0.01, 5), st.floats(0.05, 5))
def test_scaled_softplus_monotone(x, dx, psi):
    assert scaled_softplus(x + dx, psi) >= scaled_softplus(x, psi)


def test_scaled_softplus_rejects_nonpositive_psi():
    with pytest.raises(InputError):
        scaled_softplus(0.0, 0.0)


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.5, -2.0])}
    opt = Adam(p, lr=0.1)
    opt.step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])


def test_adam_first_step_is_lr():
    p = {"w": np.array([0.0])}
    opt = Adam(p, lr=0.1)
    opt.step(p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(-0.1, rel=1e-6)
    assert opt.t == 1


def test_adam_clip_matches_clipped_gradient():
    a = {"w": np.array([0.3, 0.1])}
    b = {"w": np.array([0.3, 0.1])}
    oa = Adam(a, lr=0.01, clip=100)
    ob = Adam(b, lr=0.01, clip=100)
    for _ in range(3):
        oa.step(a, {"w": np.array([1e6, -1e6])})
        ob.step(b, {"w": np.array([100.0, -100.0])})
    np.testing.assert_array_equal(a["w"], b["w"])
    assert oa.max_effective_grad == 100.0


@settings(max_examples=50)
@given(hnp.arrays(np.float64, 5, elements=st.floats(-1e8, 1e8)), st.floats(0.5, 1e3))
def test_adam_clip_bounds_effective_gradient(g, clip):
    p = {"w": np.zeros(5)}
    opt = Adam(p, lr=1e-3, clip=clip)
    opt.step(p, {"w": g})
    assert opt.max_effective_grad <= clip
    # first-step moments are (1 - beta) * g_eff
    assert np.all(np.abs(opt.m["w"]) <= (1 - opt.beta1) * clip + 1e-12)


def test_adam_shape_mismatch():
    p = {"w": np.zeros(3)}
    opt = Adam(p)
    with pytest.raises(InputError):
        opt.step(p, {"w": np.zeros(2)})


def test_finite_diff_examples():
    g = finite_diff_grad(lambda p: float(p["x"][0] ** 2), {"x": np.array([3.0])}, h=1e-5)
    assert g["x"][0] == pytest.approx(6.0, abs=1e-8)
    g = finite_diff_grad(lambda p: 4.0, {"a": np.ones((2, 2))})
    np.testing.assert_array_equal(g["a"], 0.0)


def test_finite_diff_restores_params_and_flags_nonfinite():
    p = {"x": np.array([1.0, 2.0])}
    finite_diff_grad(lambda q: float(q["x"].sum()), p)
    np.testing.assert_array_equal(p["x"], [1.0, 2.0])
    with pytest.raises(OracleError):
        finite_diff_grad(lambda q: float("nan"), p)


def test_max_relative_error():
    assert max_relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert max_relative_error([1.0, 2.0], [1.0, 2.2]) == pytest.approx(0.2 / 2.2)


# --- kernel backends agree ---------------------------------------------------

@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = np.random.default_rng(3)
    for x, psi in [(0.0, 1.0), (2.0, 0.7), (-40.0, 2.0), (31.0, 1.0), (-3.0, 0.3)]:
        assert py.scaled_softplus(x, psi) == pytest.approx(cy.scaled_softplus(x, psi), rel=1e-15)
        np.testing.assert_allclose(py.scaled_softplus_grad(x, psi), cy.scaled_softplus_grad(x, psi),
                                   rtol=1e-14, atol=1e-300)
    W, nz, w = rng.normal(size=(5, 5)), rng.normal(size=(3, 5)), rng.uniform(0.1, 1, 3)
    for a, b in zip(py.max_aggregate(W, nz, w), cy.max_aggregate(W, nz, w)):
        np.testing.assert_allclose(a, b, rtol=1e-14)
    for existed in (True, False):
        r1 = rng.uniform(0, 1, 4)
        r2 = r1.copy()
        py.attention_row_update(r1, 2, 0.25, 1 / 3, 0.7, existed)
        cy.attention_row_update(r2, 2, 0.25, 1 / 3, 0.7, existed)
        np.testing.assert_allclose(r1, r2, rtol=1e-14)
    states = []
    for k in (py, cy):
        p, m, v = np.ones(4), np.zeros(4), np.zeros(4)
        g = np.array([0.5, -300.0, 2.0, 0.0])
        for t in range(1, 4):
            k.adam_update(p, g, m, v, 0.01, 0.9, 0.999, 1e-8, t, 100.0)
        states.append(p)
    np.testing.assert_allclose(states[0], states[1], rtol=1e-14)
    s = rng.normal(size=7)
    np.testing.assert_allclose(py.softmax_masked(s, [0, 3, 6]), cy.softmax_masked(s, [0, 3, 6]),
                               rtol=1e-14)


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_scaled_softplus_grad_matches_differences(backend):
    k = BACKENDS[backend]
    for x, psi in [(0.3, 1.0), (-2.0, 0.5), (5.0, 3.0)]:
        _, dx, dpsi = k.scaled_softplus_grad(x, psi)
        h = 1e-6
        assert dx == pytest.approx((k.scaled_softplus(x + h, psi) - k.scaled_softplus(x - h, psi)) / (2 * h), rel=1e-7)
        assert dpsi == pytest.approx((k.scaled_softplus(x, psi + h) - k.scaled_softplus(x, psi - h)) / (2 * h), rel=1e-6)


# --- file formats -------------------------------------------------------------

def test_embedding_binary_round_trip(tmp_path):
    ids = ["a", "b", "ünï"]
    M = np.random.default_rng(0).normal(size=(3, 4))
    path = tmp_path / "e.bin"
    nio.write_embeddings_bin(path, ids, M)
    raw = path.read_bytes()
    assert raw[:4] == b"DYSR"
    assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [1, 3, 4]
    rids, RM = nio.read_embeddings(path)
    assert rids == ids
    np.testing.assert_array_equal(RM, M)


def test_embedding_binary_without_id_table(tmp_path):
    M = np.arange(6, dtype=np.float64).reshape(2, 3)
    path = tmp_path / "bare.bin"
    path.write_bytes(b"DYSR" + np.array([1, 2, 3], dtype="<u4").tobytes() + M.astype("<f8").tobytes())
    ids, RM = nio.read_embeddings_bin(path)
    assert ids == ["0", "1"]
    np.testing.assert_array_equal(RM, M)


def test_embedding_csv_round_trip(tmp_path):
    M = np.random.default_rng(1).normal(size=(2, 3))
    path = tmp_path / "e.csv"
    nio.write_embeddings_csv(path, ["x", "y"], M)
    ids, RM = nio.read_embeddings(path)
    assert ids == ["x", "y"]
    np.testing.assert_array_equal(RM, M)


def test_tensor_checkpoint_round_trip(tmp_path):
    t = {"W": np.random.default_rng(2).normal(size=(3, 2)), "b": np.zeros(2), "rho": np.array([0.5])}
    nio.write_tensors(tmp_path / "p.bin", t)
    back = nio.read_tensors(tmp_path / "p.bin")
    assert list(back) == ["W", "b", "rho"]
    for k in t:
        np.testing.assert_array_equal(back[k], t[k])
