import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopplan.cost import (CouplingError, build_coupling, collision_cost_pair, host_cost,
                           host_model_cost, min_pair_distance, pair_distances, quadratize_host,
                           total_cost, total_cost_batch)
from coopplan.model import ScenarioSpec, pair_list

Q = np.diag([1.0, 1.0, 0.0, 0.0])
R = np.eye(2)


def test_host_cost_zero_on_reference():
    ref = np.random.default_rng(1).normal(size=(6, 4))
    assert host_cost(ref, np.zeros((5, 2)), ref, Q, R) == 0.0


def test_host_cost_unit_offset():
    ref = np.zeros((6, 4))
    x = ref.copy()
    x[2, 0] = 1.0
    assert host_cost(x, np.zeros((5, 2)), ref, Q, R) == pytest.approx(1.0)


def test_host_cost_matches_direct_summation():
    rng = np.random.default_rng(7)
    x, ref, u = rng.normal(size=(11, 4)), rng.normal(size=(11, 4)), rng.normal(size=(10, 2))
    Qr = np.diag(rng.uniform(0, 2, 4))
    Rr = np.diag(rng.uniform(0.1, 2, 2))
    oracle = 0.0
    for t in range(11):
        e = x[t] - ref[t]
        oracle += sum(Qr[k, k] * e[k] ** 2 for k in range(4))
    for t in range(10):
        oracle += sum(Rr[k, k] * u[t, k] ** 2 for k in range(2))
    assert host_cost(x, u, ref, Qr, Rr) == pytest.approx(oracle, abs=1e-10)


@pytest.mark.parametrize("d,expected", [(6.0, 0.0), (5.5, 0.0), (2.5, 12.96)])
def test_collision_cost_pair(d, expected):
    assert collision_cost_pair(d, 1.44, 5.5) == pytest.approx(expected)


def _spec(x0, T):
    refs = np.repeat(np.asarray(x0)[:, None, :], T + 1, axis=1)
    return ScenarioSpec(x0=x0, references=refs, horizon=T)


def test_total_cost_two_parked_vehicles():
    x0 = np.array([[0, 0, 0, 0.0], [2.5, 0, 0, 0.0]])
    spec = _spec(x0, 100)
    states = np.asarray(spec.references)
    assert total_cost(states, np.zeros((2, 100, 2)), spec) == pytest.approx(1309.0, abs=0.05)


def test_total_cost_zero_when_far_and_on_reference():
    x0 = np.array([[0, 0, 0, 0.0], [20, 0, 0, 0.0], [0, 30, 0, 0.0]])
    spec = _spec(x0, 4)
    assert total_cost(np.asarray(spec.references), np.zeros((3, 4, 2)), spec) == 0.0


def test_total_cost_batch_agrees_with_single():
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(3, 4)) * 3
    spec = _spec(x0, 6)
    S = rng.normal(size=(4, 3, 7, 4)) * 3
    U = rng.normal(size=(4, 3, 6, 2))
    batch = total_cost_batch(S, U, spec)
    for k in range(4):
        assert batch[k] == pytest.approx(total_cost(S[k], U[k], spec), rel=1e-12)


def test_pair_distances_layout_is_time_major_lexicographic():
    states = np.zeros((3, 2, 4))
    states[1, :, 0] = 3.0
    states[2, :, 1] = 4.0
    d = pair_distances(states)
    assert d.shape == (2, 3)
    np.testing.assert_allclose(d[0], [3.0, 4.0, 5.0])
    assert min_pair_distance(states) == pytest.approx(3.0)


def test_quadratization_zero_on_reference():
    ref = np.random.default_rng(3).normal(size=(5, 4))
    q = quadratize_host(ref, np.zeros((4, 2)), ref, Q, R)
    assert not q.cx.any() and not q.cu.any()
    np.testing.assert_array_equal(q.cxx[0], 2 * Q)
    np.testing.assert_array_equal(q.cuu[0], 2 * R)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_quadratic_host_model_is_exact(seed):
    # the host cost is quadratic, so its second-order model is exact
    rng = np.random.default_rng(seed)
    x, ref, u = rng.normal(size=(6, 4)), rng.normal(size=(6, 4)), rng.normal(size=(5, 2))
    dx, du = rng.normal(size=(6, 4)), rng.normal(size=(5, 2))
    q = quadratize_host(x, u, ref, Q, R)
    lhs = host_cost(x + dx, u + du, ref, Q, R) - host_cost(x, u, ref, Q, R)
    assert host_model_cost(q, dx, du) == pytest.approx(lhs, rel=1e-10, abs=1e-10)


def test_coupling_inactive_when_far_apart():
    states = np.zeros((3, 4, 4))
    states[1, :, 0] = 10
    states[2, :, 1] = 10
    c = build_coupling(states, 1.44, 5.5)
    assert not c.l.any() and not c.grad.any()


def test_coupling_entry_values():
    states = np.zeros((2, 1, 4))
    states[1, 0, 0] = 2.5
    c = build_coupling(states, 1.44, 5.5)
    assert c.l[0, 0] == pytest.approx(-3.0 * 1.2)
    # d l / d px of vehicle 0 = sqrt(beta) * (p0 - p1) / d
    assert c.grad[0, 0, 0] == pytest.approx(-1.2)
    J1 = c.jacobian(1, 0)
    assert J1[0, 0] == pytest.approx(1.2)


def test_coupling_squared_norm_is_collision_cost():
    rng = np.random.default_rng(5)
    states = rng.normal(size=(4, 6, 4)) * 3
    c = build_coupling(states, 1.44, 5.5)
    d = pair_distances(states)
    assert np.sum(c.l**2) == pytest.approx(np.sum(collision_cost_pair(d, 1.44, 5.5)))


def test_coincident_centers_raise_with_location():
    states = np.zeros((3, 4, 4))
    states[1, :, 0] = 3.0
    states[2, :, 0] = 3.0
    states[2, :2, 0] = 8.0
    with pytest.raises(CouplingError, match=r"1.*2.*stage 2"):
        build_coupling(states, 1.44, 5.5)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_coupling_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    N, T1 = 3, 4
    states = rng.normal(size=(N, T1, 4)) * 3
    c = build_coupling(states, 1.44, 5.5)
    eps = 1e-6
    for i in range(N):
        for t in range(T1):
            J = c.jacobian(i, t)
            for k in range(4):
                plus, minus = states.copy(), states.copy()
                plus[i, t, k] += eps
                minus[i, t, k] -= eps
                fd = (build_coupling(plus, 1.44, 5.5).l[t] - build_coupling(minus, 1.44, 5.5).l[t]) / (2 * eps)
                np.testing.assert_allclose(J[:, k], fd, atol=1e-6)


def test_apply_matches_dense_jacobian():
    rng = np.random.default_rng(9)
    states = rng.normal(size=(4, 5, 4)) * 3
    c = build_coupling(states, 1.44, 5.5)
    dx = rng.normal(size=(5, 4))
    for i in range(4):
        dense = np.stack([c.jacobian(i, t) @ dx[t] for t in range(5)])
        np.testing.assert_allclose(c.apply(i, dx), dense, atol=1e-14)
        cols, signs = c.agent_rows(i)
        assert len(cols) == 3
        involved = [p for p, pair in enumerate(pair_list(4)) if i in pair]
        assert sorted(cols) == involved
