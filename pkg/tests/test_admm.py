import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from coopplan import admm
from coopplan.model import compute_dimensions
from oracles import convex_instance, run_admm


def test_p_unchanged_at_consensus():
    y = np.arange(4.0)
    np.testing.assert_array_equal(admm.p_update(np.ones(4), y, [y.copy(), y.copy()], 0.01), np.ones(4))


def test_p_increment_two_agents():
    p = admm.p_update(np.zeros(3), np.ones(3), [np.zeros(3)], 0.01)
    np.testing.assert_allclose(p, 0.01)


def test_p_symmetric_disagreement_cancels():
    d = np.array([0.3, -1.0])
    p = admm.p_update(np.zeros(2), np.zeros(2), [d, -d], 0.01)
    np.testing.assert_allclose(p, 0.0, atol=1e-18)


def test_p_rejects_wrong_peer_count():
    with pytest.raises(ValueError, match="peer"):
        admm.p_update(np.zeros(2), np.zeros(2), [np.zeros(2)], 0.01, degree=2)


def test_s_update_examples():
    np.testing.assert_array_equal(admm.s_update(np.ones(2), np.ones(2), np.ones(2), 0.1), np.ones(2))
    np.testing.assert_allclose(admm.s_update(np.zeros(2), np.ones(2), np.zeros(2), 0.1), 0.1)


def test_r_examples():
    z = np.zeros(3)
    assert not admm.compute_r(z, [z], z, z, z, 0.01, 0.1).any()
    r = admm.compute_r(np.ones(3), [np.ones(3)], z, z, z, 0.01, 0.1)
    np.testing.assert_allclose(r, 0.02)


def test_y_update_examples():
    assert not admm.y_update(np.zeros(2), np.zeros(2), 0.1, 0.01, 2).any()
    np.testing.assert_allclose(admm.y_update(np.full(3, 0.07), np.full(3, 0.07), 0.1, 0.01, 2), 1.0)


def test_z1_examples():
    assert admm.z1_update(np.zeros(1), np.zeros(1), np.zeros(1), 3, 0.1)[0] == 0.0
    assert admm.z1_update(np.zeros(1), np.zeros(1), np.array([-3.6]), 3, 0.1)[0] == pytest.approx(-4.5)


def test_z2_examples():
    b = admm.BoxBounds(lower=np.array([-1.0]), upper=np.array([1.0]))
    # interior: projection passes through, so z = s / sigma + y - (s + sigma y) / sigma = 0
    assert admm.z2_update(np.array([0.01]), np.array([0.1]), b, 3, 0.1)[0] == pytest.approx(0.0, abs=1e-15)
    clamp = admm.BoxBounds(lower=np.array([-1.0]), upper=np.array([0.2]))
    z_star = np.clip(np.array([0.5]), clamp.lower, clamp.upper)
    assert z_star[0] == 0.2
    forced = admm.BoxBounds(lower=np.array([0.2]), upper=np.array([0.5]))
    z = admm.z2_update(np.array([0.01]), np.array([0.1]), forced, 3, 0.1)[0]
    assert z == pytest.approx(0.1 + 0.1 - 0.2 / 0.3)
    assert z == pytest.approx(-0.4667, abs=1e-4)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_z1_is_the_prox_of_the_scaled_conjugate(seed):
    # G1(w) = ||w + l||^2 has conjugate ||y||^2 / 4 - y'l; the z-step minimizes
    # G1*(z) / N - z's + sigma/2 ||z - y||^2
    rng = np.random.default_rng(seed)
    n, N, sigma = 6, int(rng.integers(2, 8)), rng.uniform(0.01, 1)
    s, y, l = rng.normal(size=(3, n))

    def obj(z):
        return (z @ z / 4 - z @ l) / N - z @ s + sigma / 2 * np.sum((z - y) ** 2)

    ref = minimize(obj, np.zeros(n), method="BFGS", options={"gtol": 1e-12}).x
    np.testing.assert_allclose(admm.z1_update(s, y, l, N, sigma), ref, atol=1e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_z2_is_the_prox_of_the_box_support_function(seed):
    rng = np.random.default_rng(seed)
    n, N, sigma = 5, int(rng.integers(2, 8)), rng.uniform(0.05, 1)
    s, y = rng.normal(size=(2, n))
    lo = -rng.uniform(0.1, 2, n)
    hi = rng.uniform(0.1, 2, n)
    got = admm.z2_update(s, y, admm.BoxBounds(lo, hi), N, sigma)
    # support function of the box is sum_k max(lo_k z_k, hi_k z_k)
    z = cp.Variable(n)
    obj = cp.sum(cp.maximum(cp.multiply(lo, z), cp.multiply(hi, z))) / N - s @ z \
        + sigma / 2 * cp.sum_squares(z - y)
    cp.Problem(cp.Minimize(obj)).solve(solver=cp.CLARABEL, tol_gap_abs=1e-13, tol_gap_rel=1e-13,
                                       tol_feas=1e-13)
    np.testing.assert_allclose(got, z.value, atol=1e-8)


def test_consensus_variance_examples():
    y = np.arange(5.0)
    assert admm.consensus_variance([y, y, y]) == 0.0
    other = y.copy()
    other[2] += 2.0
    assert admm.consensus_variance([y, other]) == pytest.approx(1 / 5)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_consensus_variance_is_shift_invariant(seed):
    rng = np.random.default_rng(seed)
    ys = rng.normal(size=(4, 7))
    shift = rng.normal(size=7) * 10
    assert admm.consensus_variance(ys + shift) == pytest.approx(admm.consensus_variance(ys), rel=1e-9)


def test_box_bounds_are_deviation_limits():
    u = np.array([[[0.1, -1.0]]])
    b = admm.box_bounds(u, np.array([-0.6, -3.0]), np.array([0.6, 1.5]))
    np.testing.assert_allclose(b.lower, [-0.7, -2.0])
    np.testing.assert_allclose(b.upper, [0.5, 2.5])


def test_apply_jacobian_places_inputs_in_own_block():
    inst = convex_instance()
    T = inst.T
    du = np.arange(T * 2.0).reshape(T, 2)
    out = admm.apply_jacobian(inst.coupling, 1, np.zeros((T + 1, 4)), du)
    n1 = inst.coupling.l.size
    assert not out[:n1].any()
    np.testing.assert_array_equal(out[n1 + T * 2:], du.ravel())
    assert not out[n1:n1 + T * 2].any()


def test_fixed_point_keeps_multipliers_at_zero():
    inst = convex_instance()
    sols, duals, _ = run_admm(inst, 800)
    # restart every agent from the converged consensus point with p = s = 0
    y_star = duals[0].y.copy()
    z_star = duals[0].z.copy()
    fresh = [admm.DualState(y_star.copy(), z_star.copy(), np.zeros_like(y_star), np.zeros_like(y_star))
             for _ in range(inst.N)]
    # converged y agree and y = z at the fixed point of the recursion
    assert np.abs(duals[0].y - duals[1].y).max() < 1e-8
    ys = [d.y.copy() for d in fresh]
    for i, d in enumerate(fresh):
        others = [ys[j] for j in range(inst.N) if j != i]
        p = admm.p_update(d.p, d.y, others, 0.01)
        s = admm.s_update(d.s, d.y, d.z, 0.1)
        assert np.abs(p).max() == 0.0
        assert np.abs(s).max() < 1e-8


def test_reset_multipliers_keeps_warm_start():
    d = admm.DualState(*(np.random.default_rng(0).normal(size=(4, 6))))
    y, z = d.y.copy(), d.z.copy()
    d.reset_multipliers()
    np.testing.assert_array_equal(d.y, y)
    np.testing.assert_array_equal(d.z, z)
    assert not d.p.any() and not d.s.any()


def test_variance_falls_on_small_instance():
    _, _, trace = run_admm(convex_instance(), 200)
    assert trace[-1] < 1e-3 * trace[0]


def test_dual_sizes_match_dimensions():
    inst = convex_instance()
    dims = compute_dimensions(inst.N, inst.T)
    _, duals, _ = run_admm(inst, 1)
    assert duals[0].y.shape == (dims.D,)
