import numpy as np
import pytest

from coopplan import HyperParams
from coopplan.cost import CouplingError, total_cost
from coopplan.dynamics import dynamics_residual, rollout
from coopplan.lqr import GainSchedule
from coopplan.model import Trajectory
from coopplan.planner import (AgentFailure, closed_loop_candidates, feasible_update,
                              plan_decentralized, select_candidate, termination_check)
from conftest import T_JUNCTION_HYPER


@pytest.mark.parametrize("history,stop", [([100.0, 99.5], True), ([100.0, 98.0], False), ([100.0], False)])
def test_termination_examples(history, stop):
    assert termination_check(history, 1.0) is stop


def _random_gains(rng, T):
    return GainSchedule(k=rng.normal(size=(T, 2)), K=0.1 * rng.normal(size=(T, 2, 4)))


def test_zero_step_candidate_reproduces_nominal(t_junction):
    rng = np.random.default_rng(0)
    T = t_junction.T
    u = np.column_stack([rng.uniform(-0.2, 0.2, T), rng.uniform(-1, 1, T)])
    tr = rollout(t_junction.x0[0], u, t_junction.wheelbase, t_junction.tau_s)
    xs, us = closed_loop_candidates(tr.states, tr.inputs, _random_gains(rng, T), [1.0, 0.0], t_junction)
    np.testing.assert_array_equal(xs[1], tr.states)
    np.testing.assert_array_equal(us[1], tr.inputs)


def test_feasible_update_never_increases_cost_and_respects_bounds(t_junction):
    rng = np.random.default_rng(1)
    spec, T = t_junction, t_junction.T
    trajs = [rollout(spec.x0[i], np.zeros((T, 2)), spec.wheelbase, spec.tau_s) for i in range(spec.N)]
    X = np.stack([t.states for t in trajs])
    U = np.stack([t.inputs for t in trajs])
    gains = [GainSchedule(k=5 * rng.normal(size=(T, 2)), K=rng.normal(size=(T, 2, 4))) for _ in range(spec.N)]
    X2, U2, idx, costs = feasible_update(X, U, gains, HyperParams().alpha_schedule, spec)
    assert costs[idx] <= total_cost(X, U, spec) + 1e-9
    assert np.all(U2 >= spec.u_lower) and np.all(U2 <= spec.u_upper)


def test_ties_go_to_the_first_candidate(t_junction):
    spec = t_junction
    X = np.asarray(spec.references)[:, None].repeat(3, axis=1)
    U = np.zeros((spec.N, 3, spec.T, 2))
    idx, costs = select_candidate(X, U, spec)
    assert idx == 0 and np.all(costs == costs[0])


def test_single_vehicle_matches_centralized(t_junction):
    from coopplan.baseline import solve_centralized

    spec = t_junction.subset([1])
    hyper = HyperParams(outer_tol=1e-9, max_outer_iters=300)
    dec = plan_decentralized(spec, hyper)
    cen = solve_centralized(spec, hyper)
    assert dec.final_cost == pytest.approx(cen.final_cost, rel=1e-6)


def test_t_junction_run_invariants(t_junction, t_junction_runs):
    res, _ = t_junction_runs
    spec = t_junction
    assert res.converged
    assert res.states.shape == (3, spec.T + 1, 4) and res.inputs.shape == (3, spec.T, 2)
    assert np.all(np.diff(res.cost_history) <= 1e-9)
    assert np.all(res.inputs >= spec.u_lower) and np.all(res.inputs <= spec.u_upper)
    for x, u in zip(res.states, res.inputs):
        assert dynamics_residual(Trajectory(x, u), spec.wheelbase, spec.tau_s) < 1e-9
    assert len(res.variance_history) == res.outer_iters
    assert len(res.alpha_indices) == res.outer_iters
    assert res.final_cost == pytest.approx(total_cost(res.states, res.inputs, spec))


def test_exchange_counts_follow_iteration_structure(t_junction_runs):
    res, _ = t_junction_runs
    k, N, D = res.outer_iters, 3, 903
    dual = res.exchange["dual-exchange"]
    assert dual["rounds"] == k * T_JUNCTION_HYPER.inner_iters
    assert dual["messages"] == dual["rounds"] * N * (N - 1)
    assert dual["payload_scalars"] == dual["rounds"] * (N - 1) * N * D
    assert res.exchange["trajectory-exchange"]["rounds"] == k
    assert res.exchange["candidate-exchange"]["rounds"] == k


@pytest.mark.parametrize("threads", [2, 3, 8])
def test_thread_schedules_are_bit_identical(t_junction, t_junction_runs, threads):
    base, _ = t_junction_runs
    other = plan_decentralized(t_junction, T_JUNCTION_HYPER, threads=threads)
    assert other.states.tobytes() == base.states.tobytes()
    assert other.inputs.tobytes() == base.inputs.tobytes()
    assert other.cost_history == base.cost_history
    assert other.variance_history == base.variance_history


def test_iteration_cap_is_flagged(t_junction):
    res = plan_decentralized(t_junction, HyperParams(max_outer_iters=2, outer_tol=0.0))
    assert not res.converged
    assert res.outer_iters == 2
    assert len(res.cost_history) == 3


def test_agent_failure_aborts_the_run(t_junction):
    # coincident start positions make the coupling model undefined
    x0 = np.array(t_junction.x0)
    x0[1, :2] = x0[0, :2]
    refs = [np.asarray(r) for r in t_junction.references]
    spec = t_junction.replace(x0=x0, references=refs)
    for threads in (1, 2, 3):
        with pytest.raises(AgentFailure, match="agent [01] .*coincident centers at stage 0") as info:
            plan_decentralized(spec, T_JUNCTION_HYPER, threads=threads, timeout=5)
        assert isinstance(info.value.__cause__, CouplingError)
