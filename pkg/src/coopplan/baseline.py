"""Centralized iLQR on the stacked system, same soft-penalty cost and line search."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .cost import build_coupling, min_pair_distance, quadratize_host, total_cost_batch
from .dynamics import linearize, rollout, step
from .lqr import AugmentedStageCosts, GainSchedule, backward_pass
from .model import N_INPUT, N_STATE, HyperParams, ScenarioSpec, check_scenario, pair_list
from .planner import PlanResult, termination_check

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointModel:
    A: np.ndarray  # (T, 4N, 4N)
    B: np.ndarray  # (T, 4N, 2N)


def joint_linearization(states, inputs, spec: ScenarioSpec) -> JointModel:
    """Block-diagonal stacking of the per-vehicle Jacobians."""
    A, B = linearize(states[:, :-1], inputs, spec.wheelbase, spec.tau_s)  # (N, T, 4, 4), (N, T, 4, 2)
    T = inputs.shape[1]
    return JointModel(
        A=np.stack([block_diag(*A[:, t]) for t in range(T)]),
        B=np.stack([block_diag(*B[:, t]) for t in range(T)]),
    )


def joint_collision_jacobian(coupling, t: int) -> np.ndarray:
    """d l_t / d x_t for the stacked state, shape (P, 4N)."""
    N = coupling.N
    J = np.zeros((coupling.n_pairs, N_STATE * N))
    for p, (i, j) in enumerate(pair_list(N)):
        g = coupling.grad[t, p]
        J[p, N_STATE * i:N_STATE * i + 2] = g
        J[p, N_STATE * j:N_STATE * j + 2] = -g
    return J


def joint_stage_costs(states, inputs, spec: ScenarioSpec) -> AugmentedStageCosts:
    """Host quadratics plus the Gauss-Newton collision model on the stacked state."""
    N, T1, _ = states.shape
    T = T1 - 1
    refs = np.asarray(spec.references)
    quads = [quadratize_host(states[i], inputs[i], refs[i], spec.Q, spec.R) for i in range(N)]
    qx = np.concatenate([q.cx for q in quads], axis=1)
    Qxx = np.stack([block_diag(*[q.cxx[t] for q in quads]) for t in range(T1)])
    qu = np.concatenate([q.cu for q in quads], axis=1)
    Quu = np.stack([block_diag(*[q.cuu[t] for q in quads]) for t in range(T)])
    if N > 1:
        coupling = build_coupling(states, spec.beta, spec.d_safe)
        for t in range(T1):
            J = joint_collision_jacobian(coupling, t)
            qx[t] += 2.0 * J.T @ coupling.l[t]
            Qxx[t] += 2.0 * J.T @ J
    return AugmentedStageCosts(qx=qx, Qxx=Qxx, qu=qu, Quu=Quu)


def joint_candidates(states, inputs, gains: GainSchedule, alphas, spec: ScenarioSpec):
    """Clipped closed-loop rollouts of the stacked system for each alpha.

    Returns states (K, N, T+1, 4) and inputs (K, N, T, 2).
    """
    N, T1, _ = states.shape
    T = T1 - 1
    alphas = np.asarray(alphas, dtype=float)
    K = alphas.shape[0]
    x_hat = states.transpose(1, 0, 2).reshape(T1, -1)
    u_hat = inputs.transpose(1, 0, 2).reshape(T, -1)
    lo = np.tile(spec.u_lower, N)
    hi = np.tile(spec.u_upper, N)
    xs = np.empty((K, T1, N * N_STATE))
    us = np.empty((K, T, N * N_INPUT))
    xs[:, 0] = x_hat[0]
    for t in range(T):
        u = u_hat[t] + alphas[:, None] * gains.k[t] + (xs[:, t] - x_hat[t]) @ gains.K[t].T
        us[:, t] = np.clip(u, lo, hi)
        nxt = step(xs[:, t].reshape(K, N, N_STATE), us[:, t].reshape(K, N, N_INPUT),
                   spec.wheelbase, spec.tau_s)
        xs[:, t + 1] = nxt.reshape(K, -1)
    return (xs.reshape(K, T1, N, N_STATE).transpose(0, 2, 1, 3),
            us.reshape(K, T, N, N_INPUT).transpose(0, 2, 1, 3))


def solve_centralized(spec: ScenarioSpec, hyper: HyperParams | None = None) -> PlanResult:
    hyper = hyper or HyperParams()
    check_scenario(spec)
    N, T = spec.N, spec.T
    t_start = time.perf_counter()
    trajs = [rollout(spec.x0[i], np.zeros((T, N_INPUT)), spec.wheelbase, spec.tau_s)
             for i in range(N)]
    states = np.stack([tr.states for tr in trajs])
    inputs = np.stack([tr.inputs for tr in trajs])
    history = [float(total_cost_batch(states[None], inputs[None], spec)[0])]
    alpha_idx: list[int] = []
    timings = {"model": 0.0, "lqr": 0.0, "line_search": 0.0}
    lqr_times: list[float] = []
    converged = False

    for _ in range(hyper.max_outer_iters):
        t0 = time.perf_counter()
        costs = joint_stage_costs(states, inputs, spec)
        jm = joint_linearization(states, inputs, spec)
        t1, c1 = time.perf_counter(), time.thread_time()
        gains = backward_pass(costs, jm.A, jm.B)
        t2, c2 = time.perf_counter(), time.thread_time()
        cs, cu = joint_candidates(states, inputs, gains, hyper.alpha_schedule, spec)
        cand_costs = total_cost_batch(cs, cu, spec)
        idx = int(np.argmin(cand_costs))
        states, inputs = cs[idx], cu[idx]
        history.append(float(cand_costs[idx]))
        alpha_idx.append(idx)
        t3 = time.perf_counter()
        timings["model"] += t1 - t0
        timings["lqr"] += c2 - c1
        timings["line_search"] += t3 - t2
        lqr_times.append(c2 - c1)
        if termination_check(history, hyper.outer_tol):
            converged = True
            break
    if not converged:
        log.warning("centralized iLQR hit max_outer_iters=%d without converging",
                    hyper.max_outer_iters)
    wall = time.perf_counter() - t_start
    timings["total"] = wall
    return PlanResult(
        states=states, inputs=inputs,
        cost_history=history, variance_history=[],
        min_distance=min_pair_distance(states),
        outer_iters=len(alpha_idx), converged=converged, solver="centralized",
        alpha_indices=alpha_idx, timings=timings, exchange={},
        lqr_times=[float(np.mean(lqr_times))] if lqr_times else [],
        wall_time=wall,
    )
