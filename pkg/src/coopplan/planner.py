"""Decentralized iLQR over dual consensus ADMM, with a shared feasible line search.

Each agent is written as a generator that yields ``(tag, payload)`` whenever it
needs a broadcast round and receives the peers' payloads back. The drivers at
the bottom of the module decide how agents are scheduled: inline lockstep, a
thread pool stepping rounds, or one blocking thread per agent.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import admm
from .cost import build_coupling, min_pair_distance, pair_distances, quadratize_host, total_cost_batch
from .dynamics import linearize_trajectory, rollout, step
from .lqr import GainSchedule
from .model import HyperParams, ScenarioSpec, Trajectory, check_scenario
from .net import Exchange, ExchangeAborted, Phase, ProtocolError, RoundTag

log = logging.getLogger(__name__)


@dataclass
class PlanResult:
    states: np.ndarray  # (N, T+1, 4)
    inputs: np.ndarray  # (N, T, 2)
    cost_history: list[float]
    variance_history: list[float]
    min_distance: float
    outer_iters: int
    converged: bool
    solver: str
    alpha_indices: list[int] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    exchange: dict = field(default_factory=dict)
    lqr_times: list[float] = field(default_factory=list)  # per-agent mean LQR solve, thread CPU seconds
    wall_time: float = 0.0

    @property
    def final_cost(self) -> float:
        return self.cost_history[-1]

    @property
    def N(self) -> int:
        return self.states.shape[0]

    def distance_profile(self) -> np.ndarray:
        """Minimum pairwise center distance at each stage."""
        d = pair_distances(self.states)
        return d.min(axis=1) if d.size else np.full(self.states.shape[1], np.inf)

    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(x, u) for x, u in zip(self.states, self.inputs)]


def termination_check(history: Sequence[float], outer_tol: float) -> bool:
    """True when the last absolute cost change is below the tolerance."""
    if len(history) < 2:
        return False
    return abs(history[-1] - history[-2]) < outer_tol


def closed_loop_candidates(x_hat, u_hat, gains: GainSchedule, alphas, spec: ScenarioSpec):
    """Clipped nonlinear rollouts u = u_hat + a k + K (x - x_hat) for every line-search alpha.

    Returns states (K, T+1, 4) and inputs (K, T, 2).
    """
    alphas = np.asarray(alphas, dtype=float)
    n_cand = alphas.shape[0]
    T = u_hat.shape[0]
    xs = np.empty((n_cand, T + 1, x_hat.shape[1]))
    us = np.empty((n_cand, T, u_hat.shape[1]))
    xs[:, 0] = x_hat[0]
    for t in range(T):
        u = u_hat[t] + alphas[:, None] * gains.k[t] + (xs[:, t] - x_hat[t]) @ gains.K[t].T
        us[:, t] = np.clip(u, spec.u_lower, spec.u_upper)
        xs[:, t + 1] = step(xs[:, t], us[:, t], spec.wheelbase, spec.tau_s)
    return xs, us


def select_candidate(cand_states, cand_inputs, spec: ScenarioSpec):
    """Index of the cheapest joint candidate set (first index wins ties) and all costs.

    cand_states is (N, K, T+1, 4); candidate k pairs every agent's k-th rollout.
    """
    costs = total_cost_batch(np.swapaxes(cand_states, 0, 1), np.swapaxes(cand_inputs, 0, 1), spec)
    return int(np.argmin(costs)), costs


def feasible_update(states, inputs, gains: Sequence[GainSchedule], alphas, spec: ScenarioSpec):
    """Shared line search over all agents; returns updated (states, inputs), index, costs."""
    cands = [closed_loop_candidates(states[i], inputs[i], gains[i], alphas, spec)
             for i in range(len(gains))]
    cs = np.stack([c[0] for c in cands])
    cu = np.stack([c[1] for c in cands])
    idx, costs = select_candidate(cs, cu, spec)
    return cs[:, idx], cu[:, idx], idx, costs


class AgentFailure(RuntimeError):
    """An agent raised mid-run; the whole run is aborted."""

    def __init__(self, agent: int, cause: BaseException):
        self.agent = agent
        super().__init__(f"agent {agent} aborted the run: {type(cause).__name__}: {cause}")


@dataclass
class AgentOutcome:
    agent: int
    states: np.ndarray
    inputs: np.ndarray
    cost_history: list[float]
    y_history: list[np.ndarray]
    alpha_indices: list[int]
    converged: bool
    timings: dict
    lqr_times: list[float]


class Agent:
    """One vehicle running the outer relinearization loop and the inner ADMM loop."""

    def __init__(self, agent: int, spec: ScenarioSpec, hyper: HyperParams):
        self.i = agent
        self.spec = spec
        self.hyper = hyper
        self.dims = spec.dims
        self.timings = {"model": 0.0, "lqr": 0.0, "dual": 0.0, "line_search": 0.0}
        self.lqr_times: list[float] = []

    def _gather(self, own, peers: dict):
        return [own if j == self.i else peers[j] for j in range(self.dims.N)]

    def run(self):
        spec, hyp, dims, i = self.spec, self.hyper, self.dims, self.i
        T, m = dims.T, dims.m
        b, ts = spec.wheelbase, spec.tau_s
        ref = np.asarray(spec.references[i])
        traj = rollout(spec.x0[i], np.zeros((T, m)), b, ts)
        x_hat, u_hat = np.array(traj.states), np.array(traj.inputs)
        duals = admm.DualState.zeros(dims.D)
        history: list[float] = []
        y_hist: list[np.ndarray] = []
        alpha_idx: list[int] = []
        converged = False

        for outer in range(hyp.max_outer_iters):
            peers = yield RoundTag(outer, 0, Phase.TRAJECTORY), (x_hat, u_hat)
            t0 = time.perf_counter()
            everyone = self._gather((x_hat, u_hat), peers)
            all_x = np.stack([e[0] for e in everyone])
            all_u = np.stack([e[1] for e in everyone])
            if outer == 0:
                history.append(float(total_cost_batch(all_x[None], all_u[None], spec)[0]))
            coupling = build_coupling(all_x, spec.beta, spec.d_safe)
            l_vec = coupling.l.ravel()
            A, B = linearize_trajectory(Trajectory(x_hat, u_hat), b, ts)
            quad = quadratize_host(x_hat, u_hat, ref, spec.Q, spec.R)
            bounds = admm.box_bounds(all_u, spec.u_lower, spec.u_upper)
            duals.reset_multipliers()
            self.timings["model"] += time.perf_counter() - t0

            gains = None
            for k in range(hyp.inner_iters):
                peers_y = yield RoundTag(outer, k, Phase.DUAL), duals.y
                y_others = [peers_y[j] for j in sorted(peers_y)]
                before = self.timings["lqr"]
                _, _, gains = admm.inner_iteration(duals, y_others, quad, coupling, i, A, B,
                                                   l_vec, bounds, hyp.sigma, hyp.rho, self.timings)
                self.lqr_times.append(self.timings["lqr"] - before)
            y_hist.append(duals.y.copy())

            t0 = time.perf_counter()
            cx, cu = closed_loop_candidates(x_hat, u_hat, gains, hyp.alpha_schedule, spec)
            self.timings["line_search"] += time.perf_counter() - t0
            peers_c = yield RoundTag(outer, 0, Phase.CANDIDATE), (cx, cu)
            t0 = time.perf_counter()
            everyone = self._gather((cx, cu), peers_c)
            idx, costs = select_candidate(np.stack([e[0] for e in everyone]),
                                          np.stack([e[1] for e in everyone]), spec)
            x_hat, u_hat = cx[idx], cu[idx]
            history.append(float(costs[idx]))
            alpha_idx.append(idx)
            self.timings["line_search"] += time.perf_counter() - t0
            if termination_check(history, hyp.outer_tol):
                converged = True
                break

        return AgentOutcome(i, x_hat, u_hat, history, y_hist, alpha_idx, converged,
                            dict(self.timings), list(self.lqr_times))


def _drive_lockstep(agents: list[Agent], exchange: Exchange, threads: int):
    gens = [a.run() for a in agents]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        def advance(i, value):
            try:
                return ("msg", gens[i].send(value))
            except StopIteration as stop:
                return ("done", stop.value)
            except Exception as exc:
                raise AgentFailure(i, exc) from exc

        step_results = [advance(i, None) for i in range(len(gens))]
        while True:
            kinds = {kind for kind, _ in step_results}
            if kinds == {"done"}:
                return [v for _, v in step_results]
            if "done" in kinds:
                raise ProtocolError("agents disagree on termination")
            tags = [v[0] for _, v in step_results]
            for i, (_, (tag, payload)) in enumerate(step_results):
                exchange.post(i, tag, payload)
            inbox = [exchange.collect(i, tags[i]) for i in range(len(gens))]
            if pool is None:
                step_results = [advance(i, inbox[i]) for i in range(len(gens))]
            else:
                step_results = list(pool.map(advance, range(len(gens)), inbox))
    finally:
        if pool is not None:
            pool.shutdown()


def _drive_threads(agents: list[Agent], exchange: Exchange):
    """One blocking worker thread per agent; rounds synchronize via broadcast_gather."""
    import threading

    results: list = [None] * len(agents)
    errors: list = []

    def worker(a: Agent):
        gen = a.run()
        try:
            tag, payload = next(gen)
            while True:
                peers = exchange.broadcast_gather(a.i, tag, payload)
                tag, payload = gen.send(peers)
        except StopIteration as stop:
            results[a.i] = stop.value
        except BaseException as exc:  # noqa: BLE001 - forwarded to the coordinator
            errors.append((a.i, exc))
            exchange.abort(f"agent {a.i} failed: {exc!r}")

    threads = [threading.Thread(target=worker, args=(a,), name=f"agent-{a.i}") for a in agents]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        # report the agent that actually failed, not the peers it woke up
        errors.sort(key=lambda e: (isinstance(e[1], ExchangeAborted), e[0]))
        agent, exc = errors[0]
        raise AgentFailure(agent, exc) from exc
    return results


def plan_decentralized(spec: ScenarioSpec, hyper: HyperParams | None = None,
                       threads: int = 1, timeout: float = 30.0) -> PlanResult:
    """Run all agents to termination and aggregate their outcomes.

    threads <= 1 steps every agent inline, threads >= N gives each agent its own
    blocking worker, anything in between shares a pool across lockstep rounds.
    """
    hyper = hyper or HyperParams()
    check_scenario(spec)
    N = spec.N
    agents = [Agent(i, spec, hyper) for i in range(N)]
    exchange = Exchange(N, timeout=timeout)
    t0 = time.perf_counter()
    if threads >= N and N > 1:
        outcomes = _drive_threads(agents, exchange)
    else:
        outcomes = _drive_lockstep(agents, exchange, threads)
    wall = time.perf_counter() - t0

    ref = outcomes[0]
    for o in outcomes[1:]:
        if o.alpha_indices != ref.alpha_indices or o.cost_history != ref.cost_history:
            raise ProtocolError(f"agent {o.agent} diverged from agent 0 in line-search selection")
    states = np.stack([o.states for o in outcomes])
    inputs = np.stack([o.inputs for o in outcomes])
    variances = [admm.consensus_variance([o.y_history[k] for o in outcomes])
                 for k in range(len(ref.y_history))]
    timings = {key: max(o.timings[key] for o in outcomes) for key in ref.timings}
    timings["total"] = wall
    if not ref.converged:
        log.warning("decentralized planner hit max_outer_iters=%d without converging",
                    hyper.max_outer_iters)
    return PlanResult(
        states=states, inputs=inputs,
        cost_history=list(ref.cost_history),
        variance_history=variances,
        min_distance=min_pair_distance(states),
        outer_iters=len(ref.alpha_indices),
        converged=ref.converged,
        solver="decentralized",
        alpha_indices=list(ref.alpha_indices),
        timings=timings,
        exchange=exchange.stats().as_dict(),
        lqr_times=[float(np.mean(o.lqr_times)) for o in outcomes],
        wall_time=wall,
    )
