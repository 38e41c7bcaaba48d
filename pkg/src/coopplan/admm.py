"""Dual consensus ADMM state and closed-form updates for one agent."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import time

import numpy as np

from .cost import CouplingModel
from .lqr import backward_pass, build_augmented_costs, linear_forward_pass


@dataclass
class DualState:
    """Agent-local ADMM vectors. Only the owning agent writes to it."""

    y: np.ndarray
    z: np.ndarray
    p: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, D: int) -> "DualState":
        return cls(*(np.zeros(D) for _ in range(4)))

    def reset_multipliers(self) -> None:
        # y and z carry over as warm start; only p and s restart
        self.p = np.zeros_like(self.p)
        self.s = np.zeros_like(self.s)


@dataclass(frozen=True)
class BoxBounds:
    """Admissible input deviations u_min - u and u_max - u, stacked (N*T*m,)."""

    lower: np.ndarray
    upper: np.ndarray


def box_bounds(inputs, u_lower, u_upper) -> BoxBounds:
    """inputs is (N, T, m) for all agents."""
    inputs = np.asarray(inputs)
    return BoxBounds(lower=(u_lower - inputs).ravel(), upper=(u_upper - inputs).ravel())


def _peer_sum(vectors: Sequence[np.ndarray], D: int) -> np.ndarray:
    total = np.zeros(D)
    for v in vectors:
        total += v
    return total


def p_update(p, y_self, y_others: Sequence[np.ndarray], rho: float, degree: int | None = None):
    """p + rho * sum_j (y_i - y_j); peers must already be in ascending agent order."""
    if degree is not None and len(y_others) != degree:
        raise ValueError(f"expected {degree} peer vectors, got {len(y_others)}")
    diff = len(y_others) * y_self - _peer_sum(y_others, y_self.shape[0])
    return p + rho * diff


def s_update(s, y, z, sigma: float):
    return s + sigma * (y - z)


def compute_r(y_self, y_others: Sequence[np.ndarray], z, p_new, s_new, rho: float, sigma: float):
    pair_sum = len(y_others) * y_self + _peer_sum(y_others, y_self.shape[0])
    return rho * pair_sum + sigma * z - p_new - s_new


def apply_jacobian(coupling: CouplingModel, agent: int, dx, du) -> np.ndarray:
    """The agent's J^i dX as a D-vector: collision rows then the agent's own input rows."""
    N = coupling.N
    T, m = np.shape(du)
    out = np.zeros(coupling.l.size + N * T * m)
    if coupling.n_pairs:
        out[:coupling.l.size] = coupling.apply(agent, dx).ravel()
    start = coupling.l.size + agent * T * m
    out[start:start + T * m] = np.ravel(du)
    return out


def y_update(j_dx, r, sigma: float, rho: float, degree: int):
    return (j_dx + r) / (sigma + 2.0 * rho * degree)


def z1_update(s1, y1, l, N: int, sigma: float):
    """Collision block: closed-form prox of ||z + l||^2 mapped back through Moreau."""
    return 2.0 / (2.0 * N * sigma + 1.0) * (N * s1 + N * sigma * y1 + l)


def z2_update(s2, y2, bounds: BoxBounds, N: int, sigma: float):
    """Box block: projection onto the admissible deviations, then Moreau recombination."""
    z_star = np.clip(N * (s2 + sigma * y2), bounds.lower, bounds.upper)
    return s2 / sigma + y2 - z_star / (N * sigma)


def z_update(s, y, l_vec, bounds: BoxBounds, N: int, sigma: float):
    n1 = l_vec.size
    z = np.empty_like(y)
    z[:n1] = z1_update(s[:n1], y[:n1], l_vec, N, sigma)
    z[n1:] = z2_update(s[n1:], y[n1:], bounds, N, sigma)
    return z


def consensus_variance(ys: Sequence[np.ndarray]) -> float:
    """Mean over coordinates of the population variance across agents."""
    Y = np.asarray(ys)
    if Y.shape[0] < 2 or Y.shape[1] == 0:
        return 0.0
    return float(np.mean(np.var(Y, axis=0)))


def inner_iteration(duals: DualState, y_others: Sequence[np.ndarray], quad, coupling: CouplingModel,
                    agent: int, A, B, l_vec, bounds: BoxBounds, sigma: float, rho: float,
                    timings: dict | None = None):
    """One full ADMM round for one agent; updates duals in place and returns (dx, du, gains).

    y_others must be the peers' y from the same round in ascending agent order. When
    timings is given, CPU seconds of this thread spent in the Riccati solve and forward
    pass are added under "lqr" (immune to other agents sharing the core); wall seconds
    of everything else (dual updates, forming the augmented costs) go to "dual".
    """
    degree = coupling.N - 1
    t0 = time.perf_counter()
    p_new = p_update(duals.p, duals.y, y_others, rho, degree)
    s_new = s_update(duals.s, duals.y, duals.z, sigma)
    r = compute_r(duals.y, y_others, duals.z, p_new, s_new, rho, sigma)
    aug = build_augmented_costs(quad, coupling, agent, r, sigma, rho, degree)
    t1, c1 = time.perf_counter(), time.thread_time()
    gains = backward_pass(aug, A, B)
    dx, du = linear_forward_pass(gains, A, B)
    t2, c2 = time.perf_counter(), time.thread_time()
    y_new = y_update(apply_jacobian(coupling, agent, dx, du), r, sigma, rho, degree)
    z_new = z_update(s_new, y_new, l_vec, bounds, coupling.N, sigma)
    duals.p, duals.s, duals.y, duals.z = p_new, s_new, y_new, z_new
    if timings is not None:
        timings["lqr"] = timings.get("lqr", 0.0) + (c2 - c1)
        timings["dual"] = timings.get("dual", 0.0) + (t1 - t0) + (time.perf_counter() - t2)
    return dx, du, gains
