"""Exact costs and the per-iteration convex model (host quadratics, Gauss-Newton coupling)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import N_STATE, ScenarioSpec, pair_list

COINCIDENT_TOL = 1e-9


class CouplingError(ValueError):
    pass


def host_cost(states, inputs, reference, Q, R) -> float:
    """Tracking plus input cost of one vehicle, terminal stage included."""
    dx = np.asarray(states) - np.asarray(reference)
    u = np.asarray(inputs)
    return float(np.einsum("ti,ij,tj->", dx, Q, dx) + np.einsum("ti,ij,tj->", u, R, u))


def collision_cost_pair(d, beta, d_safe):
    d = np.asarray(d, dtype=float)
    gap = np.minimum(d - d_safe, 0.0)
    out = beta * gap * gap
    return float(out) if out.ndim == 0 else out


def _pair_arrays(N):
    pairs = pair_list(N)
    if not pairs:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    ii, jj = np.array(pairs).T
    return ii, jj


def pair_distances(states) -> np.ndarray:
    """Center distances for all pairs, shape (..., T+1, P) from states (..., N, T+1, 4)."""
    states = np.asarray(states)
    ii, jj = _pair_arrays(states.shape[-3])
    diff = states[..., ii, :, :2] - states[..., jj, :, :2]
    return np.moveaxis(np.linalg.norm(diff, axis=-1), -2, -1)


def min_pair_distance(states) -> float:
    d = pair_distances(states)
    return float(d.min()) if d.size else float("inf")


def total_cost_batch(states, inputs, spec: ScenarioSpec) -> np.ndarray:
    """Joint cost for candidate sets: states (K, N, T+1, 4), inputs (K, N, T, 2) -> (K,)."""
    refs = np.asarray(spec.references)
    dx = states - refs
    q, r = spec.q_diag, spec.r_diag
    host = np.einsum("knti,i,knti->k", dx, q, dx) + np.einsum("knti,i,knti->k", inputs, r, inputs)
    d = pair_distances(states)
    gap = np.minimum(d - spec.d_safe, 0.0)
    return host + spec.beta * np.einsum("ktp,ktp->k", gap, gap)


def total_cost(states, inputs, spec: ScenarioSpec) -> float:
    """Sum of host costs and pairwise collision penalties over stages 0..T."""
    return float(total_cost_batch(np.asarray(states)[None], np.asarray(inputs)[None], spec)[0])


@dataclass(frozen=True)
class StageQuadratics:
    cx: np.ndarray  # (T+1, 4), last row is the terminal gradient
    cxx: np.ndarray  # (T+1, 4, 4)
    cu: np.ndarray  # (T, 2)
    cuu: np.ndarray  # (T, 2, 2)


def quadratize_host(states, inputs, reference, Q, R) -> StageQuadratics:
    states = np.asarray(states)
    inputs = np.asarray(inputs)
    T = inputs.shape[0]
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    return StageQuadratics(
        cx=2.0 * (states - reference) @ Q,
        cxx=np.broadcast_to(2.0 * Q, (T + 1,) + Q.shape).copy(),
        cu=2.0 * inputs @ R,
        cuu=np.broadcast_to(2.0 * R, (T,) + R.shape).copy(),
    )


def host_model_cost(quad: StageQuadratics, dx, du) -> float:
    """Second-order model change of the host cost for a perturbation (dx, du)."""
    return float(
        np.einsum("ti,ti->", quad.cx, dx) + np.einsum("ti,ti->", quad.cu, du)
        + 0.5 * np.einsum("ti,tij,tj->", dx, quad.cxx, dx)
        + 0.5 * np.einsum("ti,tij,tj->", du, quad.cuu, du))


@dataclass(frozen=True)
class CouplingModel:
    """Gauss-Newton model of the collision penalties around the nominal trajectories.

    ``l`` is (T+1, P) with pair columns in lexicographic order; flattening it
    row-major gives the time-major residual vector. ``grad`` holds the
    position gradient of each pair residual w.r.t. the first vehicle of the
    pair; the second vehicle sees the negation. Inactive pairs have zero grad.
    """

    l: np.ndarray  # (T+1, P)
    grad: np.ndarray  # (T+1, P, 2)
    N: int

    @property
    def n_pairs(self) -> int:
        return self.l.shape[1]

    def agent_rows(self, i: int):
        """Pair columns involving agent i and the sign of its Jacobian rows."""
        ii, jj = _pair_arrays(self.N)
        cols = np.flatnonzero((ii == i) | (jj == i))
        signs = np.where(ii[cols] == i, 1.0, -1.0)
        return cols, signs

    def jacobian(self, i: int, t: int) -> np.ndarray:
        """Dense J_t^i of shape (P, 4)."""
        J = np.zeros((self.n_pairs, N_STATE))
        cols, signs = self.agent_rows(i)
        J[cols, :2] = signs[:, None] * self.grad[t, cols]
        return J

    def agent_blocks(self, i: int) -> np.ndarray:
        """Nonzero rows of J_t^i for all t, shape (T+1, N-1, 2), ordered like agent_rows."""
        cols, signs = self.agent_rows(i)
        return signs[None, :, None] * self.grad[:, cols]

    def apply(self, i: int, dx) -> np.ndarray:
        """J^i dx stage-wise: dx (T+1, 4) -> (T+1, P)."""
        out = np.zeros_like(self.l)
        cols, _ = self.agent_rows(i)
        out[:, cols] = np.einsum("tpk,tk->tp", self.agent_blocks(i), np.asarray(dx)[:, :2])
        return out


def build_coupling(states, beta, d_safe) -> CouplingModel:
    """Residuals sqrt(beta) * min(d - d_safe, 0) and their position gradients."""
    states = np.asarray(states)
    N = states.shape[0]
    ii, jj = _pair_arrays(N)
    diff = states[ii, :, :2] - states[jj, :, :2]  # (P, T+1, 2)
    d = np.linalg.norm(diff, axis=-1)
    if d.size and d.min() < COINCIDENT_TOL:
        p, t = np.unravel_index(np.argmin(d), d.shape)
        raise CouplingError(
            f"vehicles {ii[p]} and {jj[p]} have coincident centers at stage {t}")
    sb = np.sqrt(beta)
    active = d < d_safe
    l = sb * np.minimum(d - d_safe, 0.0)
    grad = np.zeros_like(diff)
    if d.size:
        grad[active] = sb * diff[active] / d[active][:, None]
    return CouplingModel(
        l=np.ascontiguousarray(l.T), grad=np.ascontiguousarray(grad.transpose(1, 0, 2)), N=N)
