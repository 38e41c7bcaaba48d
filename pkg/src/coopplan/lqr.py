"""Per-agent LQR subproblem: augmented stage costs, Riccati recursion, forward pass."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cost import CouplingModel, StageQuadratics

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
REG_LADDER = (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)


class ConditioningError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class AugmentedStageCosts:
    """Quadratic stage model 0.5 x'Qxx x + qx'x + 0.5 u'Quu u + qu'u (terminal row T has no input)."""

    qx: np.ndarray  # (T+1, n)
    Qxx: np.ndarray  # (T+1, n, n)
    qu: np.ndarray  # (T, m)
    Quu: np.ndarray  # (T, m, m)

    @property
    def T(self) -> int:
        return self.qu.shape[0]


@dataclass(frozen=True)
class GainSchedule:
    k: np.ndarray  # (T, m)
    K: np.ndarray  # (T, m, n)
    reg: float = 0.0


def split_dual(vec, n_pairs: int, N: int, T: int, m: int):
    """Views of a D-vector as collision block (T+1, P) and box block (N, T, m)."""
    n1 = n_pairs * (T + 1)
    return vec[:n1].reshape(T + 1, n_pairs), vec[n1:].reshape(N, T, m)


def build_augmented_costs(quad: StageQuadratics, coupling: CouplingModel, agent: int,
                          r, sigma: float, rho: float, degree: int) -> AugmentedStageCosts:
    """Host quadratics plus the ADMM proximal terms J'J/c, J'r/c, I/c, r2/c with c = sigma + 2 rho d."""
    T, m = quad.cu.shape
    N, P = coupling.N, coupling.n_pairs
    r = np.asarray(r)
    expected = P * (T + 1) + N * T * m
    if r.shape != (expected,):
        raise ValueError(f"r has shape {r.shape}, expected ({expected},) "
                         f"= collision block {P * (T + 1)} + box block {N * T * m}")
    c = sigma + 2.0 * rho * degree
    r1, r2 = split_dual(r, P, N, T, m)

    qx = quad.cx.copy()
    Qxx = quad.cxx.copy()
    if P:
        cols, _ = coupling.agent_rows(agent)
        blocks = coupling.agent_blocks(agent)  # (T+1, N-1, 2)
        qx[:, :2] += np.einsum("tpk,tp->tk", blocks, r1[:, cols]) / c
        Qxx[:, :2, :2] += np.einsum("tpk,tpl->tkl", blocks, blocks) / c
    qu = quad.cu + r2[agent] / c
    Quu = quad.cuu + np.eye(m) / c
    return AugmentedStageCosts(qx=qx, Qxx=Qxx, qu=qu, Quu=Quu)


def subproblem_objective(costs: AugmentedStageCosts, dx, du) -> float:
    return float(
        np.einsum("ti,ti->", costs.qx, dx) + 0.5 * np.einsum("ti,tij,tj->", dx, costs.Qxx, dx)
        + np.einsum("ti,ti->", costs.qu, du) + 0.5 * np.einsum("ti,tij,tj->", du, costs.Quu, du))


def _cond(H) -> float:
    if H.shape == (2, 2):
        a, b, d = H[0, 0], 0.5 * (H[0, 1] + H[1, 0]), H[1, 1]
        half_tr = 0.5 * (a + d)
        disc = np.sqrt(max(half_tr * half_tr - (a * d - b * b), 0.0))
        lo, hi = abs(half_tr - disc), abs(half_tr + disc)
        return np.inf if lo == 0.0 else hi / lo
    return float(np.linalg.cond(H))


def _riccati(costs: AugmentedStageCosts, A, B, reg: float):
    T, m = costs.qu.shape
    n = costs.qx.shape[1]
    k = np.empty((T, m))
    K = np.empty((T, m, n))
    V = costs.Qxx[T]
    v = costs.qx[T]
    eye = np.eye(m)
    for t in range(T - 1, -1, -1):
        At, Bt = A[t], B[t]
        BtV = Bt.T @ V
        Huu = costs.Quu[t] + BtV @ Bt + reg * eye
        hu = costs.qu[t] + Bt.T @ v
        Hux = BtV @ At
        if _cond(Huu) > COND_LIMIT:
            return None, t
        sol = np.linalg.solve(Huu, np.column_stack([hu, Hux]))
        kt = -sol[:, 0]
        Kt = -sol[:, 1:]
        AtV = At.T @ V
        v = costs.qx[t] + At.T @ v + Kt.T @ (Huu @ kt + hu) + Hux.T @ kt
        V = costs.Qxx[t] + AtV @ At + Kt.T @ Huu @ Kt + Kt.T @ Hux + Hux.T @ Kt
        V = 0.5 * (V + V.T)
        k[t] = kt
        K[t] = Kt
    return (k, K), None


def backward_pass(costs: AugmentedStageCosts, A, B, reg: float = 0.0) -> GainSchedule:
    """Riccati recursion; retries with growing Levenberg terms on ill-conditioned input Hessians."""
    ladder = [reg] + [x for x in REG_LADDER if x > reg]
    worst = None
    for mu in ladder:
        gains, bad_stage = _riccati(costs, A, B, mu)
        if gains is not None:
            if mu > 0:
                log.debug("backward pass needed regularization %.1e", mu)
            return GainSchedule(gains[0], gains[1], mu)
        worst = bad_stage
    raise ConditioningError(
        f"input Hessian condition number above {COND_LIMIT:.0e} at stage {worst} "
        f"even with regularization {ladder[-1]:.0e}")


def linear_forward_pass(gains: GainSchedule, A, B):
    """Propagate du = k + K dx through the linearized dynamics from dx_0 = 0."""
    T, m = gains.k.shape
    n = A.shape[1]
    dx = np.zeros((T + 1, n))
    du = np.empty((T, m))
    for t in range(T):
        du[t] = gains.k[t] + gains.K[t] @ dx[t]
        dx[t + 1] = A[t] @ dx[t] + B[t] @ du[t]
    return dx, du
