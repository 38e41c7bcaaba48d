"""Discrete kinematic vehicle model, rollouts and analytic Jacobians.

State is (px, py, theta, v), input is (delta, a). All functions broadcast over
leading axes, so a batch of vehicles or stages can be stepped at once.
"""
from __future__ import annotations

import numpy as np

from .model import N_INPUT, N_STATE, Trajectory

FD_STEP = 1e-6


def _chord_terms(v, delta, b, tau_s):
    s = tau_s * v * np.sin(delta)
    rad = b * b - s * s
    return s, np.maximum(rad, 0.0), rad < 0.0


def saturation_mask(v, delta, b, tau_s):
    """True where the sqrt/arcsin arguments of the model leave their domain."""
    s = tau_s * np.asarray(v) * np.sin(delta)
    return np.abs(s) > b


def f_r(v, delta, b, tau_s):
    """Distance travelled by the vehicle center in one step."""
    _, rad, _ = _chord_terms(v, delta, b, tau_s)
    return b + tau_s * v * np.cos(delta) - np.sqrt(rad)


def step(x, u, b, tau_s):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    px, py, th, v = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    delta, acc = u[..., 0], u[..., 1]
    dist = f_r(v, delta, b, tau_s)
    dth = np.arcsin(np.clip(tau_s * v * np.sin(delta) / b, -1.0, 1.0))
    return np.stack(
        [px + dist * np.cos(th), py + dist * np.sin(th), th + dth, v + tau_s * acc], axis=-1)


def rollout(x0, inputs, b, tau_s) -> Trajectory:
    inputs = np.asarray(inputs, dtype=float)
    T = inputs.shape[0]
    states = np.empty((T + 1, N_STATE))
    states[0] = x0
    for t in range(T):
        states[t + 1] = step(states[t], inputs[t], b, tau_s)
    sat = np.flatnonzero(saturation_mask(states[:-1, 3], inputs[:, 0], b, tau_s))
    return Trajectory(states, inputs, tuple(int(k) for k in sat))


def rollout_batch(x0, inputs, b, tau_s) -> np.ndarray:
    """Open-loop rollout of B trajectories at once; inputs (B, T, 2) -> states (B, T+1, 4)."""
    inputs = np.asarray(inputs, dtype=float)
    B, T, _ = inputs.shape
    states = np.empty((B, T + 1, N_STATE))
    states[:, 0] = x0
    for t in range(T):
        states[:, t + 1] = step(states[:, t], inputs[:, t], b, tau_s)
    return states


def dynamics_residual(traj: Trajectory, b, tau_s) -> float:
    """Max-norm violation of x[t+1] = f(x[t], u[t]) over the horizon."""
    pred = step(traj.states[:-1], traj.inputs, b, tau_s)
    return float(np.max(np.abs(traj.states[1:] - pred), initial=0.0))


def linearize(x, u, b, tau_s):
    """Analytic (A, B) of the step map; broadcasts over leading axes.

    Points at the sqrt saturation boundary fall back to central differences.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    th, v = x[..., 2], x[..., 3]
    delta = u[..., 0]
    sd, cd = np.sin(delta), np.cos(delta)
    s, rad, bad = _chord_terms(v, delta, b, tau_s)
    sq = np.sqrt(rad)
    bad = bad | (sq < 1e-9)
    sq_safe = np.where(bad, 1.0, sq)

    dist = b + tau_s * v * cd - sq
    ddist_dv = tau_s * cd + s * tau_s * sd / sq_safe
    ddist_ddelta = -tau_s * v * sd + s * tau_s * v * cd / sq_safe
    dth_dv = tau_s * sd / sq_safe
    dth_ddelta = tau_s * v * cd / sq_safe
    c, sn = np.cos(th), np.sin(th)

    shape = x.shape[:-1]
    A = np.zeros(shape + (N_STATE, N_STATE))
    A[..., 0, 0] = A[..., 1, 1] = A[..., 2, 2] = A[..., 3, 3] = 1.0
    A[..., 0, 2] = -dist * sn
    A[..., 0, 3] = ddist_dv * c
    A[..., 1, 2] = dist * c
    A[..., 1, 3] = ddist_dv * sn
    A[..., 2, 3] = dth_dv
    B = np.zeros(shape + (N_STATE, N_INPUT))
    B[..., 0, 0] = ddist_ddelta * c
    B[..., 1, 0] = ddist_ddelta * sn
    B[..., 2, 0] = dth_ddelta
    B[..., 3, 1] = tau_s

    if np.any(bad):
        if not shape:
            return linearize_fd(x, u, b, tau_s)
        for idx in map(tuple, np.argwhere(bad)):
            A[idx], B[idx] = linearize_fd(x[idx], u[idx], b, tau_s)
    return A, B


def linearize_fd(x, u, b, tau_s, eps: float = FD_STEP):
    """Central finite-difference Jacobians of one step."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    A = np.empty((N_STATE, N_STATE))
    B = np.empty((N_STATE, N_INPUT))
    for k in range(N_STATE):
        e = np.zeros(N_STATE)
        e[k] = eps
        A[:, k] = (step(x + e, u, b, tau_s) - step(x - e, u, b, tau_s)) / (2 * eps)
    for k in range(N_INPUT):
        e = np.zeros(N_INPUT)
        e[k] = eps
        B[:, k] = (step(x, u + e, b, tau_s) - step(x, u - e, b, tau_s)) / (2 * eps)
    return A, B


def linearize_trajectory(traj: Trajectory, b, tau_s):
    """Per-stage Jacobians along a trajectory: A (T, 4, 4), B (T, 4, 2)."""
    return linearize(traj.states[:-1], traj.inputs, b, tau_s)
