"""Shared problem types, dimensioning and scenario validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_STATE = 4  # (px, py, theta, v)
N_INPUT = 2  # (delta, a)

STATE_NAMES = ("px", "py", "theta", "v")
INPUT_NAMES = ("delta", "a")

DEFAULT_ALPHAS = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.0)


class ScenarioError(ValueError):
    """Raised when a scenario fails validation; carries the diagnostics list."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.diagnostics))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dimensions:
    N: int
    T: int
    n: int
    m: int
    M: int  # per-agent decision dimension
    n_pairs: int
    D: int  # dual dimension
    degree: int

    @property
    def collision_rows(self) -> int:
        return self.n_pairs * (self.T + 1)

    @property
    def box_rows(self) -> int:
        return self.N * self.T * self.m


def compute_dimensions(N: int, T: int, n: int = N_STATE, m: int = N_INPUT) -> Dimensions:
    if N < 1 or T < 1:
        raise ValueError(f"need N >= 1 and T >= 1, got N={N}, T={T}")
    n_pairs = N * (N - 1) // 2
    return Dimensions(
        N=N, T=T, n=n, m=m,
        M=(T + 1) * n + T * m,
        n_pairs=n_pairs,
        D=n_pairs * (T + 1) + N * T * m,
        degree=N - 1,
    )


def pair_index(i: int, j: int, N: int) -> int:
    """Row offset of the (i, j) pair, 0-based agents, lexicographic order.

    (0,1), (0,2), ..., (0,N-1), (1,2), ... map to 0, 1, 2, ...
    """
    if not (0 <= i < j < N):
        raise ValueError(f"pair_index needs 0 <= i < j < N, got i={i}, j={j}, N={N}")
    return i * N - i * (i + 1) // 2 + (j - i - 1)


def pair_list(N: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(N) for j in range(i + 1, N)]


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (T+1, 4)
    inputs: np.ndarray  # (T, 2)
    saturated: tuple[int, ...] = ()  # stages where the model clamped sqrt/arcsin arguments

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen(self.states))
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        if self.states.ndim != 2 or self.states.shape[1] != N_STATE:
            raise ValueError(f"states must be (T+1, {N_STATE}), got {self.states.shape}")
        if self.inputs.shape != (self.states.shape[0] - 1, N_INPUT):
            raise ValueError(
                f"inputs must be ({self.states.shape[0] - 1}, {N_INPUT}), got {self.inputs.shape}")

    @property
    def T(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class ScenarioSpec:
    """A full problem instance. Arrays are 0-based over vehicles."""

    x0: np.ndarray  # (N, 4)
    references: np.ndarray  # (N, T+1, 4); a list of per-vehicle arrays is accepted
    horizon: int = 100
    tau_s: float = 0.1
    wheelbase: float = 1.7
    u_lower: np.ndarray = field(default_factory=lambda: np.array([-0.6, -3.0]))
    u_upper: np.ndarray = field(default_factory=lambda: np.array([0.6, 1.5]))
    q_diag: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 0.0, 0.0]))
    r_diag: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    beta: float = 1.44
    d_safe: float = 5.5
    name: str = "scenario"

    def __post_init__(self):
        for attr in ("x0", "u_lower", "u_upper", "q_diag", "r_diag"):
            object.__setattr__(self, attr, _frozen(getattr(self, attr)))
        refs = self.references
        if isinstance(refs, np.ndarray) and refs.ndim == 3:
            refs = _frozen(refs)
        else:
            per_vehicle = [np.asarray(r, dtype=float) for r in refs]
            if len({r.shape for r in per_vehicle}) == 1 and per_vehicle:
                refs = _frozen(np.stack(per_vehicle))
            else:
                refs = tuple(_frozen(r) for r in per_vehicle)
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "tau_s", float(self.tau_s))
        object.__setattr__(self, "wheelbase", float(self.wheelbase))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "d_safe", float(self.d_safe))

    @property
    def N(self) -> int:
        return self.x0.shape[0]

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r_diag)

    @property
    def dims(self) -> Dimensions:
        return compute_dimensions(self.N, self.T)

    def replace(self, **changes) -> "ScenarioSpec":
        from dataclasses import replace
        return replace(self, **changes)

    def subset(self, agents: Sequence[int]) -> "ScenarioSpec":
        idx = list(agents)
        return self.replace(x0=self.x0[idx], references=[self.references[k] for k in idx])


@dataclass(frozen=True)
class HyperParams:
    sigma: float = 0.1
    rho: float = 0.01
    inner_iters: int = 2
    alpha_schedule: tuple[float, ...] = DEFAULT_ALPHAS
    outer_tol: float = 1.0
    max_outer_iters: int = 100

    def __post_init__(self):
        object.__setattr__(self, "alpha_schedule", tuple(float(a) for a in self.alpha_schedule))
        problems = []
        if not self.sigma > 0:
            problems.append("sigma must be positive")
        if not self.rho > 0:
            problems.append("rho must be positive")
        if self.inner_iters < 1:
            problems.append("inner_iters must be >= 1")
        if not self.alpha_schedule or 0.0 not in self.alpha_schedule:
            problems.append("alpha_schedule must be nonempty and contain 0")
        elif any(not 0.0 <= a <= 1.0 for a in self.alpha_schedule):
            problems.append("alpha_schedule entries must lie in [0, 1]")
        elif list(self.alpha_schedule) != sorted(self.alpha_schedule, reverse=True):
            problems.append("alpha_schedule must be descending")
        if self.outer_tol < 0:
            problems.append("outer_tol must be nonnegative")
        if self.max_outer_iters < 1:
            problems.append("max_outer_iters must be >= 1")
        if problems:
            raise ScenarioError(problems)


def scaled_penalties(sigma: float, rho: float, N: int, N_ref: int = 3) -> tuple[float, float]:
    """Shrink ADMM penalties proportionally to 1/N relative to a reference fleet size.

    Larger fleets converge faster with smaller sigma and rho.
    """
    return sigma * N_ref / N, rho * N_ref / N


def validate_scenario(spec: ScenarioSpec) -> list[str]:
    """Return every violated constraint; empty list means the scenario is usable."""
    diags: list[str] = []
    x0 = spec.x0
    if x0.ndim != 2 or x0.shape[1] != N_STATE:
        diags.append(f"x0 must have shape (N, {N_STATE}), got {x0.shape}")
        return diags
    N = x0.shape[0]
    if N < 1:
        diags.append("N must be >= 1")
    T = spec.horizon
    if T < 1:
        diags.append("T must be >= 1")
    refs = spec.references
    if len(refs) != N:
        diags.append(f"expected {N} references (one per vehicle), got {len(refs)}")
    for i, ref in enumerate(refs):
        if ref.ndim != 2 or ref.shape[1] != N_STATE:
            diags.append(f"vehicle {i}: reference must be (T+1, {N_STATE}), got {ref.shape}")
        elif ref.shape[0] != T + 1:
            diags.append(f"vehicle {i}: reference length {ref.shape[0]}, expected T+1 = {T + 1}")
        elif not np.all(np.isfinite(ref)):
            diags.append(f"vehicle {i}: reference contains non-finite values")
    if not np.all(np.isfinite(x0)):
        diags.append("x0 contains non-finite values")
    if not spec.tau_s > 0:
        diags.append("tau_s must be positive")
    if not spec.wheelbase > 0:
        diags.append("wheelbase must be positive")
    if not spec.d_safe > 0:
        diags.append("d_safe must be positive")
    if not spec.beta > 0:
        diags.append("beta must be positive")
    if spec.u_lower.shape != (N_INPUT,) or spec.u_upper.shape != (N_INPUT,):
        diags.append(f"input bounds must have {N_INPUT} entries")
    elif not np.all(spec.u_lower < spec.u_upper):
        diags.append("input bounds need lower < upper per channel")
    if spec.q_diag.shape != (N_STATE,) or np.any(spec.q_diag < 0):
        diags.append(f"q_diag must have {N_STATE} nonnegative entries")
    if spec.r_diag.shape != (N_INPUT,) or np.any(spec.r_diag <= 0):
        diags.append(f"r_diag must have {N_INPUT} positive entries")
    return diags


def check_scenario(spec: ScenarioSpec) -> ScenarioSpec:
    diags = validate_scenario(spec)
    if diags:
        raise ScenarioError(diags)
    return spec
