"""In-process simulation of complete-graph V2V broadcast rounds.

Every agent contributes one payload per tag; nobody sees a round until all N
payloads for that tag are present. Payloads are copied into read-only
snapshots on entry so agents never share mutable memory.
"""
from __future__ import annotations

import enum
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


class Phase(str, enum.Enum):
    TRAJECTORY = "trajectory-exchange"
    DUAL = "dual-exchange"
    CANDIDATE = "candidate-exchange"


@dataclass(frozen=True, order=True)
class RoundTag:
    outer_iter: int
    inner_iter: int
    phase: Phase


class ProtocolError(RuntimeError):
    pass


class ExchangeTimeout(RuntimeError):
    def __init__(self, tag, missing):
        self.tag = tag
        self.missing = sorted(missing)
        super().__init__(f"round {tag} timed out waiting for agents {self.missing}")


class ExchangeAborted(RuntimeError):
    pass


@dataclass
class PhaseStats:
    messages: int = 0
    payload_scalars: int = 0
    barrier_seconds: float = 0.0
    rounds: int = 0


@dataclass
class ExchangeStats:
    phases: dict = field(default_factory=lambda: {p.value: PhaseStats() for p in Phase})

    def as_dict(self) -> dict:
        return {k: vars(v).copy() for k, v in self.phases.items()}

    @property
    def total_messages(self) -> int:
        return sum(p.messages for p in self.phases.values())


def _snapshot(payload):
    if isinstance(payload, np.ndarray):
        a = np.array(payload, copy=True)
        a.setflags(write=False)
        return a
    if isinstance(payload, tuple):
        return tuple(_snapshot(p) for p in payload)
    if isinstance(payload, list):
        return tuple(_snapshot(p) for p in payload)
    if isinstance(payload, dict):
        return {k: _snapshot(v) for k, v in payload.items()}
    return payload


def payload_size(payload) -> int:
    """Number of scalars carried by a payload."""
    if isinstance(payload, np.ndarray):
        return int(payload.size)
    if isinstance(payload, (tuple, list)):
        return sum(payload_size(p) for p in payload)
    if isinstance(payload, dict):
        return sum(payload_size(v) for v in payload.values())
    return 1


class Exchange:
    def __init__(self, n_agents: int, timeout: float = 30.0):
        self.n_agents = n_agents
        self.timeout = timeout
        self._cond = threading.Condition()
        self._rounds: dict[RoundTag, dict[int, object]] = defaultdict(dict)
        self._delivered: dict[RoundTag, set[int]] = defaultdict(set)
        self._seen: set[tuple[int, RoundTag]] = set()
        self._stats = ExchangeStats()
        self._aborted: str | None = None

    def post(self, agent: int, tag: RoundTag, payload) -> None:
        if not 0 <= agent < self.n_agents:
            raise ProtocolError(f"unknown agent {agent}")
        snap = _snapshot(payload)
        with self._cond:
            if (agent, tag) in self._seen:
                raise ProtocolError(f"agent {agent} already sent for round {tag}")
            self._seen.add((agent, tag))
            rnd = self._rounds[tag]
            rnd[agent] = snap
            if len(rnd) == self.n_agents:
                st = self._stats.phases[tag.phase.value]
                st.rounds += 1
                st.messages += self.n_agents * (self.n_agents - 1)
                st.payload_scalars += (self.n_agents - 1) * sum(
                    payload_size(p) for p in rnd.values())
                self._cond.notify_all()

    def complete(self, tag: RoundTag) -> bool:
        with self._cond:
            return len(self._rounds.get(tag, ())) == self.n_agents

    def collect(self, agent: int, tag: RoundTag) -> dict[int, object]:
        """Peers' payloads of a completed round, keyed and ordered by ascending agent id."""
        with self._cond:
            return self._collect_locked(agent, tag)

    def _collect_locked(self, agent, tag):
        rnd = self._rounds.get(tag)
        if rnd is None or len(rnd) != self.n_agents:
            raise ProtocolError(f"round {tag} is incomplete")
        if agent in self._delivered[tag]:
            raise ProtocolError(f"agent {agent} already collected round {tag}")
        self._delivered[tag].add(agent)
        out = {j: rnd[j] for j in sorted(rnd) if j != agent}
        if len(self._delivered[tag]) == self.n_agents:
            del self._rounds[tag]
            del self._delivered[tag]
        return out

    def broadcast_gather(self, agent: int, tag: RoundTag, payload, timeout: float | None = None):
        """Send to every peer and block until all peers' payloads for ``tag`` arrived."""
        self.post(agent, tag, payload)
        timeout = self.timeout if timeout is None else timeout
        t0 = time.perf_counter()
        with self._cond:
            ok = self._cond.wait_for(
                lambda: self._aborted is not None
                or len(self._rounds.get(tag, ())) == self.n_agents, timeout)
            self._stats.phases[tag.phase.value].barrier_seconds += time.perf_counter() - t0
            if self._aborted is not None:
                raise ExchangeAborted(self._aborted)
            if not ok:
                missing = set(range(self.n_agents)) - set(self._rounds.get(tag, {}))
                err = ExchangeTimeout(tag, missing)
                self._aborted = str(err)
                self._cond.notify_all()
                raise err
            return self._collect_locked(agent, tag)

    def abort(self, reason: str) -> None:
        with self._cond:
            self._aborted = reason
            self._cond.notify_all()

    def stats(self) -> ExchangeStats:
        with self._cond:
            return ExchangeStats({k: PhaseStats(**vars(v)) for k, v in self._stats.phases.items()})

    def reset_stats(self) -> None:
        with self._cond:
            self._stats = ExchangeStats()
