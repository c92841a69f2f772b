"""Temporal feature codes for the agent.

Microstimuli: each stimulus event deploys m Gaussian basis activations read
off an exponentially decaying trace height, giving a coarse code of elapsed
time whose resolution degrades with age.  A one-hot-per-age CSC code is kept
as the perfect-clock baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GAUSS_PEAK",
    "MicrostimuliConfig",
    "TraceState",
    "trace_height",
    "basis",
    "microstimuli_features",
    "csc_features",
    "deploy_event",
    "override_age",
    "tick",
]

GAUSS_PEAK = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MicrostimuliConfig:
    """m microstimuli per event, zeta events per episode, so D = m * zeta."""

    m: int = 6
    beta: float = 0.1
    xi: float = 0.9
    zeta: int = 3

    def __post_init__(self) -> None:
        if self.m < 1 or self.zeta < 1:
            raise ValueError("m and zeta must be >= 1")
        if self.beta <= 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0.0 < self.xi < 1.0:
            raise ValueError(f"xi must be in (0, 1), got {self.xi}")

    @property
    def dim(self) -> int:
        return self.m * self.zeta


@dataclass(frozen=True)
class TraceState:
    """Deployed events as (event_id, age-in-timesteps) pairs plus a clock.

    ``capacity`` is the number of event slots; event ids index feature
    blocks, so they must be unique and in [0, capacity).
    """

    capacity: int
    events: tuple[tuple[int, int], ...] = ()
    clock: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        ids = [e for e, _ in self.events]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate event ids")
        if len(self.events) > self.capacity:
            raise ValueError("more events than capacity")
        for event_id, age in self.events:
            if not 0 <= event_id < self.capacity:
                raise ValueError(f"event id {event_id} outside [0, {self.capacity})")
            if age < 0:
                raise ValueError(f"negative age {age}")

    @classmethod
    def empty(cls, capacity: int) -> "TraceState":
        return cls(capacity=capacity)

    def age_of(self, event_id: int) -> int:
        for eid, age in self.events:
            if eid == event_id:
                return age
        raise KeyError(f"event {event_id} not deployed")


def trace_height(age: int, xi: float) -> float:
    """Exponentially decaying memory-trace height exp(-(1 - xi) * age)."""
    if age < 0:
        raise ValueError(f"age must be >= 0, got {age}")
    return math.exp(-(1.0 - xi) * age)


def basis(h: float, center: float, beta: float) -> float:
    """Gaussian bump of width ``beta`` evaluated at trace height ``h``."""
    if beta <= 0.0:
        raise ValueError(f"beta must be > 0, got {beta}")
    return GAUSS_PEAK * math.exp(-((h - center) ** 2) / (2.0 * beta * beta))


def microstimuli_features(state: TraceState, cfg: MicrostimuliConfig) -> np.ndarray:
    """Activation vector of length D; undeployed event blocks stay zero.

    Event e fills slots [e*m, (e+1)*m) with h * basis(h, j/m, beta) for
    j = 1..m, where h is the event's current trace height.
    """
    if len(state.events) > cfg.zeta:
        raise ValueError(
            f"{len(state.events)} events exceed the {cfg.zeta} configured slots"
        )
    x = np.zeros(cfg.dim)
    centers = np.arange(1, cfg.m + 1) / cfg.m
    for event_id, age in state.events:
        if event_id >= cfg.zeta:
            raise ValueError(f"event id {event_id} outside [0, {cfg.zeta})")
        h = trace_height(age, cfg.xi)
        block = h * GAUSS_PEAK * np.exp(
            -((h - centers) ** 2) / (2.0 * cfg.beta**2)
        )
        x[event_id * cfg.m : (event_id + 1) * cfg.m] = block
    return x


def csc_features(state: TraceState, horizon: int) -> np.ndarray:
    """One-hot per event: slot (e, age) is 1 while age < horizon.

    Perfect-clock baseline; vector length is capacity * horizon.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x = np.zeros(state.capacity * horizon)
    for event_id, age in state.events:
        if age < horizon:
            x[event_id * horizon + age] = 1.0
    return x


def deploy_event(state: TraceState, event_id: int) -> TraceState:
    """Add a fresh event at age 0; existing events are untouched."""
    if any(eid == event_id for eid, _ in state.events):
        raise ValueError(f"event {event_id} already deployed")
    if len(state.events) >= state.capacity:
        raise ValueError(f"all {state.capacity} event slots already deployed")
    if not 0 <= event_id < state.capacity:
        raise ValueError(f"event id {event_id} outside [0, {state.capacity})")
    return TraceState(
        capacity=state.capacity,
        events=state.events + ((event_id, 0),),
        clock=state.clock,
    )


def override_age(state: TraceState, event_id: int, new_age: int) -> TraceState:
    """Replace one event's age; later ticks increment from the new value."""
    if new_age < 0:
        raise ValueError(f"new_age must be >= 0, got {new_age}")
    if not any(eid == event_id for eid, _ in state.events):
        raise ValueError(f"event {event_id} not deployed")
    events = tuple(
        (eid, new_age if eid == event_id else age) for eid, age in state.events
    )
    return TraceState(capacity=state.capacity, events=events, clock=state.clock)


def tick(state: TraceState) -> TraceState:
    """Advance one timestep: every deployed event ages by 1."""
    return TraceState(
        capacity=state.capacity,
        events=tuple((eid, age + 1) for eid, age in state.events),
        clock=state.clock + 1,
    )
