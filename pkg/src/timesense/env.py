"""Temporal-discrimination task.

The agent presses Start, hears a tone, waits through a hidden interval,
hears a second tone, and must classify the interval as Short or Long.
While waiting between tones the environment emits synthetic multichannel
sensor samples drawn from the true OU generator; these are all the timing
information the agent ever sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .ou import OUHyperparams, SampleTimes, SensorBatch, sample_paths

__all__ = [
    "Action",
    "Phase",
    "TaskConfig",
    "EnvState",
    "StepOutcome",
    "TimingTask",
    "score_points",
]


class Action(IntEnum):
    START = 0
    WAIT = 1
    SHORT = 2
    LONG = 3


class Phase(Enum):
    INIT = "Init"
    TONE = "Tone"
    INTERVAL = "Interval"
    TERMINAL = "Terminal"


@dataclass(frozen=True)
class TaskConfig:
    """Task geometry, rewards, and the hidden sensor generator."""

    dt: float = 0.3
    max_interval_steps: int = 10
    boundary_steps: int = 5
    reward_correct: float = 1.0
    reward_wrong: float = -1.0
    sensor_channels: int = 15
    samples_per_step: int = 10
    true_ou_params: OUHyperparams = field(
        default_factory=lambda: OUHyperparams(0.65, 0.45)
    )
    max_episode_steps: int = 30

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not 1 <= self.boundary_steps < self.max_interval_steps:
            raise ValueError(
                f"need 1 <= boundary_steps < max_interval_steps, got "
                f"{self.boundary_steps}, {self.max_interval_steps}"
            )
        if self.sensor_channels < 1 or self.samples_per_step < 1:
            raise ValueError("sensor_channels and samples_per_step must be >= 1")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        if not (
            np.isfinite(self.reward_correct) and np.isfinite(self.reward_wrong)
        ):
            raise ValueError("rewards must be finite")

    @property
    def sensor_spacing(self) -> float:
        return self.dt / self.samples_per_step


@dataclass(frozen=True)
class EnvState:
    phase: Phase
    tones_heard: int
    true_interval_steps: int
    steps_since_first_tone: int | None


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    done: bool
    sensor_slice: np.ndarray | None  # (M, samples_per_step) while waiting between tones


class TimingTask:
    """One episode instance; call :meth:`reset` before stepping."""

    def __init__(self, cfg: TaskConfig):
        self.cfg = cfg
        self._state: EnvState | None = None
        self._slices: list[np.ndarray] = []
        self._elapsed = 0

    def reset(self, seed: int) -> EnvState:
        """Draw the hidden interval (fair short/long coin, uniform within
        the category) and pre-draw the interval's sensor stream."""
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        if rng.random() < 0.5:
            k = int(rng.integers(1, cfg.boundary_steps + 1))
        else:
            k = int(rng.integers(cfg.boundary_steps + 1, cfg.max_interval_steps + 1))

        n_samples = k * cfg.samples_per_step
        times = SampleTimes.uniform((n_samples - 1) * cfg.sensor_spacing, n_samples)
        stream_seed = int(rng.integers(0, 2**63))
        self._interval_data = sample_paths(
            cfg.true_ou_params, times, cfg.sensor_channels, stream_seed
        ).channels

        self._state = EnvState(Phase.INIT, 0, k, None)
        self._slices = []
        self._elapsed = 0
        return self._state

    @property
    def state(self) -> EnvState:
        if self._state is None:
            raise RuntimeError("reset() has not been called")
        return self._state

    def step(self, action: Action) -> StepOutcome:
        s = self.state
        if s.phase is Phase.TERMINAL:
            raise RuntimeError("cannot step a finished episode")
        cfg = self.cfg
        k = s.true_interval_steps
        reward = 0.0
        done = False
        sensor_slice = None

        if s.phase is Phase.INIT:
            if action is Action.START:
                nxt = EnvState(Phase.TONE, 1, k, 0)
            elif action is Action.WAIT:
                nxt = s
            else:
                reward, done = cfg.reward_wrong, True
                nxt = s
        elif s.tones_heard == 1:
            # First tone heard, second still pending.
            if action is Action.WAIT:
                c = s.steps_since_first_tone + 1
                lo = (c - 1) * cfg.samples_per_step
                sensor_slice = self._interval_data[:, lo : lo + cfg.samples_per_step]
                self._slices.append(sensor_slice)
                phase = Phase.TONE if c >= k else Phase.INTERVAL
                nxt = EnvState(phase, 2 if c >= k else 1, k, c)
            else:
                reward, done = cfg.reward_wrong, True
                nxt = s
        else:
            # Second tone delivered; a choice is expected.
            if action in (Action.SHORT, Action.LONG):
                is_short = k <= cfg.boundary_steps
                correct = is_short == (action is Action.SHORT)
                reward = cfg.reward_correct if correct else cfg.reward_wrong
                done = True
                nxt = s
            elif action is Action.START:
                reward, done = cfg.reward_wrong, True
                nxt = s
            else:
                nxt = EnvState(Phase.TONE, 2, k, s.steps_since_first_tone + 1)

        self._elapsed += 1
        if not done and self._elapsed >= cfg.max_episode_steps:
            # Stalling after the second tone forfeits; earlier timeouts are
            # neutral (the agent simply never engaged).
            done = True
            if nxt.tones_heard == 2:
                reward = cfg.reward_wrong

        if done:
            nxt = EnvState(Phase.TERMINAL, nxt.tones_heard, k, None)

        self._state = nxt
        return StepOutcome(nxt, reward, done, sensor_slice)

    def collect_interval_batch(self) -> SensorBatch:
        """All sensor samples emitted so far between the tones, re-timed to
        a uniform axis starting at zero."""
        if self.state.tones_heard < 1:
            raise RuntimeError("no sensor data before the first tone")
        if not self._slices:
            raise RuntimeError("no sensor samples have been emitted yet")
        channels = np.concatenate(self._slices, axis=1)
        n = channels.shape[1]
        times = SampleTimes.uniform((n - 1) * self.cfg.sensor_spacing, n)
        return SensorBatch(channels=channels, sample_times=times)


def score_points(
    actions: list[Action] | tuple[Action, ...],
    true_interval_steps: int,
    boundary_steps: int,
) -> int:
    """Episode score 0..4 replayed from the action sequence.

    0 never pressed Start; 1 pressed Start; 2 also waited after the first
    tone; 3 waited all the way to the second tone; 4 chose correctly.
    """
    points = 0
    tones = 0
    since_first = 0
    at_init = True
    for a in actions:
        if at_init:
            if a is Action.START:
                points = max(points, 1)
                at_init = False
                tones = 1
                since_first = 0
            elif a is Action.WAIT:
                continue
            else:
                break
        elif tones == 1:
            if a is Action.WAIT:
                points = max(points, 2)
                since_first += 1
                if since_first >= true_interval_steps:
                    tones = 2
                    points = max(points, 3)
            else:
                break
        else:
            if a in (Action.SHORT, Action.LONG):
                is_short = true_interval_steps <= boundary_steps
                if is_short == (a is Action.SHORT):
                    points = 4
                break
            if a is Action.START:
                break
            # WAIT after the second tone neither gains nor loses points.
    return points
