"""End-to-end runs: per-episode loop wiring sensing, estimation, features,
and learning together, plus the analyses reported on a finished run
(psychometric curve, misclassification stats, TD-error trajectory,
estimation-accuracy sweeps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent import (
    AgentParams,
    decay_epsilon,
    init_weights,
    q_values,
    select_action,
    td_error,
    update,
    zero_traces,
)
from .env import Action, Phase, TaskConfig, TimingTask, score_points
from .estimator import (
    FitConfig,
    FitResult,
    NumericalError,
    TauGrid,
    default_tau_grid,
    estimate_tau,
    fit,
)
from .features import (
    MicrostimuliConfig,
    TraceState,
    csc_features,
    deploy_event,
    microstimuli_features,
    override_age,
    tick,
)
from .ou import ConditioningError, OUHyperparams, SampleTimes, sample_paths

__all__ = [
    "REPRESENTATIONS",
    "MOUSE_PSYCHOMETRIC",
    "RunConfig",
    "EpisodeLog",
    "RunSummary",
    "PsychometricCurve",
    "mix64",
    "run_episode",
    "run_experiment",
    "psychometric",
    "td_error_trajectory",
    "tau_accuracy_sweep",
]

REPRESENTATIONS = ("microstimuli", "csc", "tabular", "tabular-history")

N_ACTIONS = len(Action)

# Reference behavioral curve (duration s, p long) for plotting alongside the
# agent's psychometric output; not a target of any check.
MOUSE_PSYCHOMETRIC = (
    (0.6, 0.05),
    (1.0, 0.10),
    (1.2, 0.20),
    (1.35, 0.35),
    (1.65, 0.55),
    (1.8, 0.72),
    (2.0, 0.85),
    (2.4, 0.95),
)

_MASK64 = (1 << 64) - 1

# Microstimuli event slots.
_EVENT_FIRST_TONE = 0
_EVENT_SECOND_TONE = 1
_EVENT_REWARD = 2


def mix64(seed: int, index: int) -> int:
    """Child seed via one splitmix64 round of seed + (index+1) * gamma.

    This is the documented splitting rule: episode i of a run uses
    mix64(master_seed, i + 2); tag 0 seeds calibration data and tag 1 the
    weight initialization, so any single episode can be re-run in isolation.
    """
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RunConfig:
    """Everything a reproducible run needs."""

    episodes: int = 7000
    agent: AgentParams = field(default_factory=AgentParams)
    features: MicrostimuliConfig = field(default_factory=MicrostimuliConfig)
    representation: str = "microstimuli"
    task: TaskConfig = field(default_factory=TaskConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    tau_grid: TauGrid | None = None
    oracle_tau: bool = False
    master_seed: int = 0
    calibration_seconds: float = 20.0
    csc_horizon: int | None = None

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(
                f"unknown representation {self.representation!r}; "
                f"choose from {REPRESENTATIONS}"
            )
        if self.calibration_seconds <= 0.0:
            raise ValueError("calibration_seconds must be > 0")

    def resolved_tau_grid(self) -> TauGrid:
        if self.tau_grid is not None:
            return self.tau_grid
        return default_tau_grid(self.task.max_interval_steps * self.task.dt)

    def resolved_csc_horizon(self) -> int:
        return self.csc_horizon or self.task.max_episode_steps


@dataclass(frozen=True)
class EpisodeLog:
    index: int
    actions: tuple[Action, ...]
    rewards: tuple[float, ...]
    deltas: tuple[float, ...]
    points: int
    true_interval_steps: int
    estimated_tau: float | None
    classification: str | None  # "Short" | "Long" | None
    correct: bool
    epsilon_end: float
    tau_clamped: bool

    @property
    def reward_total(self) -> float:
        return float(sum(self.rewards))

    @property
    def delta_at_reward(self) -> float:
        return self.deltas[-1]


@dataclass(frozen=True)
class RunSummary:
    episodes: int
    representation: str
    oracle_tau: bool
    convergence_episode: int | None
    total_misclassified: int
    mean_misclassified_s: float | None
    median_misclassified_s: float | None
    clamp_events: int
    low_epsilon_episode: int | None
    final_epsilon: float
    mean_points_last_100: float
    fitted_lambda: float | None
    fitted_sigma: float | None
    fit_iterations: int | None
    fit_converged: bool | None


@dataclass(frozen=True)
class PsychometricCurve:
    """Per-duration probability of a Long classification: (duration_s, p_long, count)."""

    bins: tuple[tuple[float, float, int], ...]

    def __len__(self) -> int:
        return len(self.bins)


def _feature_fn(cfg: RunConfig):
    if cfg.representation == "microstimuli":
        fc = cfg.features
        return (lambda ts: microstimuli_features(ts, fc)), fc.dim
    horizon = cfg.resolved_csc_horizon()
    dim = cfg.features.zeta * horizon
    return (lambda ts: csc_features(ts, horizon)), dim


def run_episode(
    cfg: RunConfig,
    weights: np.ndarray,
    traces: np.ndarray,
    epsilon: float,
    episode_seed: int,
    sensor_params: OUHyperparams | None = None,
    index: int = 0,
) -> tuple[EpisodeLog, np.ndarray, float]:
    """One episode of the function-approximation agent.

    The first tone deploys an event at age 0; between tones the task emits
    sensor data; at the second tone the elapsed interval is estimated (or
    read off the task when ``oracle_tau``), the first tone's age is rewritten
    to the estimate, and a fresh second-tone event is deployed.  Every step
    runs feature computation, epsilon-greedy choice, a task step, the TD
    update, and the exploration decay.  Traces are episode-local; weights
    and epsilon persist and are returned.
    """
    grid = cfg.resolved_tau_grid()
    task = TimingTask(cfg.task)
    task.reset(mix64(episode_seed, 1))
    policy_rng = np.random.default_rng(mix64(episode_seed, 2))
    feature_fn, _ = _feature_fn(cfg)

    ts = TraceState.empty(cfg.features.zeta)
    x = feature_fn(ts)
    w, e = weights, traces
    actions: list[Action] = []
    rewards: list[float] = []
    deltas: list[float] = []
    estimated_tau: float | None = None
    clamped = False
    classification: str | None = None
    correct = False
    true_steps = task.state.true_interval_steps

    while True:
        qs = q_values(w, x)
        a = Action(select_action(qs, epsilon, policy_rng))
        tones_before = task.state.tones_heard
        out = task.step(a)
        actions.append(a)
        rewards.append(out.reward)

        if tones_before == 2 and a in (Action.SHORT, Action.LONG):
            classification = "Short" if a is Action.SHORT else "Long"
            correct = out.reward == cfg.task.reward_correct

        ts = tick(ts)
        if tones_before == 0 and out.next_state.tones_heard >= 1:
            ts = deploy_event(ts, _EVENT_FIRST_TONE)
        if tones_before == 1 and out.next_state.tones_heard == 2:
            if cfg.oracle_tau:
                tau = true_steps * cfg.task.dt
            else:
                if sensor_params is None:
                    raise ValueError(
                        "sensor_params are required unless oracle_tau is set"
                    )
                batch = task.collect_interval_batch()
                tau = estimate_tau(batch, sensor_params, grid).tau_hat
            lo, hi = float(grid.candidates[0]), float(grid.candidates[-1])
            clamped = not lo <= tau <= hi
            tau = min(max(tau, lo), hi)
            estimated_tau = tau
            subjective_age = int(math.floor(tau / cfg.task.dt + 0.5))
            ts = override_age(ts, _EVENT_FIRST_TONE, subjective_age)
            ts = deploy_event(ts, _EVENT_SECOND_TONE)
        if out.reward != 0.0:
            ts = deploy_event(ts, _EVENT_REWARD)

        x_next = feature_fn(ts)
        q_next_max = 0.0 if out.done else float(np.max(q_values(w, x_next)))
        delta = td_error(
            out.reward, cfg.agent.gamma, q_next_max, float(qs[a]), out.done
        )
        deltas.append(delta)
        w, e = update(w, e, x, int(a), delta, cfg.agent)
        if not cfg.agent.epsilon_per_episode:
            epsilon = decay_epsilon(epsilon, cfg.agent)
        x = x_next
        if out.done:
            break

    if cfg.agent.epsilon_per_episode:
        epsilon = decay_epsilon(epsilon, cfg.agent)

    log = EpisodeLog(
        index=index,
        actions=tuple(actions),
        rewards=tuple(rewards),
        deltas=tuple(deltas),
        points=score_points(actions, true_steps, cfg.task.boundary_steps),
        true_interval_steps=true_steps,
        estimated_tau=estimated_tau,
        classification=classification,
        correct=correct,
        epsilon_end=epsilon,
        tau_clamped=clamped,
    )
    return log, w, epsilon


_PHASE_INDEX = {Phase.INIT: 0, Phase.TONE: 1, Phase.INTERVAL: 2}


def _run_episode_tabular(
    cfg: RunConfig,
    q,
    epsilon: float,
    episode_seed: int,
    index: int,
    with_history: bool,
):
    """Baseline episode on phase states (Markov) or full phase histories."""
    task = TimingTask(cfg.task)
    task.reset(mix64(episode_seed, 1))
    policy_rng = np.random.default_rng(mix64(episode_seed, 2))

    def key_of(phase, prev_key):
        idx = _PHASE_INDEX[phase]
        return prev_key + (idx,) if with_history else idx

    def row(key):
        if with_history:
            return q.setdefault(key, np.zeros(N_ACTIONS))
        return q[key]

    key = key_of(task.state.phase, ())
    actions: list[Action] = []
    rewards: list[float] = []
    deltas: list[float] = []
    classification: str | None = None
    correct = False
    true_steps = task.state.true_interval_steps

    while True:
        qs = row(key)
        a = Action(select_action(qs, epsilon, policy_rng))
        tones_before = task.state.tones_heard
        out = task.step(a)
        actions.append(a)
        rewards.append(out.reward)
        if tones_before == 2 and a in (Action.SHORT, Action.LONG):
            classification = "Short" if a is Action.SHORT else "Long"
            correct = out.reward == cfg.task.reward_correct

        if out.done:
            next_key = key  # bootstrap value is zero at terminal anyway
        else:
            next_key = key_of(
                out.next_state.phase, key if with_history else ()
            )
        q_next_max = 0.0 if out.done else float(np.max(row(next_key)))
        q_cur = float(row(key)[a])
        delta = td_error(out.reward, cfg.agent.gamma, q_next_max, q_cur, out.done)
        deltas.append(delta)
        row(key)[a] = q_cur + cfg.agent.alpha * delta
        if not cfg.agent.epsilon_per_episode:
            epsilon = decay_epsilon(epsilon, cfg.agent)
        key = next_key
        if out.done:
            break

    if cfg.agent.epsilon_per_episode:
        epsilon = decay_epsilon(epsilon, cfg.agent)

    log = EpisodeLog(
        index=index,
        actions=tuple(actions),
        rewards=tuple(rewards),
        deltas=tuple(deltas),
        points=score_points(actions, true_steps, cfg.task.boundary_steps),
        true_interval_steps=true_steps,
        estimated_tau=None,
        classification=classification,
        correct=correct,
        epsilon_end=epsilon,
        tau_clamped=False,
    )
    return log, q, epsilon


def _calibration_batch(cfg: RunConfig):
    """Pre-episode batch of known duration used to fit the sensor model."""
    spacing = cfg.task.sensor_spacing
    n = int(round(cfg.calibration_seconds / spacing)) + 1
    times = SampleTimes.uniform(cfg.calibration_seconds, n)
    return sample_paths(
        cfg.task.true_ou_params,
        times,
        cfg.task.sensor_channels,
        mix64(cfg.master_seed, 0),
    )


def run_experiment(cfg: RunConfig) -> tuple[list[EpisodeLog], RunSummary]:
    """Run all episodes with persistent weights and decaying exploration.

    When the estimator is in play, the sensor model is fitted once from a
    dedicated calibration batch before the first episode, never re-fitted.
    """
    logs, summary, _ = run_experiment_detailed(cfg)
    return logs, summary


def run_experiment_detailed(
    cfg: RunConfig,
) -> tuple[list[EpisodeLog], RunSummary, np.ndarray | dict]:
    """As :func:`run_experiment`, also returning the final learner state
    (weight matrix for function approximation, Q table for the baselines)."""
    linear = cfg.representation in ("microstimuli", "csc")
    fit_result: FitResult | None = None
    sensor_params: OUHyperparams | None = None
    if linear and not cfg.oracle_tau:
        fit_result = fit(_calibration_batch(cfg), cfg.fit)
        sensor_params = fit_result.params

    epsilon = cfg.agent.epsilon0
    logs: list[EpisodeLog] = []

    if linear:
        _, dim = _feature_fn(cfg)
        w = init_weights(N_ACTIONS, dim, mix64(cfg.master_seed, 1))
        for i in range(cfg.episodes):
            traces = zero_traces(N_ACTIONS, dim, cfg.agent.shared_traces)
            try:
                log, w, epsilon = run_episode(
                    cfg,
                    w,
                    traces,
                    epsilon,
                    mix64(cfg.master_seed, i + 2),
                    sensor_params,
                    index=i,
                )
            except (NumericalError, ConditioningError) as err:
                wrapped = NumericalError(
                    f"episode {i}: {err}", getattr(err, "last_params", None)
                )
                wrapped.episode_index = i
                raise wrapped from err
            logs.append(log)
        learner_state: np.ndarray | dict = w
    else:
        with_history = cfg.representation == "tabular-history"
        q = {} if with_history else np.zeros((len(_PHASE_INDEX), N_ACTIONS))
        for i in range(cfg.episodes):
            log, q, epsilon = _run_episode_tabular(
                cfg, q, epsilon, mix64(cfg.master_seed, i + 2), i, with_history
            )
            logs.append(log)
        learner_state = q

    return logs, _summarize(cfg, logs, fit_result, epsilon), learner_state


def _summarize(
    cfg: RunConfig,
    logs: list[EpisodeLog],
    fit_result: FitResult | None,
    final_epsilon: float,
) -> RunSummary:
    points = np.array([log.points for log in logs], dtype=float)

    convergence = None
    if len(points) >= 100:
        window_means = np.convolve(points, np.ones(100) / 100.0, mode="valid")
        hits = np.nonzero(window_means >= 3.5)[0]
        if hits.size:
            convergence = int(hits[0]) + 99  # episode completing the window

    missed = [
        log.true_interval_steps * cfg.task.dt
        for log in logs
        if log.classification is not None and not log.correct
    ]

    low_eps = next(
        (log.index for log in logs if log.epsilon_end < 0.01), None
    )

    return RunSummary(
        episodes=len(logs),
        representation=cfg.representation,
        oracle_tau=cfg.oracle_tau,
        convergence_episode=convergence,
        total_misclassified=len(missed),
        mean_misclassified_s=float(np.mean(missed)) if missed else None,
        median_misclassified_s=float(np.median(missed)) if missed else None,
        clamp_events=sum(log.tau_clamped for log in logs),
        low_epsilon_episode=low_eps,
        final_epsilon=float(final_epsilon),
        mean_points_last_100=float(np.mean(points[-100:])),
        fitted_lambda=fit_result.params.lam if fit_result else None,
        fitted_sigma=fit_result.params.sigma if fit_result else None,
        fit_iterations=fit_result.iterations if fit_result else None,
        fit_converged=fit_result.converged if fit_result else None,
    )


def psychometric(
    logs: list[EpisodeLog], dt: float, epsilon_threshold: float = 0.01
) -> PsychometricCurve:
    """p(Long) per true duration over the post-exploration window.

    The window starts at the first episode whose end-of-episode epsilon is
    below ``epsilon_threshold``; if exploration never drops that low (short
    diagnostic runs), all episodes are used.  Only classified episodes count.
    """
    start = next(
        (i for i, log in enumerate(logs) if log.epsilon_end < epsilon_threshold), 0
    )
    counts: dict[int, list[int]] = {}
    for log in logs[start:]:
        if log.classification is None:
            continue
        entry = counts.setdefault(log.true_interval_steps, [0, 0])
        entry[0] += log.classification == "Long"
        entry[1] += 1
    bins = tuple(
        (steps * dt, n_long / n, n)
        for steps, (n_long, n) in sorted(counts.items())
    )
    return PsychometricCurve(bins=bins)


def td_error_trajectory(
    logs: list[EpisodeLog], window: int
) -> list[tuple[int, float]]:
    """Moving average of |TD error| at each episode's outcome step."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    magnitudes = np.array([abs(log.delta_at_reward) for log in logs])
    out = []
    for i in range(len(magnitudes)):
        lo = max(0, i - window + 1)
        out.append((logs[i].index, float(np.mean(magnitudes[lo : i + 1]))))
    return out


def tau_accuracy_sweep(
    cfg: RunConfig,
    true_intervals: list[float],
    seeds: list[int],
    sample_spacing: float = 0.1,
    params: OUHyperparams | None = None,
) -> list[tuple[float, float, float]]:
    """Estimation accuracy table: (true tau, mean tau_hat, std tau_hat).

    Each seed calibrates its own sensor model (unless ``params`` pins one),
    then every true interval is generated and estimated on a grid covering
    1.5x the longest interval.
    """
    grid = cfg.tau_grid or default_tau_grid(max(true_intervals))
    m = cfg.task.sensor_channels
    estimates: dict[float, list[float]] = {tau: [] for tau in true_intervals}
    for seed in seeds:
        if params is None:
            n_cal = int(round(cfg.calibration_seconds / sample_spacing)) + 1
            calib = sample_paths(
                cfg.task.true_ou_params,
                SampleTimes.uniform(cfg.calibration_seconds, n_cal),
                m,
                mix64(seed, 0),
            )
            fitted = fit(calib, cfg.fit).params
        else:
            fitted = params
        for j, tau in enumerate(true_intervals):
            n = int(round(tau / sample_spacing)) + 1
            batch = sample_paths(
                cfg.task.true_ou_params,
                SampleTimes.uniform(tau, n),
                m,
                mix64(seed, j + 1),
            )
            estimates[tau].append(estimate_tau(batch, fitted, grid).tau_hat)
    return [
        (float(tau), float(np.mean(vals)), float(np.std(vals)))
        for tau, vals in estimates.items()
    ]
