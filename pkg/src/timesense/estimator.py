"""Interval estimation from sensor batches.

Two stages: fit the OU hyperparameters by gradient ascent on the summed
log marginal likelihood (channels are independent sensors), then scan a
grid of candidate durations.  A candidate tau re-interprets the N samples
as uniformly spaced over [0, tau]; the maximizing candidate is the
estimated elapsed time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ou import (
    ConditioningError,
    OUHyperparams,
    SampleTimes,
    SensorBatch,
    batch_log_likelihood,
    batch_loglik_and_gradient,
    build_kernel,
)

__all__ = [
    "NumericalError",
    "FitConfig",
    "FitResult",
    "TauGrid",
    "TimeEstimate",
    "fit",
    "fit_hyperparams",
    "estimate_tau",
    "subsample_channels",
    "default_tau_grid",
]

# Ascent runs in log-parameter space; these box bounds keep the kernel
# factorizable and give sigma a floor for degenerate (e.g. all-zero) data.
_LOG_LAM_BOUNDS = (np.log(1e-3), np.log(1e3))
_LOG_SIGMA_BOUNDS = (np.log(1e-3), np.log(1e2))

_MAX_HALVINGS = 20


class NumericalError(RuntimeError):
    """Objective became non-finite; carries the last valid parameters."""

    def __init__(self, message: str, last_params: OUHyperparams | None = None):
        super().__init__(message)
        self.last_params = last_params


@dataclass(frozen=True)
class FitConfig:
    """Gradient-ascent settings for hyperparameter fitting."""

    init_lambda: float = 0.5
    init_sigma: float = 0.5
    max_iters: int = 500
    step_tolerance: float = 1e-4
    learning_rate: float = 0.05

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.step_tolerance <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("step_tolerance and learning_rate must be > 0")


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters with the objective value reached and iteration count."""

    params: OUHyperparams
    log_likelihood: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class TauGrid:
    """Strictly increasing positive candidate durations, in seconds."""

    candidates: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.candidates, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("grid must be a non-empty 1-d array")
        if not np.all(np.isfinite(c)) or c[0] <= 0.0:
            raise ValueError("grid candidates must be finite and > 0")
        if np.any(np.diff(c) <= 0.0):
            raise ValueError("grid candidates must be strictly increasing")
        object.__setattr__(self, "candidates", c)

    def __len__(self) -> int:
        return int(self.candidates.size)


@dataclass(frozen=True)
class TimeEstimate:
    """Estimated duration plus the full (candidate, log-likelihood) profile."""

    tau_hat: float
    profile: tuple[tuple[float, float], ...]


def default_tau_grid(max_interval_seconds: float, step: float = 0.5) -> TauGrid:
    """Candidates from ``step`` up to 1.5x the task's maximum interval."""
    top = 1.5 * float(max_interval_seconds)
    return TauGrid(np.arange(step, top + 1e-9, step))


def _clip_log(u: np.ndarray) -> np.ndarray:
    return np.array(
        [
            np.clip(u[0], *_LOG_LAM_BOUNDS),
            np.clip(u[1], *_LOG_SIGMA_BOUNDS),
        ]
    )


def _params_at(u: np.ndarray) -> OUHyperparams:
    return OUHyperparams(float(np.exp(u[0])), float(np.exp(u[1])))


def fit(batch: SensorBatch, cfg: FitConfig = FitConfig()) -> FitResult:
    """Maximize the summed log likelihood over (lam, sigma).

    Projected gradient ascent in log-parameter space (positivity is
    structural).  Each step starts from the last accepted step size, capped
    at ``learning_rate``, and backtracks by halving up to 20 times; with no
    improving step the ascent has converged.  The best iterate seen is
    returned, so the result never scores below the starting point.
    """
    times = batch.sample_times
    channels = batch.channels

    def value_only(u: np.ndarray) -> float:
        try:
            kernel = build_kernel(_params_at(u), times)
        except ConditioningError:
            return -np.inf
        return batch_log_likelihood(channels, kernel)

    def value_and_grad(u: np.ndarray) -> tuple[float, np.ndarray]:
        p = _params_at(u)
        try:
            value, d_lam, d_sigma = batch_loglik_and_gradient(channels, p, times)
        except ConditioningError:
            return -np.inf, np.zeros(2)
        # Chain rule to log space: d/d(log theta) = theta * d/dtheta.
        return value, np.array([d_lam * p.lam, d_sigma * p.sigma])

    u = _clip_log(np.log([cfg.init_lambda, cfg.init_sigma]))
    value, grad = value_and_grad(u)
    if not np.isfinite(value):
        raise NumericalError(
            "log likelihood is not finite at the initial parameters",
            last_params=_params_at(u),
        )

    best_u, best_value = u, value
    step = cfg.learning_rate
    iterations = 0
    converged = False

    for iterations in range(1, cfg.max_iters + 1):
        trial = min(cfg.learning_rate, 2.0 * step)
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            u_new = _clip_log(u + trial * grad)
            v_new = value_only(u_new)
            if np.isfinite(v_new) and v_new > value:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            converged = True
            break

        moved = float(np.linalg.norm(u_new - u))
        u, step = u_new, trial
        value, grad = value_and_grad(u)
        if not np.isfinite(value):
            raise NumericalError(
                "log likelihood became non-finite during ascent",
                last_params=_params_at(best_u),
            )
        if value > best_value:
            best_u, best_value = u, value
        if moved < cfg.step_tolerance:
            converged = True
            break

    return FitResult(
        params=_params_at(best_u),
        log_likelihood=float(best_value),
        iterations=iterations,
        converged=converged,
    )


def fit_hyperparams(batch: SensorBatch, cfg: FitConfig = FitConfig()) -> OUHyperparams:
    """Fitted (lam, sigma) for a batch; see :func:`fit` for the full result."""
    return fit(batch, cfg).params


def estimate_tau(
    batch: SensorBatch, params: OUHyperparams, grid: TauGrid
) -> TimeEstimate:
    """Maximum-likelihood elapsed time over a candidate grid.

    For each candidate tau the batch's N samples are re-timed to uniform
    spacing tau/(N-1), the kernel is rebuilt, and per-channel log
    likelihoods are summed.  Ties break toward the smallest candidate.
    """
    n = batch.n
    if n < 2:
        raise ValueError(f"need at least 2 samples per channel, got {n}")
    logliks = np.empty(len(grid))
    for i, tau in enumerate(grid.candidates):
        kernel = build_kernel(params, SampleTimes.uniform(tau, n))
        logliks[i] = batch_log_likelihood(batch.channels, kernel)
    idx = int(np.argmax(logliks))  # first maximum = smallest candidate on ties
    profile = tuple(
        (float(tau), float(ll)) for tau, ll in zip(grid.candidates, logliks)
    )
    return TimeEstimate(tau_hat=float(grid.candidates[idx]), profile=profile)


def subsample_channels(batch: SensorBatch, k: int, seed: int) -> SensorBatch:
    """Uniformly random k-channel sub-batch, deterministic in ``seed``.

    Kept channels preserve their original order, so k = M is the identity.
    """
    if not 1 <= k <= batch.m:
        raise ValueError(f"k must be in [1, {batch.m}], got {k}")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(batch.m, size=k, replace=False))
    return SensorBatch(
        channels=batch.channels[keep], sample_times=batch.sample_times
    )
