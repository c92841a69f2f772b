"""Q-learning building blocks: linear function approximation with
eligibility traces, decaying epsilon-greedy selection, and the tabular
update used by the baseline agents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AgentParams",
    "init_weights",
    "zero_traces",
    "q_value",
    "q_values",
    "select_action",
    "td_error",
    "update",
    "decay_epsilon",
    "tabular_update",
]


@dataclass(frozen=True)
class AgentParams:
    """Learning-rule constants.

    ``shared_traces`` switches to a single trace vector shared by all
    actions (the literal pseudocode reading) instead of per-action traces.
    ``epsilon_per_episode`` moves the exploration decay from per-timestep
    to per-episode for sensitivity runs.
    """

    alpha: float = 0.2
    gamma: float = 0.1
    eta: float = 0.95
    epsilon0: float = 0.3
    epsilon_decay: float = 0.9995
    shared_traces: bool = False
    epsilon_per_episode: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ValueError(f"epsilon0 must be in [0, 1], got {self.epsilon0}")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError(
                f"epsilon_decay must be in (0, 1], got {self.epsilon_decay}"
            )


def init_weights(n_actions: int, dim: int, seed: int) -> np.ndarray:
    """Per-action weight rows drawn uniformly from [0, 1]."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n_actions, dim))


def zero_traces(n_actions: int, dim: int, shared: bool = False) -> np.ndarray:
    """Fresh eligibility traces: shape (dim,) when shared, else (n_actions, dim)."""
    return np.zeros(dim) if shared else np.zeros((n_actions, dim))


def q_value(w: np.ndarray, x: np.ndarray, a: int) -> float:
    """Action value w[a] . x."""
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"weight dim {w.shape[1]} != feature dim {x.shape[0]}")
    return float(w[a] @ x)


def q_values(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """All action values at once."""
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"weight dim {w.shape[1]} != feature dim {x.shape[0]}")
    return w @ x


def select_action(qs: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy: argmax with ties to the lowest index, else uniform.

    With epsilon = 0 no random number is consumed, so greedy replays are
    deterministic regardless of generator state.
    """
    qs = np.asarray(qs, dtype=float)
    if qs.size == 0:
        raise ValueError("empty action-value array")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(qs.size))
    return int(np.argmax(qs))


def td_error(
    r: float, gamma: float, q_next_max: float, q_cur: float, terminal: bool
) -> float:
    """delta = r + gamma * max_a Q(s', a) - Q(s, a); terminal bootstraps 0."""
    bootstrap = 0.0 if terminal else gamma * q_next_max
    return float(r + bootstrap - q_cur)


def update(
    w: np.ndarray,
    e: np.ndarray,
    x: np.ndarray,
    a: int,
    delta: float,
    params: AgentParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One accumulating-trace step; returns new (weights, traces).

    All traces decay by gamma * eta, the current features accumulate into
    the taken action's traces, then every action's weights move by
    alpha * delta * trace.  Inputs are not mutated.
    """
    decay = params.gamma * params.eta
    if params.shared_traces:
        e = decay * e + x
        w = w.copy()
        w[a] = w[a] + params.alpha * delta * e
    else:
        e = decay * e
        e[a] = e[a] + x
        w = w + params.alpha * delta * e
    return w, e


def decay_epsilon(epsilon: float, params: AgentParams) -> float:
    """Geometric exploration decay."""
    return params.epsilon_decay * epsilon


def tabular_update(
    q: np.ndarray,
    s: int,
    a: int,
    r: float,
    s_next: int,
    terminal: bool,
    params: AgentParams,
) -> np.ndarray:
    """Standard tabular Q-learning step on a copy of the table."""
    n_states, n_actions = q.shape
    if not (0 <= s < n_states and 0 <= s_next < n_states):
        raise ValueError(f"state index out of range: {s}, {s_next}")
    if not 0 <= a < n_actions:
        raise ValueError(f"action index out of range: {a}")
    target = r + (0.0 if terminal else params.gamma * float(np.max(q[s_next])))
    q = q.copy()
    q[s, a] = q[s, a] + params.alpha * (target - q[s, a])
    return q
