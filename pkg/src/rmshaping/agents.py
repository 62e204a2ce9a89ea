"""Tabular Q-learning in four configurations, with demo and exploration replay."""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError
from .rm_core import (UNKNOWN, AbstractState, RewardMachine, abstraction_index, base_reward,
                      shaped_reward)


class AgentVariant(str, enum.Enum):
    Q = "Q"
    Q_RS = "Q_RS"
    Q_AS = "Q_AS"
    QRM = "QRM"

    @property
    def shaped(self) -> bool:
        return self in (AgentVariant.Q_RS, AgentVariant.QRM)

    @property
    def augmented(self) -> bool:
        return self in (AgentVariant.Q_AS, AgentVariant.QRM)

    @property
    def broadcasts(self) -> bool:
        return self is AgentVariant.QRM


class TieBreak(str, enum.Enum):
    """How greedy selection resolves equal action values.

    ``VISITED`` prefers actions whose value has been written at least once
    and falls back to the lowest index; ``LOWEST`` always takes the lowest
    index.  Both are deterministic.
    """

    VISITED = "visited"
    LOWEST = "lowest"


class QKey(NamedTuple):
    obs: str
    rm_state: int | None  # None for variants that do not see the machine state


@dataclass(frozen=True)
class ExperienceTuple:
    obs_key: str
    action: int
    next_obs_key: str
    done: bool
    features: AbstractState
    next_features: AbstractState


class QTable:
    """Sparse action-value table; absent entries read as 0.

    ``writes`` counts individual entry updates.
    """

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self._rows: dict[QKey, np.ndarray] = {}
        self._written: dict[QKey, np.ndarray] = {}
        self.writes = 0

    def __len__(self):
        return len(self._rows)

    def __contains__(self, key):
        return key in self._rows

    def keys(self):
        return self._rows.keys()

    def row(self, key: QKey) -> np.ndarray:
        row = self._rows.get(key)
        return np.zeros(self.n_actions) if row is None else row.copy()

    def value(self, key: QKey, action: int) -> float:
        row = self._rows.get(key)
        return 0.0 if row is None else float(row[action])

    def written(self, key: QKey) -> np.ndarray:
        """Boolean mask of actions whose value at ``key`` has ever been set."""
        mask = self._written.get(key)
        return np.zeros(self.n_actions, dtype=bool) if mask is None else mask.copy()

    def max_value(self, key: QKey) -> float:
        row = self._rows.get(key)
        return 0.0 if row is None else float(row.max())

    def set(self, key: QKey, action: int, value: float):
        if not math.isfinite(value):
            raise InvalidInputError(f"refusing to store non-finite Q value {value}")
        row = self._rows.get(key)
        if row is None:
            row = self._rows[key] = np.zeros(self.n_actions)
            self._written[key] = np.zeros(self.n_actions, dtype=bool)
        row[action] = value
        self._written[key][action] = True
        self.writes += 1

    def snapshot(self) -> str:
        """JSON mapping ``"<obs>#<rm_state>"`` to the action-value array."""
        doc = {
            f"{k.obs}#{'-' if k.rm_state is None else k.rm_state}": [round(float(v), 12) for v in row]
            for k, row in sorted(self._rows.items(), key=lambda kv: (kv[0].obs, str(kv[0].rm_state)))
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def make_key(variant: AgentVariant, observation, rm: RewardMachine, features: AbstractState) -> QKey:
    obs = observation if isinstance(observation, str) else observation.key
    if not AgentVariant(variant).augmented:
        return QKey(obs, None)
    return QKey(obs, abstraction_index(rm, features))


def select_action(qtable: QTable, key: QKey, legal_actions: Sequence[int], epsilon: float,
                  rng: np.random.Generator, tie_break: TieBreak = TieBreak.VISITED) -> int:
    """Epsilon-greedy choice over ``legal_actions``.

    Greedy ties are settled by ``tie_break``; the final fallback is the
    earliest action in ``legal_actions``.  With a zero-initialised table and
    shaping that scores optimal moves at exactly 0, a learned optimal action
    ties with every untried one, so preferring written entries is what lets
    the agent exploit what it has already learned.

    One uniform draw is always consumed, plus one more on exploration, so the
    random stream advances identically whatever the table holds.
    """
    if not legal_actions:
        raise InvalidInputError("no legal actions")
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return int(legal_actions[int(rng.integers(len(legal_actions)))])
    legal = np.asarray(legal_actions)
    values = qtable.row(key)[legal]
    if TieBreak(tie_break) is TieBreak.VISITED:
        best = np.flatnonzero((values == values.max()) & qtable.written(key)[legal])
        if best.size:
            return int(legal[best[0]])
    return int(legal[int(np.argmax(values))])


def q_update(qtable: QTable, key: QKey, action: int, reward: float, next_key: QKey,
             done: bool, alpha: float, gamma: float) -> float:
    """One Q-learning backup; returns the new value of ``(key, action)``."""
    if not math.isfinite(reward):
        raise InvalidInputError(f"non-finite reward {reward}")
    target = reward if done else reward + gamma * qtable.max_value(next_key)
    new = alpha * target + (1.0 - alpha) * qtable.value(key, action)
    qtable.set(key, action, new)
    return new


def compute_step_reward(variant: AgentVariant, rm: RewardMachine, u: int, u_next: int) -> float:
    if AgentVariant(variant).shaped:
        return shaped_reward(rm, u, u_next)
    return base_reward(rm, u_next)


def broadcast_update(qtable: QTable, rm: RewardMachine, exp: ExperienceTuple,
                     alpha: float, gamma: float) -> int:
    """Apply one experience once per machine state; returns the number of writes.

    The next machine state does not depend on the current one, so every copy
    shares ``u_next`` and only the shaped reward and key differ.
    """
    u_next = abstraction_index(rm, exp.next_features)
    done = rm.is_goal(u_next)
    for u in range(len(rm)):
        q_update(qtable, QKey(exp.obs_key, u), exp.action, shaped_reward(rm, u, u_next),
                 QKey(exp.next_obs_key, u_next), done, alpha, gamma)
    return len(rm)


class ReplayBuffers:
    def __init__(self, demo_capacity: int = 1000, exploration_capacity: int = 1000):
        self.demo: deque[ExperienceTuple] = deque(maxlen=demo_capacity)
        self.exploration: deque[ExperienceTuple] = deque(maxlen=exploration_capacity)

    def __len__(self):
        return len(self.demo) + len(self.exploration)


def _draw(buffer, n, rng):
    if n == 0:
        return []
    idx = rng.choice(len(buffer), size=n, replace=n > len(buffer))
    return [buffer[int(i)] for i in idx]


def sample_batch(buffers: ReplayBuffers, batch_size: int, rng: np.random.Generator) -> list[ExperienceTuple]:
    """Half the batch from demonstrations (rounded up), half from exploration.

    Falls back to a single buffer when the other is empty.  Draws are without
    replacement whenever the buffer is large enough.
    """
    if not buffers.demo and not buffers.exploration:
        raise InvalidInputError("both replay buffers are empty")
    if not buffers.demo:
        return _draw(buffers.exploration, batch_size, rng)
    if not buffers.exploration:
        return _draw(buffers.demo, batch_size, rng)
    n_demo = (batch_size + 1) // 2
    return _draw(buffers.demo, n_demo, rng) + _draw(buffers.exploration, batch_size - n_demo, rng)


class TabularAgent:
    """A Q table plus the variant-specific reward, key and update rules."""

    def __init__(self, variant: AgentVariant, rm: RewardMachine, n_actions: int,
                 alpha: float = 0.1, gamma: float | None = None,
                 tie_break: TieBreak = TieBreak.VISITED):
        if not 0.0 < alpha <= 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
        self.variant = AgentVariant(variant)
        self.rm = rm
        self.alpha = alpha
        self.gamma = rm.gamma if gamma is None else gamma
        self.qtable = QTable(n_actions)
        self.legal_actions = list(range(n_actions))
        self.tie_break = TieBreak(tie_break)

    def key(self, obs_key: str, features: AbstractState) -> QKey:
        return make_key(self.variant, obs_key, self.rm, features)

    def act(self, obs_key: str, features: AbstractState, epsilon: float,
            rng: np.random.Generator) -> int:
        return select_action(self.qtable, self.key(obs_key, features), self.legal_actions,
                             epsilon, rng, self.tie_break)

    def update(self, exp: ExperienceTuple) -> int:
        """Learn from one experience; returns the number of table writes."""
        if self.variant.broadcasts:
            return broadcast_update(self.qtable, self.rm, exp, self.alpha, self.gamma)
        u = abstraction_index(self.rm, exp.features)
        u_next = abstraction_index(self.rm, exp.next_features)
        reward = compute_step_reward(self.variant, self.rm, u, u_next)
        q_update(self.qtable, self.key(exp.obs_key, exp.features), exp.action, reward,
                 self.key(exp.next_obs_key, exp.next_features), exp.done, self.alpha, self.gamma)
        return 1

    def train_batch(self, batch: Sequence[ExperienceTuple]) -> int:
        return sum(self.update(exp) for exp in batch)


__all__ = [
    "UNKNOWN", "AgentVariant", "TieBreak", "QKey", "ExperienceTuple", "QTable", "ReplayBuffers",
    "TabularAgent", "make_key", "select_action", "q_update", "compute_step_reward",
    "broadcast_update", "sample_batch",
]
