"""Reward machines over abstract states and potential-based shaping.

A reward machine here is history free: the next machine state is just the
abstraction of the next environment state, so the machine is fully described
by the set of abstract states it knows about, which of them are goals, and a
potential per state.  Abstractions that the machine does not store map to
:data:`UNKNOWN`, a non-goal pseudo state with potential 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidInputError, ParseError

UNKNOWN = -1
INFINITE = math.inf


@dataclass(frozen=True)
class PropositionCatalog:
    """Ordered, duplicate-free list of atomic proposition names."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if any(not isinstance(n, str) or not n for n in names):
            raise InvalidInputError("proposition names must be non-empty strings")
        if len(set(names)) != len(names):
            raise InvalidInputError("proposition names must be unique")

    @property
    def count(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True, order=True)
class AbstractState:
    """Truth assignment over a :class:`PropositionCatalog`."""

    bits: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def from_true(cls, catalog: PropositionCatalog, true_names: Iterable[str]) -> AbstractState:
        true_names = set(true_names)
        unknown = true_names.difference(catalog.names)
        if unknown:
            raise InvalidInputError(f"unknown propositions: {sorted(unknown)}")
        return cls(tuple(n in true_names for n in catalog.names))

    @classmethod
    def from_string(cls, text: str) -> AbstractState:
        if any(ch not in "01" for ch in text):
            raise ParseError(f"expected a string of 0/1, got {text!r}", "bits")
        return cls(tuple(ch == "1" for ch in text))

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def true_names(self, catalog: PropositionCatalog) -> list[str]:
        return [n for n, b in zip(catalog.names, self.bits) if b]

    def __len__(self):
        return len(self.bits)


def goal_constant(gamma: float) -> float:
    """The goal potential ``c`` that solves ``1 + gamma * c == gamma``."""
    return (gamma - 1.0) / gamma


def distance_potentials(distances: Sequence[float], gamma: float) -> list[float]:
    """``gamma ** d`` for every finite ``d`` (by repeated multiplication), 0 for infinite.

    Powers are built up incrementally so that ``gamma * pot(d - 1) - pot(d)`` is
    exactly zero in floating point.
    """
    finite = [d for d in distances if d != INFINITE]
    powers = [1.0]
    for _ in range(int(max(finite, default=0))):
        powers.append(powers[-1] * gamma)
    return [0.0 if d == INFINITE else powers[int(d)] for d in distances]


@dataclass(frozen=True)
class RewardMachine:
    catalog: PropositionCatalog
    states: tuple[AbstractState, ...]
    initial: int
    goal_flags: tuple[bool, ...]
    distance: tuple[float, ...]
    potential: tuple[float, ...]
    gamma: float
    goal_constant: float

    def __post_init__(self):
        for name in ("states", "goal_flags", "distance", "potential"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})
        practical = distance_potentials(self.distance, self.gamma)
        object.__setattr__(self, "_practical", tuple(practical))

    @classmethod
    def from_distances(
        cls,
        catalog: PropositionCatalog,
        states: Sequence[AbstractState],
        initial: int,
        goal_flags: Sequence[bool],
        distance: Sequence[float],
        gamma: float,
    ) -> RewardMachine:
        """Build a machine whose potentials are ``gamma ** distance`` off goal and ``c`` on goal."""
        c = goal_constant(gamma)
        pots = distance_potentials(distance, gamma)
        pots = [c if g else p for g, p in zip(goal_flags, pots)]
        return cls(catalog, tuple(states), initial, tuple(goal_flags), tuple(distance),
                   tuple(pots), gamma, c)

    def validate(self):
        n = len(self.states)
        if not 0.0 < self.gamma < 1.0:
            raise InvalidInputError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not (len(self.goal_flags) == len(self.distance) == len(self.potential) == n):
            raise InvalidInputError("per-state arrays must all have one entry per state")
        if not 0 <= self.initial < n:
            raise InvalidInputError(f"initial index {self.initial} out of range for {n} states")
        if not any(self.goal_flags):
            raise InvalidInputError("a reward machine needs at least one goal state")
        if len(set(self.states)) != n:
            raise InvalidInputError("states must be distinct")
        for s in self.states:
            if len(s) != self.catalog.count:
                raise InvalidInputError(
                    f"state width {len(s)} does not match catalog size {self.catalog.count}")
        if abs(1.0 + self.gamma * self.goal_constant - self.gamma) > 1e-12:
            raise InvalidInputError("goal constant does not satisfy 1 + gamma*c == gamma")
        expected = distance_potentials(self.distance, self.gamma)
        for u, (goal, d, p) in enumerate(zip(self.goal_flags, self.distance, self.potential)):
            if goal:
                if d != 0:
                    raise InvalidInputError(f"goal state {u} must have distance 0")
                if p != self.goal_constant:
                    raise InvalidInputError(f"goal state {u} potential {p} != goal constant")
            elif d == INFINITE:
                if p != 0.0:
                    raise InvalidInputError(f"state {u} has infinite distance but potential {p}")
            elif d < 0 or d != int(d):
                raise InvalidInputError(f"state {u} has invalid distance {d}")
            elif p != expected[u]:
                raise InvalidInputError(f"state {u} potential {p} != gamma**{int(d)}")

    def __len__(self):
        return len(self.states)

    @property
    def goal_states(self) -> list[int]:
        return [u for u, g in enumerate(self.goal_flags) if g]

    def pot(self, u: int) -> float:
        return 0.0 if u == UNKNOWN else self.potential[u]

    def practical_pot(self, u: int) -> float:
        return 0.0 if u == UNKNOWN else self._practical[u]

    def is_goal(self, u: int) -> bool:
        return u != UNKNOWN and self.goal_flags[u]


def abstraction_index(rm: RewardMachine, sigma: AbstractState) -> int:
    """Index of ``sigma`` among the machine's states, or :data:`UNKNOWN`.

    The transition function ignores the current machine state, so this lookup
    is all there is to a machine transition.
    """
    if len(sigma) != rm.catalog.count:
        raise InvalidInputError(
            f"abstract state has {len(sigma)} bits, catalog has {rm.catalog.count}")
    return rm._index.get(sigma, UNKNOWN)


def base_reward(rm: RewardMachine, next_state_index: int) -> float:
    """Indicator reward: 1 for landing in a goal state, else 0."""
    return 1.0 if rm.is_goal(next_state_index) else 0.0


def shaped_reward(rm: RewardMachine, u: int, u_next: int) -> float:
    """Indicator reward plus ``gamma * Pot(u_next) - Pot(u)`` with goal potential ``c``."""
    return base_reward(rm, u_next) + rm.gamma * rm.pot(u_next) - rm.pot(u)


def shaped_reward_practical(rm: RewardMachine, u: int, u_next: int) -> float:
    """Pure potential difference where goal states carry potential 1 instead of ``c``.

    Agrees with :func:`shaped_reward` whenever ``u`` is not a goal state.  Goal
    states end the episode, so no transition ever starts from one.
    """
    return rm.gamma * rm.practical_pot(u_next) - rm.practical_pot(u)


# -- serialization -----------------------------------------------------------

def _distance_to_json(d):
    return "inf" if d == INFINITE else int(d)


def rm_to_dict(rm: RewardMachine) -> dict:
    return {
        "propositions": list(rm.catalog.names),
        "gamma": rm.gamma,
        "goal_constant": rm.goal_constant,
        "states": [
            {
                "bits": s.to_string(),
                "is_goal": g,
                "distance": _distance_to_json(d),
                "potential": p,
            }
            for s, g, d, p in zip(rm.states, rm.goal_flags, rm.distance, rm.potential)
        ],
        "initial": rm.initial,
    }


def serialize_rm(rm: RewardMachine) -> bytes:
    return (json.dumps(rm_to_dict(rm), indent=2) + "\n").encode("utf-8")


def _require(doc, key, kinds, where=""):
    field = f"{where}{key}"
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError("missing field", field)
    value = doc[key]
    if isinstance(value, bool) and bool not in kinds:
        raise ParseError(f"unexpected type {type(value).__name__}", field)
    if not isinstance(value, kinds):
        raise ParseError(f"unexpected type {type(value).__name__}", field)
    return value


def _parse_distance(value, field):
    if value == "inf":
        return INFINITE
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ParseError(f"expected a non-negative integer or 'inf', got {value!r}", field)
    return value


def rm_from_dict(doc: dict) -> RewardMachine:
    names = _require(doc, "propositions", (list,))
    gamma = float(_require(doc, "gamma", (int, float)))
    c = float(_require(doc, "goal_constant", (int, float)))
    raw_states = _require(doc, "states", (list,))
    initial = _require(doc, "initial", (int,))
    catalog = PropositionCatalog(tuple(names))
    states, goals, dists, pots = [], [], [], []
    for i, entry in enumerate(raw_states):
        where = f"states[{i}]."
        bits = _require(entry, "bits", (str,), where)
        sigma = AbstractState.from_string(bits)
        if len(sigma) != catalog.count:
            raise ParseError(
                f"has {len(sigma)} bits but there are {catalog.count} propositions",
                f"{where}bits")
        states.append(sigma)
        goals.append(_require(entry, "is_goal", (bool,), where))
        dists.append(_parse_distance(_require(entry, "distance", (int, str), where),
                                     f"{where}distance"))
        pots.append(float(_require(entry, "potential", (int, float), where)))
    try:
        return RewardMachine(catalog, tuple(states), initial, tuple(goals), tuple(dists),
                             tuple(pots), gamma, c)
    except InvalidInputError as exc:
        raise ParseError(str(exc), "states") from exc


def deserialize_rm(data: bytes | str) -> RewardMachine:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg} at char {exc.pos})", "document") from exc
    if not isinstance(doc, dict):
        raise ParseError("expected a JSON object", "document")
    return rm_from_dict(doc)
