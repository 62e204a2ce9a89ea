"""Deterministic grid pick-and-place worlds: two-block stacking and three-block kitting.

Cells are ``(x, y)`` pairs.  The action space is every PICK cell followed by
every PLACE cell, both in row-major order, so action ``i`` is stable across
runs.  Actions that make no sense in the current state (picking an empty cell,
placing with an empty gripper) are legal no-ops that still consume a step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidActionError, InvalidInputError, ParseError
from .rm_core import AbstractState, PropositionCatalog

Cell = tuple[int, int]


class Task(str, enum.Enum):
    STACKING = "stacking"
    KITTING = "kitting"


class ObservationMode(str, enum.Enum):
    FULL = "full"
    ALIASED = "aliased"


class ActionKind(str, enum.Enum):
    PICK = "pick"
    PLACE = "place"


MAKESPAN = {Task.STACKING: 2, Task.KITTING: 6}

KITTING_BLOCKS = ("red", "green", "blue")
# red goes on the distinctly colored end plate, green in the middle, blue on the rest
KITTING_PLATES = ("p1", "p2", "p3")
DESIGNATED_PLATE = dict(zip(KITTING_BLOCKS, KITTING_PLATES))
STACKING_BLOCKS = ("red0", "red1")


@dataclass(frozen=True)
class EnvConfig:
    task: Task = Task.STACKING
    width: int = 4
    height: int = 4
    episode_horizon: int = 8
    observation_mode: ObservationMode = ObservationMode.FULL
    randomize_layout: bool = False

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "observation_mode", ObservationMode(self.observation_mode))
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid dimensions must be positive")
        objects = 2 if self.task is Task.STACKING else 6
        if self.width * self.height < objects:
            raise ConfigError(
                f"{self.width}x{self.height} grid cannot hold {objects} objects for {self.task.value}")
        if self.task is Task.KITTING and self.width < 3:
            raise ConfigError("kitting needs width >= 3 for the three-plate container")
        if self.episode_horizon < MAKESPAN[self.task]:
            raise ConfigError(
                f"horizon {self.episode_horizon} is shorter than the makespan "
                f"{MAKESPAN[self.task]} of {self.task.value}")


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    cell: Cell

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "cell": list(self.cell)}

    @classmethod
    def from_dict(cls, doc: dict) -> Action:
        try:
            return cls(ActionKind(doc["kind"]), (int(doc["cell"][0]), int(doc["cell"][1])))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"bad action {doc!r}", "actions") from exc


@dataclass(frozen=True)
class GridState:
    """Full layout of a pick-and-place world.

    ``stacks`` lists the non-empty cells in sorted order with their blocks
    bottom first.  ``held_from`` remembers the cell the held block came from;
    the aliased observation draws the held block there.
    """

    stacks: tuple[tuple[Cell, tuple[str, ...]], ...]
    gripper: str | None = None
    held_from: Cell | None = None
    plates: tuple[tuple[str, Cell], ...] = ()
    step: int = 0

    @property
    def block_at(self) -> dict[Cell, tuple[str, ...]]:
        return dict(self.stacks)

    @property
    def plate_cells(self) -> dict[str, Cell]:
        return dict(self.plates)

    def blocks(self) -> list[str]:
        out = [b for _, stack in self.stacks for b in stack]
        if self.gripper is not None:
            out.append(self.gripper)
        return out

    def location(self, block: str) -> Cell | None:
        """Cell holding ``block``; ``None`` while it is in the gripper."""
        for cell, stack in self.stacks:
            if block in stack:
                return cell
        if self.gripper == block:
            return None
        raise KeyError(block)

    def layout(self) -> GridState:
        """The same configuration with the step counter cleared."""
        return self if self.step == 0 else replace(self, step=0)

    def to_dict(self) -> dict:
        blocks = [{"id": b, "cell": list(cell)} for cell, stack in self.stacks for b in stack]
        if self.gripper is not None:
            blocks.append({"id": self.gripper, "cell": "gripper"})
        doc = {
            "blocks": blocks,
            "plates": [{"id": p, "cell": list(c)} for p, c in self.plates],
            "step": self.step,
        }
        if self.held_from is not None:
            doc["held_from"] = list(self.held_from)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> GridState:
        try:
            stacks: dict[Cell, list[str]] = {}
            gripper = None
            for entry in doc["blocks"]:
                if entry["cell"] == "gripper":
                    if gripper is not None:
                        raise ParseError("two blocks in the gripper", "blocks")
                    gripper = entry["id"]
                else:
                    stacks.setdefault(tuple(entry["cell"]), []).append(entry["id"])
            plates = tuple((p["id"], tuple(p["cell"])) for p in doc["plates"])
            held = doc.get("held_from")
            return cls(
                stacks=tuple(sorted((c, tuple(s)) for c, s in stacks.items())),
                gripper=gripper,
                held_from=tuple(held) if held is not None else None,
                plates=plates,
                step=int(doc["step"]),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ParseError(f"bad grid state: {exc}", "states") from exc


@dataclass(frozen=True)
class Observation:
    key: str


@dataclass(frozen=True)
class FeatureDetector:
    catalog: PropositionCatalog
    evaluator: Callable[[GridState], AbstractState]
    goal_abstractions: frozenset = field(default_factory=frozenset)

    def __call__(self, state: GridState) -> AbstractState:
        sigma = self.evaluator(state)
        if len(sigma) != self.catalog.count:
            raise InvalidInputError(
                f"detector produced {len(sigma)} bits for a {self.catalog.count}-proposition catalog")
        return sigma

    def is_goal_abstraction(self, sigma: AbstractState) -> bool:
        return sigma in self.goal_abstractions


@dataclass(frozen=True)
class Demonstration:
    states: tuple[GridState, ...]
    actions: tuple[Action, ...]
    task: Task = Task.STACKING
    seed: int = 0

    def __post_init__(self):
        if len(self.states) < 1 or len(self.actions) != len(self.states) - 1:
            raise InvalidInputError("a demonstration needs n+1 states for n actions")

    def to_dict(self) -> dict:
        return {
            "task": Task(self.task).value,
            "seed": self.seed,
            "states": [s.to_dict() for s in self.states],
            "actions": [a.to_dict() for a in self.actions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Demonstration:
        for key in ("task", "seed", "states", "actions"):
            if key not in doc:
                raise ParseError("missing field", key)
        return cls(
            states=tuple(GridState.from_dict(s) for s in doc["states"]),
            actions=tuple(Action.from_dict(a) for a in doc["actions"]),
            task=Task(doc["task"]),
            seed=int(doc["seed"]),
        )


# -- feature catalogs ----------------------------------------------------------

STACKING_CATALOG = PropositionCatalog((
    "in_gripper(red)",
    "one_on_table(red)",
    "two_on_table(red)",
    "stacked(red,red)",
))

KITTING_CATALOG = PropositionCatalog(
    tuple(f"on_table({b})" for b in KITTING_BLOCKS)
    + tuple(f"in_gripper({b})" for b in KITTING_BLOCKS)
    + tuple(f"on_plate({b},{p})" for b in KITTING_BLOCKS for p in KITTING_PLATES)
)


def _stacking_features(state: GridState) -> AbstractState:
    heights = [len(stack) for _, stack in state.stacks]
    singles = sum(1 for h in heights if h == 1)
    return AbstractState((
        state.gripper is not None,
        singles == 1,
        singles == 2,
        any(h >= 2 for h in heights),
    ))


def _kitting_features(state: GridState) -> AbstractState:
    plate_of_cell = {c: p for p, c in state.plates}
    truth = {}
    for cell, stack in state.stacks:
        for b in stack:
            plate = plate_of_cell.get(cell)
            if plate is None:
                truth[f"on_table({b})"] = True
            else:
                truth[f"on_plate({b},{plate})"] = True
    if state.gripper is not None:
        truth[f"in_gripper({state.gripper})"] = True
    return AbstractState(tuple(truth.get(n, False) for n in KITTING_CATALOG.names))


STACKING_GOAL = AbstractState.from_true(STACKING_CATALOG, ["stacked(red,red)"])
KITTING_GOAL = AbstractState.from_true(
    KITTING_CATALOG, [f"on_plate({b},{DESIGNATED_PLATE[b]})" for b in KITTING_BLOCKS])


# -- environment -----------------------------------------------------------------

class PickPlaceEnv:
    """Pure-function dynamics for one :class:`EnvConfig`.

    The environment holds no episode state; every method maps inputs to
    outputs, so instances can be shared freely.
    """

    def __init__(self, config: EnvConfig):
        self.config = config
        self.task = config.task
        w, h = config.width, config.height
        self.cells: tuple[Cell, ...] = tuple((x, y) for y in range(h) for x in range(w))
        self.actions: tuple[Action, ...] = tuple(
            Action(kind, cell) for kind in (ActionKind.PICK, ActionKind.PLACE) for cell in self.cells)
        self._action_index = {a: i for i, a in enumerate(self.actions)}
        if self.task is Task.STACKING:
            self.detector = FeatureDetector(STACKING_CATALOG, _stacking_features,
                                            frozenset({STACKING_GOAL}))
        else:
            self.detector = FeatureDetector(KITTING_CATALOG, _kitting_features,
                                            frozenset({KITTING_GOAL}))

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def catalog(self) -> PropositionCatalog:
        return self.detector.catalog

    def action_index(self, action: Action) -> int:
        return self._action_index[action]

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.config.width and 0 <= y < self.config.height

    # -- layouts

    def canonical_layout(self) -> GridState:
        h = self.config.height
        if self.task is Task.STACKING:
            cells = [self.cells[0], self.cells[-1]]
            return self._make_state(dict(zip(STACKING_BLOCKS, cells)), ())
        plates = tuple(zip(KITTING_PLATES, [(0, 0), (1, 0), (2, 0)]))
        row = h - 1 if h > 1 else 0
        if h > 1:
            blocks = {b: (i, row) for i, b in enumerate(KITTING_BLOCKS)}
        else:
            blocks = {b: (3 + i, 0) for i, b in enumerate(KITTING_BLOCKS)}
        return self._make_state(blocks, plates)

    def reset(self, seed: int) -> GridState:
        """Initial state: blocks on distinct free cells, gripper empty, step 0."""
        if not self.config.randomize_layout:
            return self.canonical_layout()
        rng = np.random.default_rng(seed)
        w, h = self.config.width, self.config.height
        if self.task is Task.STACKING:
            picks = rng.choice(len(self.cells), size=2, replace=False)
            cells = [self.cells[i] for i in picks]
            return self._make_state(dict(zip(STACKING_BLOCKS, cells)), ())
        # container: three horizontally adjacent plates
        y = int(rng.integers(h))
        x0 = int(rng.integers(w - 2))
        plate_cells = [(x0 + i, y) for i in range(3)]
        plates = tuple(zip(KITTING_PLATES, plate_cells))
        free = [c for c in self.cells if c not in plate_cells]
        picks = rng.choice(len(free), size=3, replace=False)
        blocks = {b: free[i] for b, i in zip(KITTING_BLOCKS, picks)}
        return self._make_state(blocks, plates)

    def _make_state(self, blocks: dict[str, Cell], plates) -> GridState:
        stacks = tuple(sorted((cell, (b,)) for b, cell in blocks.items()))
        return self._canonical(GridState(stacks=stacks, plates=tuple(plates)))

    def _canonical(self, state: GridState) -> GridState:
        # the two stacking blocks are interchangeable: relabel in layout order
        if self.task is not Task.STACKING:
            return state
        names = iter(STACKING_BLOCKS)
        stacks = tuple((cell, tuple(next(names) for _ in stack)) for cell, stack in state.stacks)
        gripper = next(names) if state.gripper is not None else None
        if stacks == state.stacks and gripper == state.gripper:
            return state
        return replace(state, stacks=stacks, gripper=gripper)

    # -- dynamics

    def transition(self, state: GridState, action: Action) -> GridState:
        """Layout-level successor; ``step`` is left untouched."""
        if not self.in_bounds(action.cell):
            raise InvalidActionError(f"cell {action.cell} is outside the "
                                     f"{self.config.width}x{self.config.height} grid")
        stacks = state.block_at
        cell = action.cell
        if action.kind is ActionKind.PICK:
            if state.gripper is not None or cell not in stacks:
                return state
            stack = stacks[cell]
            rest = stack[:-1]
            if rest:
                stacks[cell] = rest
            else:
                del stacks[cell]
            new = replace(state, stacks=tuple(sorted(stacks.items())), gripper=stack[-1],
                          held_from=cell)
            return self._canonical(new)
        if state.gripper is None:
            return state
        target = stacks.get(cell, ())
        limit = 2 if self.task is Task.STACKING else 1
        if len(target) >= limit:
            return state
        stacks[cell] = target + (state.gripper,)
        new = replace(state, stacks=tuple(sorted(stacks.items())), gripper=None, held_from=None)
        return self._canonical(new)

    def step(self, state: GridState, action: Action | int) -> tuple[GridState, bool]:
        if isinstance(action, (int, np.integer)):
            action = self.actions[int(action)]
        if state.step >= self.config.episode_horizon:
            raise InvalidInputError("episode horizon already reached; reset first")
        nxt = self.transition(state, action)
        nxt = replace(nxt, step=state.step + 1)
        done = self.is_goal(nxt) or nxt.step >= self.config.episode_horizon
        return nxt, done

    def is_goal(self, state: GridState) -> bool:
        if self.task is Task.STACKING:
            return any(len(stack) >= 2 for _, stack in state.stacks)
        if state.gripper is not None:
            return False
        plate_cells = state.plate_cells
        at = state.block_at
        return all(at.get(plate_cells[DESIGNATED_PLATE[b]]) == (b,) for b in KITTING_BLOCKS)

    def features(self, state: GridState) -> AbstractState:
        return self.detector(state)

    # -- observations

    def observe(self, state: GridState, mode: ObservationMode | str | None = None) -> Observation:
        mode = ObservationMode(mode or self.config.observation_mode)
        plates = ",".join(f"{p}@{x}.{y}" for p, (x, y) in state.plates)
        if mode is ObservationMode.FULL:
            cells = ";".join(f"{x}.{y}:{''.join(_tag(b) for b in stack)}"
                             for (x, y), stack in state.stacks)
            held = "-" if state.gripper is None else _tag(state.gripper)
            src = "-" if state.held_from is None else "%d.%d" % state.held_from
            return Observation(f"F|{cells}|g={held}@{src}|{plates}")
        # the held block is drawn where it was picked from, and stacking
        # towers show up as plain occupancy
        visible = {cell: stack for cell, stack in state.stacks}
        if state.gripper is not None:
            visible[state.held_from] = visible.get(state.held_from, ()) + (state.gripper,)
        parts = []
        for (x, y), stack in sorted(visible.items()):
            content = _tag(stack[-1]) if self.task is Task.STACKING else "".join(_tag(b) for b in stack)
            parts.append(f"{x}.{y}:{content}")
        return Observation(f"A|{';'.join(parts)}|{plates}")

    # -- demonstrations

    def scripted_demo(self, seed: int) -> Demonstration:
        """Shortest demonstration from ``reset(seed)``; kitting goes red, green, blue."""
        state = self.reset(seed)
        plan: list[Action] = []
        if self.task is Task.STACKING:
            (src, _), (dst, _) = state.stacks[0], state.stacks[1]
            plan = [Action(ActionKind.PICK, src), Action(ActionKind.PLACE, dst)]
        else:
            plates = state.plate_cells
            for b in KITTING_BLOCKS:
                plan.append(Action(ActionKind.PICK, state.location(b)))
                plan.append(Action(ActionKind.PLACE, plates[DESIGNATED_PLATE[b]]))
        states = [state]
        for a in plan:
            state, _ = self.step(state, a)
            states.append(state)
        if not self.is_goal(state):
            raise RuntimeError("scripted demonstration failed to reach the goal")
        return Demonstration(tuple(states), tuple(plan), self.task, seed)

    def replay(self, demo: Demonstration) -> None:
        """Check a demonstration against the dynamics; raises on any mismatch."""
        for i, (s, a, s_next) in enumerate(zip(demo.states, demo.actions, demo.states[1:])):
            got = replace(self.transition(s, a), step=s.step + 1)
            if got != s_next:
                raise InvalidInputError(f"demonstration step {i} is not replayable")
        if not self.is_goal(demo.states[-1]):
            raise InvalidInputError("demonstration does not end in a goal state")


def _tag(block: str) -> str:
    return block[0].upper()
