"""Abstract planning graphs from demonstrations, and reward machines built on them."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import InvalidInputError
from .gridworld import Demonstration, FeatureDetector, PickPlaceEnv
from .rm_core import INFINITE, AbstractState, PropositionCatalog, RewardMachine

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AbstractDemonstration:
    sigmas: tuple[AbstractState, ...]


@dataclass(frozen=True)
class PlanningGraph:
    nodes: tuple[AbstractState, ...]
    edges: frozenset[tuple[int, int]]
    goal_nodes: frozenset[int]
    initial_nodes: frozenset[int]

    def index(self, sigma: AbstractState) -> int:
        return self.nodes.index(sigma)

    def successors(self, u: int) -> list[int]:
        return sorted(v for a, v in self.edges if a == u)

    def edge_set(self) -> set[tuple[AbstractState, AbstractState]]:
        """Edges as abstract-state pairs, independent of node numbering."""
        return {(self.nodes[a], self.nodes[b]) for a, b in self.edges}


def abstract_demonstration(demo: Demonstration, detector: FeatureDetector) -> AbstractDemonstration:
    if not demo.states:
        raise InvalidInputError("empty demonstration")
    return AbstractDemonstration(tuple(detector(s) for s in demo.states))


def build_planning_graph(
    abstract_demos: Sequence[AbstractDemonstration],
    is_goal: Callable[[AbstractState], bool] | None = None,
) -> PlanningGraph:
    """Union of the abstract demonstrations as a directed graph.

    Nodes are numbered in sorted bit order so that the result does not depend
    on the order of ``abstract_demos``.  Consecutive repeats of one
    abstraction do not become self-loops.
    """
    if not abstract_demos:
        raise InvalidInputError("need at least one abstract demonstration")
    for i, demo in enumerate(abstract_demos):
        if not demo.sigmas:
            raise InvalidInputError(f"abstract demonstration {i} is empty")
        if is_goal is not None and not is_goal(demo.sigmas[-1]):
            raise InvalidInputError(f"abstract demonstration {i} does not end in a goal abstraction")
    nodes = tuple(sorted({s for d in abstract_demos for s in d.sigmas}))
    index = {s: i for i, s in enumerate(nodes)}
    edges = set()
    for d in abstract_demos:
        for a, b in zip(d.sigmas, d.sigmas[1:]):
            if a != b:
                edges.add((index[a], index[b]))
    return PlanningGraph(
        nodes=nodes,
        edges=frozenset(edges),
        goal_nodes=frozenset(index[d.sigmas[-1]] for d in abstract_demos),
        initial_nodes=frozenset(index[d.sigmas[0]] for d in abstract_demos),
    )


def compute_distances(graph: PlanningGraph) -> list[float]:
    """Fewest edges from each node to any goal node (reverse BFS); INFINITE if none."""
    if not graph.goal_nodes:
        raise InvalidInputError("graph has no goal nodes")
    preds: dict[int, list[int]] = {}
    for a, b in graph.edges:
        preds.setdefault(b, []).append(a)
    dist = [INFINITE] * len(graph.nodes)
    queue = deque(sorted(graph.goal_nodes))
    for g in queue:
        dist[g] = 0
    while queue:
        v = queue.popleft()
        for u in preds.get(v, ()):
            if dist[u] == INFINITE:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def build_reward_machine(
    graph: PlanningGraph,
    gamma: float,
    catalog: PropositionCatalog,
    allow_multiple_initial: bool = False,
) -> RewardMachine:
    """Reward machine whose states are the graph nodes that can reach a goal.

    With ``allow_multiple_initial`` the lowest-numbered initial node becomes
    the machine's initial state; otherwise several initial abstractions are an
    error.
    """
    if not 0.0 < gamma < 1.0:
        raise InvalidInputError(f"gamma must lie in (0, 1), got {gamma}")
    if len(graph.initial_nodes) != 1 and not allow_multiple_initial:
        raise InvalidInputError(
            f"demonstrations start from {len(graph.initial_nodes)} distinct abstractions; "
            "use an environment with a deterministic initial abstraction or pass "
            "allow_multiple_initial=True")
    dist = compute_distances(graph)
    keep = [u for u, d in enumerate(dist) if d != INFINITE]
    if len(keep) < len(graph.nodes):
        log.warning("pruning %d planning-graph nodes that cannot reach a goal",
                    len(graph.nodes) - len(keep))
    initial = min(u for u in graph.initial_nodes if u in keep)
    remap = {u: i for i, u in enumerate(keep)}
    return RewardMachine.from_distances(
        catalog,
        [graph.nodes[u] for u in keep],
        remap[initial],
        [u in graph.goal_nodes for u in keep],
        [dist[u] for u in keep],
        gamma,
    )


def reward_machine_from_demos(
    env: PickPlaceEnv,
    demos: Iterable[Demonstration],
    gamma: float,
    validate: bool = True,
    allow_multiple_initial: bool = False,
) -> tuple[RewardMachine, PlanningGraph]:
    """Replay-check, abstract, graph and calibrate in one go."""
    demos = list(demos)
    if validate:
        for d in demos:
            env.replay(d)
    abstract = [abstract_demonstration(d, env.detector) for d in demos]
    graph = build_planning_graph(abstract, env.detector.is_goal_abstraction)
    rm = build_reward_machine(graph, gamma, env.catalog, allow_multiple_initial)
    return rm, graph


def graph_statistics(graph: PlanningGraph) -> dict:
    dist = compute_distances(graph)
    return {
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "goal_nodes": len(graph.goal_nodes),
        "initial_nodes": len(graph.initial_nodes),
        "max_distance": max((d for d in dist if d != INFINITE), default=0),
    }


def export_graph(graph: PlanningGraph, catalog: PropositionCatalog) -> str:
    dist = compute_distances(graph)
    doc = {
        "propositions": list(catalog.names),
        "states": [
            {"bits": s.to_string(), "is_goal": u in graph.goal_nodes,
             "distance": "inf" if dist[u] == INFINITE else int(dist[u])}
            for u, s in enumerate(graph.nodes)
        ],
        "initial": sorted(graph.initial_nodes),
        "edges": [list(e) for e in sorted(graph.edges)],
    }
    return json.dumps(doc, indent=2) + "\n"
