"""Reward machines from demonstrations, calibrated potential shaping, and tabular agents."""

from .agents import AgentVariant, QTable, TabularAgent, TieBreak
from .graph_builder import (PlanningGraph, build_planning_graph, build_reward_machine,
                            compute_distances, reward_machine_from_demos)
from .gridworld import Action, ActionKind, EnvConfig, GridState, ObservationMode, PickPlaceEnv, Task
from .rm_core import (INFINITE, UNKNOWN, AbstractState, PropositionCatalog, RewardMachine,
                      abstraction_index, base_reward, deserialize_rm, serialize_rm, shaped_reward,
                      shaped_reward_practical)

__version__ = "0.1.0"

__all__ = [
    "AgentVariant", "QTable", "TabularAgent", "TieBreak",
    "PlanningGraph", "build_planning_graph", "build_reward_machine", "compute_distances",
    "reward_machine_from_demos",
    "Action", "ActionKind", "EnvConfig", "GridState", "ObservationMode", "PickPlaceEnv", "Task",
    "INFINITE", "UNKNOWN", "AbstractState", "PropositionCatalog", "RewardMachine",
    "abstraction_index", "base_reward", "deserialize_rm", "serialize_rm", "shaped_reward",
    "shaped_reward_practical",
]
