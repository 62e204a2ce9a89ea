"""Exact checks on small worlds: enumerate, build the cross product, solve it.

The cross product pairs each reachable layout ``s`` with machine state
``F(s)`` (the machine is history free, so no other pairing is reachable).
Every table is a dense numpy array indexed by product state and action.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConvergenceError, InvalidInputError, ResourceLimitError
from .graph_builder import PlanningGraph, reward_machine_from_demos
from .gridworld import EnvConfig, GridState, PickPlaceEnv
from .rm_core import (UNKNOWN, RewardMachine, abstraction_index, base_reward, shaped_reward,
                      shaped_reward_practical)

DEFAULT_STATE_CAP = 2_000_000
TIE_TOLERANCE = 1e-9


class Shaping(str, enum.Enum):
    NONE = "none"
    SHAPED = "shaped"
    SHAPED_PRACTICAL = "shaped_practical"


@dataclass
class ExplicitMDP:
    states: list[tuple[GridState, int]]
    n_actions: int
    transition: np.ndarray  # (n, A) successor index, -1 on terminal rows
    reward: np.ndarray      # (n, A)
    terminal: np.ndarray    # (n,) bool
    gamma: float
    index: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.states)


@dataclass
class ValueReport:
    values: np.ndarray
    q_values: np.ndarray
    iterations: int
    residual: float


@dataclass
class CheckReport:
    check: str
    passed: bool
    worst_state: str | None = None
    worst_value: float | None = None
    iterations: int | None = None
    residual: float | None = None
    applicable: bool = True
    details: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if not self.applicable:
            return 2
        return 0 if self.passed else 1

    def to_json(self) -> str:
        doc = {
            "check": self.check,
            "pass": self.passed,
            "worst_state": self.worst_state,
            "worst_value": self.worst_value,
            "iterations": self.iterations,
            "residual": self.residual,
        }
        if not self.applicable:
            doc["applicable"] = False
        if self.details:
            doc["details"] = self.details
        return json.dumps(doc, indent=2, default=str)


def enumerate_reachable(env: PickPlaceEnv, seed_layouts: Iterable[GridState],
                        cap: int = DEFAULT_STATE_CAP) -> list[GridState]:
    """Breadth-first closure of ``seed_layouts`` under every action.

    Step counters are dropped, goal states are kept but not expanded.  The
    result is in discovery order, which is deterministic.
    """
    seen: dict[GridState, None] = {}
    queue = deque()
    for s in seed_layouts:
        s = s.layout()
        if s not in seen:
            seen[s] = None
            queue.append(s)
    while queue:
        s = queue.popleft()
        if env.is_goal(s):
            continue
        for a in env.actions:
            t = env.transition(s, a)
            if t not in seen:
                seen[t] = None
                if len(seen) > cap:
                    raise ResourceLimitError(cap)
                queue.append(t)
    return list(seen)


def _describe(state: GridState, u: int) -> str:
    return f"{json.dumps(state.to_dict(), sort_keys=True)} u={u}"


def build_cross_product(
    env: PickPlaceEnv,
    states: Sequence[GridState],
    rm: RewardMachine,
    shaping: Shaping | str = Shaping.SHAPED,
    potential: Callable[[GridState, int], float] | None = None,
) -> ExplicitMDP:
    """Explicit product MDP over ``states`` (which must be closed under the dynamics).

    ``potential`` replaces the machine potential with an arbitrary function of
    the concrete state and machine state; it exists to build counterexamples.
    """
    shaping = Shaping(shaping)
    pairs = [(s.layout(), abstraction_index(rm, env.features(s))) for s in states]
    index = {s: i for i, (s, _) in enumerate(pairs)}
    n, A = len(pairs), env.n_actions
    transition = np.full((n, A), -1, dtype=np.int64)
    reward = np.zeros((n, A))
    terminal = np.array([env.is_goal(s) for s, _ in pairs], dtype=bool)
    for i, (s, u) in enumerate(pairs):
        if terminal[i]:
            continue
        for a_idx, a in enumerate(env.actions):
            t = env.transition(s, a)
            try:
                j = index[t]
            except KeyError:
                raise InvalidInputError("state list is not closed under the dynamics") from None
            u_next = pairs[j][1]
            transition[i, a_idx] = j
            if shaping is Shaping.NONE:
                r = base_reward(rm, u_next)
            elif potential is not None:
                r = base_reward(rm, u_next) + rm.gamma * potential(t, u_next) - potential(s, u)
            elif shaping is Shaping.SHAPED:
                r = shaped_reward(rm, u, u_next)
            else:
                r = shaped_reward_practical(rm, u, u_next)
            reward[i, a_idx] = r
    return ExplicitMDP(pairs, A, transition, reward, terminal, rm.gamma, index)


def value_iteration(mdp: ExplicitMDP, tolerance: float = 1e-10,
                    max_iters: int = 100_000) -> ValueReport:
    """Synchronous Bellman optimality sweeps; terminal values stay at 0."""
    if tolerance <= 0:
        raise InvalidInputError("tolerance must be positive")
    if not mdp.gamma < 1.0:
        raise InvalidInputError("value iteration needs gamma < 1")
    n = len(mdp)
    live = ~mdp.terminal
    succ = np.where(mdp.transition < 0, 0, mdp.transition)
    values = np.zeros(n)
    q = np.zeros((n, mdp.n_actions))
    residual = np.inf
    for it in range(1, max_iters + 1):
        q = np.where(live[:, None], mdp.reward + mdp.gamma * values[succ], 0.0)
        new = np.where(live, q.max(axis=1) if mdp.n_actions else 0.0, 0.0)
        residual = float(np.max(np.abs(new - values))) if n else 0.0
        values = new
        if residual < tolerance:
            return ValueReport(values, q, it, residual)
    raise ConvergenceError(max_iters, residual)


def verify_zero_value_preconditions(env: PickPlaceEnv, states: Sequence[GridState],
                                  rm: RewardMachine, graph: PlanningGraph) -> CheckReport:
    """Every graph edge leaving ``F(s)`` must be realizable by one action from ``s``.

    Also re-runs every transition to confirm the dynamics are deterministic.
    """
    edges_from: dict = {}
    for a, b in graph.edges:
        edges_from.setdefault(graph.nodes[a], set()).add(graph.nodes[b])
    failures = []
    deterministic = True
    on_graph = off_graph = 0
    for s in states:
        if env.is_goal(s):
            continue
        sigma = env.features(s)
        if abstraction_index(rm, sigma) == UNKNOWN:
            off_graph += 1
        else:
            on_graph += 1
        targets = edges_from.get(sigma)
        if not targets:
            continue
        reached = set()
        for a in env.actions:
            t = env.transition(s, a)
            if t != env.transition(s, a):
                deterministic = False
            reached.add(env.features(t))
        for missing in sorted(targets - reached):
            failures.append((s, sigma, missing))
    worst = None
    if failures:
        s, sigma, missing = failures[0]
        worst = f"{_describe(s, abstraction_index(rm, sigma))} cannot reach {missing.to_string()}"
    return CheckReport(
        "preconditions",
        passed=not failures and deterministic,
        worst_state=worst,
        details={
            "unrealizable_edges": len(failures),
            "deterministic": deterministic,
            "on_graph_states": on_graph,
            "off_graph_states": off_graph,
            "failures": [(sigma.to_string(), missing.to_string()) for _, sigma, missing in failures[:20]],
        },
    )


def check_zero_value(report: ValueReport, mdp: ExplicitMDP, tol: float = 1e-8,
                     preconditions: CheckReport | None = None) -> CheckReport:
    """``max |V*|`` over product states whose machine state is a stored state.

    Product states sitting on an abstraction the machine does not know
    (potential 0 by convention) are reported in ``details`` but not judged:
    their potential is not the distance-calibrated one the zero-value
    property relies on.
    """
    if preconditions is not None and not preconditions.passed:
        return CheckReport("zero-value", passed=False, applicable=False,
                           worst_state=preconditions.worst_state,
                           details={"reason": "zero-value preconditions do not hold"})
    on = np.array([u != UNKNOWN for _, u in mdp.states], dtype=bool)
    mags = np.abs(report.values)
    judged = np.where(on, mags, -1.0)
    worst = int(np.argmax(judged)) if on.any() else None
    worst_value = float(report.values[worst]) if worst is not None else 0.0
    off = np.where(~on, mags, -1.0)
    details = {
        "judged_states": int(on.sum()),
        "off_machine_states": int((~on).sum()),
        "off_machine_max_abs_value": float(off.max()) if (~on).any() else 0.0,
    }
    return CheckReport(
        "zero-value",
        passed=abs(worst_value) <= tol,
        worst_state=_describe(*mdp.states[worst]) if worst is not None else None,
        worst_value=worst_value,
        iterations=report.iterations,
        residual=report.residual,
        details=details,
    )


def argmax_set(row: np.ndarray, tie: float = TIE_TOLERANCE) -> frozenset[int]:
    return frozenset(np.flatnonzero(row >= row.max() - tie).tolist())


def check_policy_preservation(shaped: ValueReport, unshaped: ValueReport, mdp: ExplicitMDP,
                              tie: float = TIE_TOLERANCE) -> CheckReport:
    """Greedy action sets must coincide on every non-terminal product state."""
    if shaped.q_values.shape != unshaped.q_values.shape or len(mdp) != shaped.q_values.shape[0]:
        raise InvalidInputError("value reports do not share one state/action index space")
    mismatches = []
    for i in np.flatnonzero(~mdp.terminal):
        if argmax_set(shaped.q_values[i], tie) != argmax_set(unshaped.q_values[i], tie):
            mismatches.append(int(i))
    worst = mismatches[0] if mismatches else None
    return CheckReport(
        "policy-preservation",
        passed=not mismatches,
        worst_state=_describe(*mdp.states[worst]) if worst is not None else None,
        worst_value=float(len(mismatches)),
        iterations=max(shaped.iterations, unshaped.iterations),
        residual=max(shaped.residual, unshaped.residual),
        details={"checked_states": int((~mdp.terminal).sum()), "mismatched_states": len(mismatches)},
    )


def telescoping_expected(rm: RewardMachine, episode: Sequence[tuple[int, int, float]]) -> float:
    """Closed-form discounted shaped return of an episode.

    Goal episodes of ``n`` steps: ``gamma**n - Pot(u_0)``.  Anything else,
    ``m`` steps: ``gamma**m * Pot(u_m) - Pot(u_0)``.  Potentials here put 1 on
    goal states, which is the same thing given ``1 + gamma*c == gamma``.
    """
    if not episode:
        return 0.0
    u0 = episode[0][0]
    m = len(episode)
    u_last = episode[-1][1]
    if rm.is_goal(u_last):
        return rm.gamma ** m - rm.practical_pot(u0)
    return rm.gamma ** m * rm.practical_pot(u_last) - rm.practical_pot(u0)


def discounted_return(rewards: Iterable[float], gamma: float) -> float:
    total, disc = 0.0, 1.0
    for r in rewards:
        total += disc * r
        disc *= gamma
    return total


def check_telescoping(episode: Sequence[tuple[int, int, float]], rm: RewardMachine,
                      tol: float = 1e-9) -> CheckReport:
    got = discounted_return((r for _, _, r in episode), rm.gamma)
    want = telescoping_expected(rm, episode)
    return CheckReport("telescoping", passed=abs(got - want) <= tol, worst_value=got - want,
                       details={"return": got, "closed_form": want, "length": len(episode)})


def rollout_rm_episode(env: PickPlaceEnv, rm: RewardMachine, rng: np.random.Generator,
                       start: GridState | None = None, guide: float = 0.0) -> list[tuple[int, int, float]]:
    """One episode with uniformly random actions, recorded as ``(u, u_next, shaped reward)``.

    With ``guide > 0`` each step follows the scripted plan with that
    probability, so some episodes actually reach the goal.
    """
    state = start if start is not None else env.reset(int(rng.integers(2**31)))
    plan = list(env.scripted_demo(0).actions) if guide > 0 and not env.config.randomize_layout else []
    episode = []
    u = abstraction_index(rm, env.features(state))
    done = False
    t = 0
    while not done:
        if plan and t < len(plan) and rng.random() < guide:
            action = plan[t]
        else:
            action = env.actions[int(rng.integers(env.n_actions))]
        state, done = env.step(state, action)
        u_next = abstraction_index(rm, env.features(state))
        episode.append((u, u_next, shaped_reward(rm, u, u_next)))
        u = u_next
        t += 1
    return episode


# -- one-call entry point ----------------------------------------------------------

CHECKS = ("zero-value", "policy-preservation", "telescoping", "preconditions")


def oracle_setup(task, width: int = 3, height: int = 3, gamma: float = 0.7,
                 cap: int = DEFAULT_STATE_CAP):
    """Fixed-layout world, its reward machine and its reachable layouts."""
    env = PickPlaceEnv(EnvConfig(task, width, height))
    rm, graph = reward_machine_from_demos(env, [env.scripted_demo(0)], gamma)
    states = enumerate_reachable(env, [env.reset(0)], cap)
    return env, rm, graph, states


def telescoping_sweep(env: PickPlaceEnv, rm: RewardMachine, episodes: int, seed: int = 0,
                      tol: float = 1e-9) -> CheckReport:
    """Random-policy episodes, every other one nudged along the scripted plan."""
    rng = np.random.default_rng(seed)
    worst, worst_gap = None, 0.0
    goal_eps = failed = 0
    for k in range(episodes):
        ep = rollout_rm_episode(env, rm, rng, guide=0.8 if k % 2 else 0.0)
        rep = check_telescoping(ep, rm, tol)
        goal_eps += rm.is_goal(ep[-1][1])
        if not rep.passed:
            failed += 1
        if worst is None or abs(rep.worst_value) > abs(worst_gap):
            worst, worst_gap = k, rep.worst_value
    return CheckReport("telescoping", passed=failed == 0,
                       worst_state=None if worst is None else f"episode {worst}",
                       worst_value=worst_gap,
                       details={"episodes": episodes, "goal_episodes": goal_eps,
                                "failed_episodes": failed})


def run_check(task, check: str, width: int = 3, height: int = 3, gamma: float = 0.7,
              episodes: int = 1000, seed: int = 0, cap: int = DEFAULT_STATE_CAP) -> CheckReport:
    if check not in CHECKS:
        raise InvalidInputError(f"unknown check {check!r}; choose from {', '.join(CHECKS)}")
    env, rm, graph, states = oracle_setup(task, width, height, gamma, cap)
    if check == "telescoping":
        return telescoping_sweep(env, rm, episodes, seed)
    pre = verify_zero_value_preconditions(env, states, rm, graph)
    if check == "preconditions":
        return pre
    shaped_mdp = build_cross_product(env, states, rm, Shaping.SHAPED)
    shaped = value_iteration(shaped_mdp)
    if check == "zero-value":
        return check_zero_value(shaped, shaped_mdp, preconditions=pre)
    plain_mdp = build_cross_product(env, states, rm, Shaping.NONE)
    return check_policy_preservation(shaped, value_iteration(plain_mdp), shaped_mdp)
