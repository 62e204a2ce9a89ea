from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmshaping.errors import ConfigError, InvalidActionError, InvalidInputError, ParseError
from rmshaping.gridworld import (KITTING_CATALOG, Action, ActionKind, Demonstration, EnvConfig,
                                 GridState, ObservationMode, PickPlaceEnv, Task)
from rmshaping.oracle import enumerate_reachable
from rmshaping.rm_core import AbstractState

PICK, PLACE = ActionKind.PICK, ActionKind.PLACE


def env_for(task, **kw):
    return PickPlaceEnv(EnvConfig(task, **kw))


# -- config

@pytest.mark.parametrize("kw", [
    dict(task=Task.STACKING, width=1, height=1),
    dict(task=Task.KITTING, width=2, height=2),
    dict(task=Task.KITTING, width=2, height=5),
    dict(task=Task.KITTING, episode_horizon=5),
    dict(task=Task.STACKING, episode_horizon=1),
    dict(task=Task.STACKING, width=0),
])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        EnvConfig(**kw)


def test_action_space_layout():
    env = env_for(Task.STACKING, width=4, height=3)
    assert env.n_actions == 2 * 4 * 3
    for i, a in enumerate(env.actions):
        kind, cell = divmod(i, 12)
        assert a.kind is (PICK, PLACE)[kind]
        assert a.cell == (cell % 4, cell // 4)
        assert env.action_index(a) == i


# -- reset

def test_stacking_reset(stacking_env):
    s = stacking_env.reset(0)
    assert len(s.stacks) == 2 and s.gripper is None and s.step == 0
    assert stacking_env.reset(0) == s


def test_random_resets_are_seed_deterministic():
    for task in Task:
        env = env_for(task, randomize_layout=True)
        assert env.reset(5) == env.reset(5)
        assert len({env.reset(k) for k in range(20)}) > 1


def test_kitting_resets_start_with_all_blocks_on_table():
    expected = AbstractState.from_true(KITTING_CATALOG, ["on_table(red)", "on_table(green)",
                                                         "on_table(blue)"])
    env = env_for(Task.KITTING, randomize_layout=True)
    for seed in range(100):
        s = env.reset(seed)
        assert env.features(s) == expected
        cells = [c for _, c in s.plates]
        assert len(set(cells)) == 3
        # adjacent container
        xs = sorted(x for x, _ in cells)
        assert xs == list(range(xs[0], xs[0] + 3)) and len({y for _, y in cells}) == 1
    assert KITTING_CATALOG.count == 15


# -- step

def test_pick_and_no_op_rules(stacking_env):
    s = stacking_env.reset(0)
    src = s.stacks[0][0]
    held, done = stacking_env.step(s, Action(PICK, src))
    assert held.gripper is not None and held.held_from == src and not done
    again, _ = stacking_env.step(held, Action(PICK, s.stacks[1][0]))
    assert again.layout() == held.layout() and again.step == held.step + 1
    empty = next(c for c in stacking_env.cells if c not in dict(s.stacks))
    nothing, _ = stacking_env.step(s, Action(PICK, empty))
    assert nothing.layout() == s and nothing.step == 1
    place_empty_handed, _ = stacking_env.step(s, Action(PLACE, empty))
    assert place_empty_handed.layout() == s


def test_stacking_two_step_rollout(stacking_env):
    s = stacking_env.reset(0)
    (a, _), (b, _) = s.stacks
    s1, done1 = stacking_env.step(s, Action(PICK, a))
    s2, done2 = stacking_env.step(s1, Action(PLACE, b))
    assert not done1 and done2 and stacking_env.is_goal(s2)
    assert s2.stacks == ((b, ("red0", "red1")),)


def test_out_of_bounds_is_an_error(stacking_env):
    s = stacking_env.reset(0)
    with pytest.raises(InvalidActionError):
        stacking_env.step(s, Action(PICK, (4, 0)))
    with pytest.raises(InvalidActionError):
        stacking_env.step(s, Action(PLACE, (0, -1)))


def test_horizon_ends_episode(stacking_env):
    s = stacking_env.reset(0)
    noop = Action(PLACE, (1, 1))
    for t in range(8):
        s, done = stacking_env.step(s, noop)
        assert done == (t == 7)
    with pytest.raises(InvalidInputError):
        stacking_env.step(s, noop)


def test_kitting_place_limits_and_goal(kitting_env):
    s = kitting_env.reset(0)
    red = s.location("red")
    green = s.location("green")
    held, _ = kitting_env.step(s, Action(PICK, red))
    blocked, _ = kitting_env.step(held, Action(PLACE, green))
    assert blocked.gripper == "red"  # kitting stacks never exceed one block
    demo = kitting_env.scripted_demo(0)
    assert kitting_env.is_goal(demo.states[-1])
    assert not kitting_env.is_goal(demo.states[0])


def test_kitting_wrong_plate_is_not_goal(kitting_env):
    s = kitting_env.reset(0)
    plates = s.plate_cells
    wrong = {"red": plates["p2"], "green": plates["p1"], "blue": plates["p3"]}
    for block, cell in wrong.items():
        s, _ = kitting_env.step(s, Action(PICK, s.location(block)))
        s, _ = kitting_env.step(s, Action(PLACE, cell))
    assert all(s.location(b) == c for b, c in wrong.items())
    assert not kitting_env.is_goal(s)


def test_stacking_place_onto_empty_cell_is_allowed(stacking_env):
    s = stacking_env.reset(0)
    s, _ = stacking_env.step(s, Action(PICK, s.stacks[0][0]))
    s, _ = stacking_env.step(s, Action(PLACE, (1, 1)))
    assert s.gripper is None and len(s.stacks) == 2


# -- observation

def test_aliased_stacking_pair_shares_a_key():
    env = env_for(Task.STACKING, width=3, height=3, observation_mode=ObservationMode.ALIASED)
    holding = GridState(stacks=(((2, 1), ("red0",)),), gripper="red1", held_from=(0, 0))
    resting = GridState(stacks=(((0, 0), ("red0",)), ((2, 1), ("red1",))))
    assert env.observe(holding).key == env.observe(resting).key
    assert env.observe(holding, "full").key != env.observe(resting, "full").key
    # towers collapse to occupancy
    tower = GridState(stacks=(((2, 1), ("red0", "red1")),))
    single = GridState(stacks=(((2, 1), ("red0",)),), gripper="red1", held_from=(2, 1))
    assert env.observe(tower).key == env.observe(single).key


def test_mode_tag_is_embedded(stacking_env):
    s = stacking_env.reset(0)
    full, aliased = stacking_env.observe(s, "full").key, stacking_env.observe(s, "aliased").key
    assert full.startswith("F|") and aliased.startswith("A|") and full != aliased


@pytest.mark.parametrize("task", list(Task))
def test_full_keys_are_injective_on_reachable_layouts(task):
    env = env_for(task, width=3, height=3)
    states = enumerate_reachable(env, [env.reset(0)])
    keys = {env.observe(s, "full").key for s in states}
    assert len(keys) == len(states)
    # step counter is not part of the key
    s = states[1]
    assert env.observe(replace(s, step=5)).key == env.observe(s).key


# -- demonstrations

@pytest.mark.parametrize("task, length", [(Task.STACKING, 2), (Task.KITTING, 6)])
def test_scripted_demo_lengths(task, length):
    for randomize in (False, True):
        env = env_for(task, randomize_layout=randomize)
        for seed in range(10):
            demo = env.scripted_demo(seed)
            assert len(demo.actions) == length
            env.replay(demo)
            assert env.is_goal(demo.states[-1])


def test_kitting_demo_order_is_red_green_blue(kitting_env):
    demo = kitting_env.scripted_demo(0)
    held = [s.gripper for s in demo.states if s.gripper is not None]
    assert held == ["red", "green", "blue"]


def test_serialization_round_trips(kitting_env, stacking_env):
    for env in (kitting_env, stacking_env):
        demo = env.scripted_demo(1)
        assert Demonstration.from_dict(demo.to_dict()) == demo
        for s in demo.states:
            assert GridState.from_dict(s.to_dict()) == s
    assert Action.from_dict({"kind": "pick", "cell": [1, 2]}) == Action(PICK, (1, 2))
    with pytest.raises(ParseError):
        Action.from_dict({"kind": "push", "cell": [1, 2]})
    with pytest.raises(ParseError):
        Demonstration.from_dict({"task": "kitting", "seed": 0, "states": []})
    held = demo.states[1].to_dict()
    assert {"id": demo.states[1].gripper, "cell": "gripper"} in held["blocks"]


# -- invariants over reachable state spaces

@pytest.mark.parametrize("task, dims", [(Task.STACKING, (3, 3)), (Task.STACKING, (4, 4)),
                                        (Task.KITTING, (3, 3))])
def test_goal_discrimination_and_conservation(task, dims):
    env = env_for(task, width=dims[0], height=dims[1])
    states = enumerate_reachable(env, [env.reset(0)])
    goal_of: dict = {}
    limit = 2 if task is Task.STACKING else 1
    for s in states:
        sigma = env.features(s)
        assert goal_of.setdefault(sigma, env.is_goal(s)) == env.is_goal(s)
        assert sorted(s.blocks()) == sorted(env.reset(0).blocks())
        assert all(len(stack) <= limit for _, stack in s.stacks)
        if task is Task.KITTING:
            assert len({c for _, c in s.plates}) == 3


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(list(Task)), st.integers(0, 10**6),
       st.lists(st.integers(0, 31), min_size=1, max_size=8))
def test_random_rollouts_conserve_blocks_and_are_deterministic(task, seed, actions):
    env = env_for(task, randomize_layout=True)
    s = env.reset(seed)
    blocks = sorted(s.blocks())
    for a in actions:
        nxt, done = env.step(s, a)
        assert env.step(s, a) == (nxt, done)
        assert sorted(nxt.blocks()) == blocks
        assert nxt.step == s.step + 1
        s = nxt
        if done:
            break
