from __future__ import annotations

import pytest

from rmshaping.graph_builder import reward_machine_from_demos
from rmshaping.gridworld import EnvConfig, PickPlaceEnv, Task
from rmshaping.oracle import oracle_setup

GAMMA = 0.7

# criterion lines printed by the acceptance module, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def stacking_env():
    return PickPlaceEnv(EnvConfig(Task.STACKING))


@pytest.fixture(scope="session")
def kitting_env():
    return PickPlaceEnv(EnvConfig(Task.KITTING))


@pytest.fixture(scope="session")
def stacking_rm(stacking_env):
    return reward_machine_from_demos(stacking_env, [stacking_env.scripted_demo(0)], GAMMA)


@pytest.fixture(scope="session")
def kitting_rm(kitting_env):
    demos = [kitting_env.scripted_demo(s) for s in range(100)]
    return reward_machine_from_demos(kitting_env, demos, GAMMA)


@pytest.fixture(scope="session")
def stacking_small():
    """3x3 fixed-layout stacking world: env, rm, graph, reachable layouts."""
    return oracle_setup(Task.STACKING, 3, 3, GAMMA)


@pytest.fixture(scope="session")
def kitting_small():
    return oracle_setup(Task.KITTING, 3, 3, GAMMA)
