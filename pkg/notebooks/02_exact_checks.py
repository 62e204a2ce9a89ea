"""Exact checks of calibrated shaping on small grids via value iteration.

Run with ``python3 notebooks/02_exact_checks.py``.
"""

from __future__ import annotations

from rmshaping.gridworld import Task
from rmshaping.oracle import (Shaping, build_cross_product, oracle_setup, run_check,
                              value_iteration)

for task in Task:
    env, rm, _, states = oracle_setup(task)
    print(f"{task.value}: {len(states)} reachable layouts, {len(rm)} machine states")
    for check in ("preconditions", "zero-value", "policy-preservation", "telescoping"):
        rep = run_check(task, check)
        print(f"  {check:20s} pass={rep.passed} worst={rep.worst_value}")

# side by side: the unshaped start value is discounted, the shaped one is zero
env, rm, _, states = oracle_setup(Task.STACKING)
start = env.reset(0)
for shaping in (Shaping.NONE, Shaping.SHAPED):
    mdp = build_cross_product(env, states, rm, shaping)
    rep = value_iteration(mdp)
    print(f"stacking V*(start) with {shaping.value}: {rep.values[mdp.index[start]]:.6f} "
          f"after {rep.iterations} sweeps")
