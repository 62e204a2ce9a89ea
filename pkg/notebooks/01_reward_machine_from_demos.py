"""Build a reward machine for kitting from scripted demonstrations.

Run with ``python3 notebooks/01_reward_machine_from_demos.py``.
"""

from __future__ import annotations

from rmshaping.graph_builder import graph_statistics, reward_machine_from_demos
from rmshaping.gridworld import EnvConfig, PickPlaceEnv, Task
from rmshaping.rm_core import serialize_rm, shaped_reward

env = PickPlaceEnv(EnvConfig(Task.KITTING))
demos = [env.scripted_demo(seed) for seed in range(20)]
print(f"{len(demos)} demonstrations, {len(demos[0].actions)} actions each")

rm, graph = reward_machine_from_demos(env, demos, gamma=0.7)
print("graph:", graph_statistics(graph))

# walk the chain from the initial state to the goal
u = rm.initial
while True:
    names = rm.states[u].true_names(rm.catalog) or ["(nothing true)"]
    print(f"  u={u} dist={rm.distance[u]} pot={rm.pot(u):+.4f}  {', '.join(names)}")
    nxt = graph.successors(u)
    if not nxt:
        break
    print(f"    step reward toward goal: {shaped_reward(rm, u, nxt[0]):+.2e}")
    u = nxt[0]

# going backwards costs something
a, b = rm.initial, graph.successors(rm.initial)[0]
print(f"moving back from u={b} to u={a}: {shaped_reward(rm, b, a):+.4f}")

print(f"serialized machine: {len(serialize_rm(rm))} bytes")
