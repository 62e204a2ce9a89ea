"""Train the four agent variants and compare learning curves.

Run with ``python3 notebooks/03_training_and_ablation.py`` (about a minute).
"""

from __future__ import annotations

import numpy as np

from rmshaping.harness import RunConfig, ablate

# kitting on a fixed layout with no demonstrations: only the shaped variants
# find the goal (one demo is already enough for all four to solve it)
base = RunConfig(task="kitting", episodes=600, eval_every=50)
res = ablate(base, ["Q", "Q_RS", "Q_AS", "QRM"], [0], range(3))
for variant in ("Q", "Q_RS", "Q_AS", "QRM"):
    aucs = [res.auc[(variant, 0, s)] for s in range(3)]
    final = [r.success_rate for r in res.rows if r.variant == variant and r.episode == 600]
    print(f"kitting {variant:5s} mean AUC {np.mean(aucs):5.2f}  final success {np.mean(final):.2f}")

# stacking with random layouts: more demonstrations help
base = RunConfig(task="stacking", variant="QRM", episodes=300, eval_every=10,
                 randomize_layout=True)
res = ablate(base, ["QRM"], [0, 10, 100], range(5))
for n in (0, 10, 100):
    print(f"stacking QRM, {n:3d} demos: mean AUC {np.mean([res.auc[('QRM', n, s)] for s in range(5)]):.2f}")

# aliased observations hide the held block, which breaks the broadcast
base = RunConfig(task="kitting", episodes=300, eval_every=10, demo_count=100,
                 observation_mode="aliased")
res = ablate(base, ["Q_AS", "QRM"], [100], range(3))
for variant in ("Q_AS", "QRM"):
    print(f"aliased kitting {variant:5s} mean AUC "
          f"{np.mean([res.auc[(variant, 100, s)] for s in range(3)]):.2f}")
