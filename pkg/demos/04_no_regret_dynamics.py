"""
Learning to play without a model
================================

Every player runs bandit exponential weights on a discretized game and only
observes its own realized loss. The empirical play converges to a coarse
correlated equilibrium whose gap is bounded by the worst player's regret.
"""

from pathlib import Path

import numpy as np

from flpg import GameConfig
from flpg.dynamics import RepeatedGameSpec, cce_gap, empirical_regret, flpg_game, run_dynamics

cfg = GameConfig.load(Path(__file__).parent.parent / "configs" / "figure_b.json", strict=False)
game = flpg_game(cfg, delta_levels=9, attacker_actions=[0, 1, 10, 100, 1000, 10000])

for T in [500, 2000, 8000]:
    trace = run_dynamics(RepeatedGameSpec(game.action_counts, game.losses, T, seed=1))
    regret = empirical_regret(trace, game.losses)
    gap = cce_gap(trace.empirical_joint(), 1 - game.losses)
    print(f"T={T:>5}  regret {np.round(regret, 4)}  gap {gap:.4f}")

# where the play ended up
joint = trace.empirical_joint()
top = np.argsort(joint, axis=None)[::-1][:3]
for flat in top:
    i, j = np.unravel_index(flat, joint.shape)
    print(f"delta={game.delta_levels[i]:.3f}, C_a={game.attacker_actions[j]:.0f}: {joint[i, j]:.3f}")
