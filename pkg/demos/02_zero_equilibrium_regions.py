"""
When does attacking stop paying?
================================

Scan the attacker's worst-case payoff over protection and attack rounds for
the two shipped configurations. In the first, small protection leaves a
profitable region; in the second, every attack loses even without protection.
"""

from pathlib import Path

import numpy as np

from flpg import GameConfig
from flpg.equilibrium import is_zero_equilibrium, region_scan, robust_equilibrium, zero_eq_threshold

here = Path(__file__).parent.parent / "configs"
deltas = np.linspace(0, 1, 101)
rounds = np.linspace(0, 10000, 101)

for name in ["figure_a.json", "figure_b.json"]:
    cfg = GameConfig.load(here / name, strict=False)
    scan = region_scan(cfg, deltas, rounds)
    signs = scan.signs[:, 1:]
    profitable = deltas[(signs > 0).any(axis=1)]
    print(name)
    print(f"  threshold {zero_eq_threshold(cfg):+.4f}, zero equilibrium: {is_zero_equilibrium(cfg)}")
    if len(profitable):
        print(f"  attacks pay for delta <= {profitable.max():.2f}")
    else:
        print("  no attack pays anywhere on the grid")

# the second config also solves to a no-attack equilibrium
cfg = GameConfig.load(here / "figure_b.json", strict=False)
rep = robust_equilibrium(cfg)
print(rep.classification.value, rep.deltas, rep.attack_rounds)
