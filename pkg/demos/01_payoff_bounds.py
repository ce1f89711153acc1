"""
Payoff bounds for one protection/attack profile
===============================================

A single defender publishes a perturbed gradient and the attacker spends some
number of rounds inverting it. Neither side knows its payoff exactly, only an
interval, and a robust operator turns that interval into a number.
"""

from pathlib import Path

import numpy as np

from flpg import GameConfig, RobustOperator, StrategyProfile
from flpg.model import (attacker_payoff_bounds, defender_payoff_bounds, privacy_leakage_bounds,
                        robust_value)

cfg = GameConfig.load(Path(__file__).parent.parent / "configs" / "figure_b.json", strict=False)

# leakage brackets shrink as the attacker runs longer
for rounds in [1, 10, 100, 1000, 10000]:
    lb = privacy_leakage_bounds(0.2, rounds, cfg)
    print(f"C_a={rounds:>5}  V_p in [{lb.bounds.lower:+.4f}, {lb.bounds.upper:+.4f}]  ({lb.regime.value})")

# the same profile scored by both operators
prof = StrategyProfile([0.2], 100)
for op in RobustOperator:
    d = robust_value(defender_payoff_bounds(prof, 0, cfg), op)
    a = robust_value(attacker_payoff_bounds(prof, cfg), op)
    print(f"{op.value:>20}: defender {d:+.4f}, attacker {a:+.4f}")

# more protection never helps the attacker
deltas = np.linspace(0, 1, 6)
print([round(attacker_payoff_bounds(StrategyProfile([d], 100), cfg).lower, 4) for d in deltas])
