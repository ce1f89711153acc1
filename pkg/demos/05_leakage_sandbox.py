"""
Measuring leakage on a linear toy
=================================

With a linear gradient map the Lipschitz constants are singular values, so
the only fitted quantities are the regret constants of the attacker. We check
that measured leakage stays inside its bracket, then break the bracket on
purpose by halving c_b.
"""

import numpy as np

from flpg.sandbox import LinearTask, fit_constants, required_data_bound, simulate_attack, validate_bounds

task = LinearTask.make(dim=8, seed=7, cond=3.0)
print(f"c_a = {task.c_a:.4f}, c_b = {task.c_b:.4f}")

rng = np.random.default_rng(0)
traces = [simulate_attack(task, float(rng.uniform(0, 1)), T, seed=s)
          for s in range(10) for T in (20, 50, 100, 200, 400)]
fit = fit_constants(traces)
print(f"fitted p_hat {fit.p_hat:.3f} ({fit.regime}), c_0 {fit.c_0:.3f}, c_2 {fit.c_2:.3f}")

# the bracket only makes sense for a large enough data bound
D = max(1.0, required_data_bound(fit, task.c_a, task.c_b), max(t.distances.max() for t in traces))
good = [validate_bounds(t, fit, task.c_a, task.c_b, D) for t in traces]
bad = [validate_bounds(t, fit, task.c_a, task.c_b / 2, D) for t in traces]
print(f"D = {D:.2f}: {sum(r.contained for r in good)}/{len(good)} traces inside the bracket")
print(f"halved c_b: {sum(r.contained is False for r in bad)} violations")

r = good[-1]
print(f"last trace: {r.lower:.4f} <= {r.empirical:.4f} <= {r.upper:.4f}")
