"""
A correlation device for a 2x2 game
===================================

A trusted oracle privately suggests an action to each player. The cheapest
suggestion distribution that both players strictly prefer to follow is an
LP over the 4-simplex, solved here by enumerating its vertices.
"""

import numpy as np

from flpg.oracle import (CorrelatedGame2x2, Family, coefficients, optimality_residual, solve_oracle_lp,
                         verify_following_equilibrium)

rng = np.random.default_rng(3)
for attempt in range(100):
    game = CorrelatedGame2x2(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), tuple(rng.uniform(0, 1, 4)))
    a = coefficients(game)
    sol = solve_oracle_lp(a, game.cost)
    if sol.family is not Family.INFEASIBLE:
        break
    print(f"draw {attempt}: infeasible, constraints {sol.certificate} cannot hold together")

print("x =", np.round(sol.x, 6))
print("incentive margins:", np.round(sol.margins, 6))
print("expected cost:", round(sol.cost_value, 6))
print("follows:", verify_following_equilibrium(sol.x, game)[0])
# nonnegative dual weights reproduce the cost gradient
print("optimality residual:", optimality_residual(a, game.cost, sol.x, 1e-6))
