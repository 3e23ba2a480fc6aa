"""Pursuit-evasion game in relative coordinates with eight headings per player.

The pursuer closes at unit speed while the evader runs at half speed.
The value is zero on the capture ball and positive outside it.
A decomposed max-min solve must agree with the single-block oracle.
"""

import numpy as np

from parhoward import builtin_problem, decompose, maxmin_solve

game = builtin_problem("pursuit_evasion", 0.1)
oracle = maxmin_solve(game, decompose(game.grid, [1, 1]))
print(f"oracle: {oracle.outer_iterations} outer, {oracle.inner_iterations} inner iterations")

for s in (2, 3, 4):
    rep = maxmin_solve(game, decompose(game.grid, [s, s]))
    print(f"{s}x{s}: outer {rep.outer_iterations}, diff to oracle {np.abs(rep.values - oracle.values).max():.1e}")

mask = game.target.mask(game.grid)
outside = ~mask & ~game.grid.dirichlet
print(f"V on capture ball: max {np.abs(oracle.values[mask]).max():.1e}")
print(f"V outside: min {oracle.values[outside].min():.3f}")

swapped = maxmin_solve(game, decompose(game.grid, [2, 2]), swap_roles=True)
print(f"min-max vs max-min gap: {np.abs(swapped.values - oracle.values).max():.1e}")
