"""Classic Howard on the 1D and 2D eikonal problems, against the exact solution.

The value of the exit-time problem after the Kruzkov change of variable is
1 - exp(-dist(x, boundary)). The upwind scheme is first order, so the error
should halve with the grid step while the iteration count doubles.
"""

import numpy as np

from parhoward import builtin_problem, howard_solve
from parhoward.problems import oracle_values


def solve(spec):
    res = howard_solve(spec)
    V = spec.initial_values(0.0)
    V[res.unknowns] = res.values
    return V, res.iterations


for name in ("eikonal1d", "eikonal2d"):
    print(name)
    print(f"{'dx':>8} {'iters':>6} {'sup error':>12} {'ratio':>6}")
    prev = None
    for dx in (0.1, 0.05, 0.025):
        spec = builtin_problem(name, dx)
        V, iters = solve(spec)
        err = np.abs(V - oracle_values(spec)).max()
        ratio = f"{prev / err:6.2f}" if prev else ""
        print(f"{dx:8.4f} {iters:6d} {err:12.3e} {ratio:>6}")
        prev = err
    print()
