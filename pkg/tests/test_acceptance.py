"""Acceptance criteria. Each test prints one ``criterion N PASS|FAIL`` line."""

import statistics

import numpy as np
import pytest

from parhoward import (
    PhaConfig,
    assemble_system,
    builtin_problem,
    coarse_init,
    decompose,
    howard_solve,
    maxmin_solve,
    monotone_trajectory_check,
    optimal_splits,
    pha_solve,
)
from parhoward.problems import oracle_values

EQUIV_TOL = 1e-9
INVERSE_TOL = -1e-12
COMPLEMENTARITY_TOL = 1e-10
MAXMIN_TOL = 1e-8


def classic(spec, **kw):
    res = howard_solve(spec, **kw)
    V = spec.initial_values(0.0)
    V[res.unknowns] = res.values
    return V, res


def test_oracle_equivalence(acceptance):
    cases = [
        ("eikonal1d", 0.05, {}, 1),
        ("eikonal2d", 0.1, {"control_count": 32}, 2),
        ("zermelo", 0.05, {}, 2),
        ("dubins", 0.1, {}, 3),
    ]
    worst, notes = 0.0, []
    for name, dx, kw, d in cases:
        spec = builtin_problem(name, dx, **kw)
        V, _ = classic(spec)
        for s in (2, 4):
            rep = pha_solve(spec, decompose(spec.grid, [s] * d))
            err = np.abs(rep.values - V).max()
            worst = max(worst, err)
            notes.append(f"{name}/{s}:{err:.1e}")
    ok = worst <= EQUIV_TOL
    acceptance(1, "PHA equals classic Howard", ok, f"worst {worst:.2e}; " + " ".join(notes))
    assert ok


def test_iteration_counts_1d(acceptance):
    expected = {0.1: 10, 0.05: 20, 0.025: 40, 0.0125: 80}
    got = {dx: classic(builtin_problem("eikonal1d", dx))[1].iterations for dx in expected}
    ok = all(abs(got[dx] - n) <= 4 for dx, n in expected.items())
    acceptance(2, "classic iterations 1D", ok, f"got {list(got.values())} expected {list(expected.values())}")
    assert ok


def test_iteration_counts_2d(acceptance):
    expected = {0.1: 11, 0.05: 21}
    got = {dx: classic(builtin_problem("eikonal2d", dx))[1].iterations for dx in expected}
    spec = builtin_problem("eikonal2d", 0.1)
    outer = pha_solve(spec, decompose(spec.grid, [2, 2])).outer_iterations
    ok = all(abs(got[dx] - n) <= 4 for dx, n in expected.items()) and outer <= 4
    acceptance(3, "classic iterations 2D and PHA couplings", ok,
               f"classic {list(got.values())} expected {list(expected.values())}; PHA outer {outer}")
    assert ok


@pytest.mark.parametrize("name, levels", [
    ("eikonal1d", (0.1, 0.05, 0.025, 0.0125)),
    ("eikonal2d", (0.1, 0.05, 0.025, 0.0125)),
])
def test_analytic_convergence(acceptance, name, levels):
    errs = []
    for dx in levels:
        spec = builtin_problem(name, dx)
        errs.append(np.abs(classic(spec)[0] - oracle_values(spec)).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    ok = bool(np.all((ratios >= 1.6) & (ratios <= 2.4)))
    acceptance(4, f"first-order convergence {name}", ok, "ratios " + " ".join(f"{r:.3f}" for r in ratios))
    assert ok


def test_monotone_matrices(acceptance):
    rng = np.random.default_rng(20)
    instances = [
        builtin_problem("eikonal1d", 0.1),
        builtin_problem("eikonal1d", 0.1, scheme="semilagrangian"),
        builtin_problem("eikonal2d", 0.5),
        builtin_problem("eikonal2d", 0.5, scheme="semilagrangian"),
        builtin_problem("zermelo", 0.5),
        builtin_problem("zermelo", 0.5, scheme="semilagrangian"),
    ]
    worst, count = np.inf, 0
    for spec in instances:
        U = spec.grid.interior
        assert len(U) <= 20
        for _ in range(50):
            B = assemble_system(spec, U, rng.integers(spec.n_controls, size=len(U))).matrix.toarray()
            worst = min(worst, np.linalg.inv(B).min())
            count += 1
    ok = worst >= INVERSE_TOL
    acceptance(5, "B(a)^-1 entrywise nonnegative", ok, f"{count} policies, min entry {worst:.2e}")
    assert ok


def test_monotone_iterates(acceptance):
    notes, ok = [], True
    for name, dx, splits in (("eikonal1d", 0.05, [4]), ("eikonal2d", 0.1, [2, 2])):
        spec = builtin_problem(name, dx)
        V, _ = classic(spec)
        dec = decompose(spec.grid, splits)
        up = monotone_trajectory_check(spec, dec, V, v0=spec.initial_values(0.0), bound_tol=1e-10)
        down = monotone_trajectory_check(spec, dec, V, v0=V + 1.0)
        ok &= up.ok and down.ok and up.direction == "non-decreasing" and down.direction == "non-increasing"
        notes.append(f"{name}: up {up.n_iterates} iterates, down {down.n_iterates}")
    acceptance(6, "monotone outer iterates", ok, "; ".join(notes))
    assert ok


def test_finite_termination(acceptance):
    cases = [
        ("eikonal1d", 0.1, [2]),
        ("eikonal2d", 0.1, [2, 2]),
        ("zermelo", 0.1, [2, 2]),
        ("dubins", 0.25, [2, 2, 2]),
    ]
    ok, notes = True, []
    for name, dx, splits in cases:
        spec = builtin_problem(name, dx)
        n = len(spec.grid.interior)
        _, res = classic(spec, tol=0.0)
        rep = pha_solve(spec, decompose(spec.grid, splits), PhaConfig(epsilon=0.0))
        good = res.converged and rep.converged and res.iterations <= 2 * n and rep.outer_iterations <= 2 * n
        ok &= good
        notes.append(f"{name}: HA {res.iterations} PHA {rep.outer_iterations} N {n}")
    game = builtin_problem("pursuit_evasion", 0.25)
    g = maxmin_solve(game, decompose(game.grid, [2, 2]), PhaConfig(epsilon=0.0))
    ok &= g.converged and g.outer_iterations <= 2 * len(game.grid.interior)
    notes.append(f"pursuit_evasion: PHA {g.outer_iterations}")
    acceptance(7, "finite termination with eps=0", ok, "; ".join(notes))
    assert ok


def test_obstacle_complementarity(acceptance):
    spec = builtin_problem("dubins", 0.1, obstacle=True)
    V, res = classic(spec)
    U = spec.grid.interior
    free = spec.with_grid(spec.grid)
    bellman = free.table.residuals(V, U).max(axis=0)
    gap = V[U] - spec.obstacle.values[U]
    comp = np.maximum(bellman, gap)
    worst = np.abs(comp).max()
    active = int((gap > -1e-12).sum())
    ok = worst <= COMPLEMENTARITY_TOL and 0 < active < len(U)
    acceptance(8, "obstacle complementarity (Dubins)", ok, f"max |residual| {worst:.2e}, {active}/{len(U)} nodes on the obstacle")
    assert ok


def test_maxmin_consistency(acceptance):
    game = builtin_problem("pursuit_evasion", 0.1)
    oracle = maxmin_solve(game, decompose(game.grid, [1, 1])).values
    diffs = [np.abs(maxmin_solve(game, decompose(game.grid, [s, s])).values - oracle).max() for s in (2, 4)]
    mask = game.target.mask(game.grid)
    outside = ~mask & ~game.grid.dirichlet
    signs = np.all(oracle[mask] == 0.0) and np.all(oracle[outside] > 0.0)
    ok = max(diffs) <= MAXMIN_TOL and bool(signs)
    acceptance(9, "max-min decomposed vs oracle", ok,
               f"diff {max(diffs):.2e}, min outside {oracle[outside].min():.3f}")
    assert ok


@pytest.mark.slow
def test_bottleneck(acceptance):
    spec = builtin_problem("eikonal2d", 0.025)
    spec.table  # assemble once outside the timings
    times = {}
    for s in (2, 3, 4, 5, 6):
        dec = decompose(spec.grid, [s, s])
        times[s] = statistics.median(pha_solve(spec, dec).total_time for _ in range(5))
    best = min(times, key=times.get)
    predicted = optimal_splits(spec.grid.n_nodes, 2)
    interior = best not in (2, 6)
    ok = interior and abs(predicted - best) <= 2
    detail = " ".join(f"{s}:{t * 1e3:.0f}ms" for s, t in times.items())
    acceptance(10, "bottleneck: interior optimum", ok, f"{detail}; argmin {best}, predicted {predicted}")
    assert ok


def test_coarse_initialisation(acceptance):
    spec = builtin_problem("eikonal2d", 0.025)
    dec = decompose(spec.grid, [2, 2])
    _, init_time = coarse_init(spec, 4)
    coarse = pha_solve(spec, dec, PhaConfig(init="coarse", coarse_points=4))
    zero = pha_solve(spec, dec, PhaConfig(init="zero"))
    frac = coarse.init_time / coarse.total_time
    ok = frac < 0.05 and coarse.outer_iterations <= zero.outer_iterations
    acceptance(11, "coarse initialisation", ok,
               f"init {frac:.1%} of total ({init_time * 1e3:.1f}ms standalone); outer {coarse.outer_iterations} vs zero {zero.outer_iterations}")
    assert ok
