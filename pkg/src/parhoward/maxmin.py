"""Policy iteration for two-player (max-min) problems.

Player ``alpha`` picks from ``controls_a``, player ``beta`` from ``controls_b``.
Pair ``(ia, ib)`` is control ``ia * nB + ib`` of the induced one-player
system, so every row of the game is an ordinary scheme row.  With the
residual ``R(a, b) = B(a, b) V - c(a, b)`` the discrete game reads

    max_b min_a R(a, b) = 0,

i.e. ``beta`` minimises the cost and ``alpha`` maximises it (in pursuit-evasion
``beta`` is the pursuer).  The solver nests two Howard loops: for a frozen
``beta`` the ``alpha`` problem is solved exactly, then ``beta`` is improved
greedily on the inner-minimised residual.  ``swap_roles`` solves
``min_a max_b R = 0`` instead, with ``alpha`` outside.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import MaxIterExceeded, MaxOuterExceeded
from .grid import Decomposition, Grid
from .howard import SWITCH_RTOL, HowardResult, howard_solve
from .pha import (
    PhaConfig,
    SolveReport,
    _nested_interface_solver,
    coarse_init,
    decomposed_loop,
    initial_iterate,
)
from .scheme import ProblemSpec, StencilTable, node_values

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Two-player problem; ``dynamics(x, a, b)`` and ``running_cost(x, a, b)``."""

    grid: Grid
    dynamics: Callable
    running_cost: Callable
    discount: float
    exit_cost: Callable
    controls_a: np.ndarray
    controls_b: np.ndarray
    scheme: str = "upwind"
    target: object = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in ("controls_a", "controls_b"):
            c = np.asarray(getattr(self, key), dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if len(c) < 1:
                raise ValueError(f"{key} is empty")
            object.__setattr__(self, key, c)

    @property
    def n_a(self) -> int:
        return len(self.controls_a)

    @property
    def n_b(self) -> int:
        return len(self.controls_b)

    @cached_property
    def problem(self) -> ProblemSpec:
        """The one-player system over all control pairs."""
        da = self.controls_a.shape[1]
        pairs = np.array([np.concatenate([a, b]) for a in self.controls_a for b in self.controls_b])
        dyn, cost = self.dynamics, self.running_cost

        def f(x, c):
            return dyn(x, c[:da], c[da:])

        def l(x, c):
            return cost(x, c[:da], c[da:])

        return ProblemSpec(
            self.grid, f, l, self.discount, self.exit_cost, pairs, self.scheme,
            target=self.target, name=self.name, params=dict(self.params),
        )

    @property
    def table(self) -> StencilTable:
        return self.problem.table

    def with_grid(self, grid: Grid) -> "GameSpec":
        return dataclasses.replace(self, grid=grid)

    def negated(self) -> "GameSpec":
        """Same game with running and exit costs negated."""
        cost, g = self.running_cost, self.exit_cost
        return dataclasses.replace(
            self,
            running_cost=lambda x, a, b: -np.asarray(cost(x, a, b), dtype=float),
            exit_cost=lambda x: -np.asarray(g(x), dtype=float),
        )


def alpha_choices(n_a: int, n_b: int, beta: np.ndarray) -> np.ndarray:
    """Pair indices open to ``alpha`` at each node once ``beta`` is frozen."""
    return np.arange(n_a)[None, :] * n_b + np.asarray(beta, dtype=np.int64)[:, None]


def beta_choices(n_a: int, n_b: int, alpha: np.ndarray) -> np.ndarray:
    """Pair indices open to ``beta`` at each node once ``alpha`` is frozen."""
    return np.asarray(alpha, dtype=np.int64)[:, None] * n_b + np.arange(n_b)[None, :]


def f_beta_solve(spec: GameSpec, unknowns, frozen_policy, fixed_values=None, frozen: str = "beta",
                 max_iter: int = 1000) -> HowardResult:
    """Solve for one player with the other's per-node control frozen.

    With ``frozen="beta"`` this solves ``min_a R(a, beta) = 0`` (``alpha``
    maximises the cost); with ``frozen="alpha"`` it solves
    ``max_b R(alpha, b) = 0``.  The returned policy holds pair indices.
    """
    U = spec.grid.interior if unknowns is None else np.asarray(unknowns, dtype=np.int64)
    frozen_policy = np.broadcast_to(np.asarray(frozen_policy, dtype=np.int64), U.shape)
    if frozen == "beta":
        choices, sense = alpha_choices(spec.n_a, spec.n_b, frozen_policy), "min"
    elif frozen == "alpha":
        choices, sense = beta_choices(spec.n_a, spec.n_b, frozen_policy), "max"
    else:
        raise ValueError(f"frozen must be 'alpha' or 'beta', got {frozen!r}")
    V = node_values(spec.problem, fixed_values)
    return howard_solve(spec.table, U, V, max_iter=max_iter, sense=sense, choices=choices)


@dataclass
class MaxMinResult:
    values: np.ndarray
    policy: np.ndarray
    outer_iterations: int
    inner_iterations: int
    converged: bool
    residual_inf: float
    unknowns: np.ndarray
    history: list[np.ndarray] = field(default_factory=list, repr=False)


def saddle_residual(table: StencilTable, n_a: int, n_b: int, unknowns, V: np.ndarray,
                    swap_roles: bool = False) -> np.ndarray:
    """``max_b min_a R`` (or ``min_a max_b R``) at each unknown; zero at the solution."""
    R = table.residuals(V, np.asarray(unknowns, dtype=np.int64)).reshape(n_a, n_b, -1)
    if swap_roles:
        return R.max(axis=1).min(axis=0)
    return R.min(axis=0).max(axis=0)


def maxmin_howard(table: StencilTable, n_a: int, n_b: int, unknowns, V: np.ndarray,
                  policy0: np.ndarray | None = None, max_iter: int = 1000, max_inner: int = 1000,
                  swap_roles: bool = False, record: bool = False, tol: float = 1e-13) -> MaxMinResult:
    """Nested Howard iteration on the unknowns with every other node held at ``V``.

    The outer player's policy is improved per node by ``argmax`` (outer
    ``beta``) or ``argmin`` (outer ``alpha`` when ``swap_roles``) of the
    residual minimised (maximised) over the inner player.

    Args:
        table: stencil table over control pairs.
        V: full node vector; entries outside ``unknowns`` are the fixed data.
        policy0: optional per-unknown pair indices to warm-start both players.
    """
    U = np.asarray(unknowns, dtype=np.int64)
    W = np.array(V, dtype=float, copy=True)
    if policy0 is not None:
        pair = np.asarray(policy0, dtype=np.int64)
    else:
        pair = np.zeros(len(U), dtype=np.int64)
    a, b = pair // n_b, pair % n_b
    history = []
    prev = None
    inner_total = 0
    converged = False
    t = 0
    while t < max_iter:
        t += 1
        if swap_roles:
            choices = beta_choices(n_a, n_b, a)
            res = howard_solve(table, U, W, policy0=a * n_b + b, max_iter=max_inner, sense="max",
                               choices=choices)
        else:
            choices = alpha_choices(n_a, n_b, b)
            res = howard_solve(table, U, W, policy0=a * n_b + b, max_iter=max_inner, sense="min",
                               choices=choices)
        if not res.converged:
            raise MaxIterExceeded(res)
        inner_total += res.iterations
        W[U] = res.values
        a, b = res.policy // n_b, res.policy % n_b
        if record:
            history.append(res.values.copy())
        if prev is not None and np.abs(res.values - prev).max(initial=0.0) <= tol:
            converged = True
            break
        R = table.residuals(W, U).reshape(n_a, n_b, -1)
        cols = np.arange(len(U))
        tol = SWITCH_RTOL * max(1.0, float(np.abs(res.values).max(initial=0.0)))
        if swap_roles:
            outer = R.max(axis=1)
            new_a = np.argmin(outer, axis=0)
            new_a = np.where(outer[a, cols] - outer[new_a, cols] > tol, new_a, a)
            if np.array_equal(new_a, a):
                converged = True
                break
            a = new_a
        else:
            outer = R.min(axis=0)
            new_b = np.argmax(outer, axis=0)
            new_b = np.where(outer[new_b, cols] - outer[b, cols] > tol, new_b, b)
            if np.array_equal(new_b, b):
                converged = True
                break
            b = new_b
        prev = res.values
    if not converged:
        log.warning("max-min iteration stopped at max_iter=%d without convergence", max_iter)
    r = saddle_residual(table, n_a, n_b, U, W, swap_roles)
    return MaxMinResult(W[U].copy(), a * n_b + b, t, inner_total, converged,
                        float(np.abs(r).max(initial=0.0)), U, history)


def _game_block(table, n_a, n_b, cfg: PhaConfig, swap_roles: bool):
    def solve(U, V, warm):
        res = maxmin_howard(table, n_a, n_b, U, V, policy0=warm, max_iter=cfg.max_inner,
                            max_inner=cfg.max_inner, swap_roles=swap_roles)
        if not res.converged:
            raise MaxIterExceeded(res)
        return res.values, res.policy, res.outer_iterations, res.inner_iterations

    return solve


def maxmin_solve(spec: GameSpec, dec: Decomposition, cfg: PhaConfig | None = None,
                 v0: np.ndarray | None = None, swap_roles: bool = False) -> SolveReport:
    """Decomposed max-min solve; the block and interface solves are nested Howard loops.

    The report's ``policy`` holds pair indices and ``beta`` the controls of
    player ``beta``.  ``inner_iterations`` totals the inner Howard
    evaluations over all blocks.

    Raises:
        MaxOuterExceeded: when ``cfg.max_outer`` is reached; carries the report.
    """
    cfg = cfg or PhaConfig()
    t_start = time.perf_counter()
    problem = spec.problem
    table = problem.table
    grid = spec.grid
    U = grid.interior
    n_a, n_b = spec.n_a, spec.n_b
    def coarse_solve(p):
        W = p.initial_values(0.0)
        res = maxmin_howard(p.table, n_a, n_b, p.grid.interior, W, max_inner=cfg.max_inner,
                            swap_roles=swap_roles)
        W[p.grid.interior] = res.values
        return W

    V, init_time = initial_iterate(problem, cfg, v0, coarse_solve)
    warm = np.full(grid.n_nodes, -1, dtype=np.int64)
    block = _game_block(table, n_a, n_b, cfg, swap_roles)
    if cfg.nested_interface_splits:
        interface = _nested_interface_solver(table, dec, cfg, lambda: _game_block(table, n_a, n_b, cfg, swap_roles))
    else:
        interface = block
    steps, ok, history = decomposed_loop(dec.subdomains, dec.interface, V, block, interface, cfg, U, warm)
    r = saddle_residual(table, n_a, n_b, U, V, swap_roles)
    report = SolveReport(
        V, warm, len(steps), steps, ok, float(np.abs(r).max(initial=0.0)), init_time,
        time.perf_counter() - t_start, history, beta=warm % n_b,
    )
    if not ok:
        raise MaxOuterExceeded(report)
    return report
