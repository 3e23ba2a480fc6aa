"""Domain-decomposed policy iteration.

Each outer iteration runs two half-steps:

1. every subdomain block is solved by Howard's algorithm with the interface
   (and Dirichlet) values frozen at a snapshot of the current iterate; the
   blocks are independent and may run on a thread pool;
2. the interface nodes are solved by Howard's algorithm with the freshly
   computed subdomain values frozen.

The loop stops when two consecutive iterates differ by at most ``epsilon``
in sup norm.  Its fixed point is the solution of the undecomposed system.

Timings follow the convention of reporting the slowest block of the
parallel half-step, so ``total_time`` is the critical path of an ideal
parallel run (what a machine with one worker per block would take) even
when the blocks are executed one after another.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyTargetAtThisResolution, MaxIterExceeded, MaxOuterExceeded
from .grid import INTERFACE, Decomposition, Grid, _axis_labels
from .howard import bellman_residual, howard_solve
from .scheme import ProblemSpec, StencilTable, _interp_batch

log = logging.getLogger(__name__)

INIT_MODES = ("upper", "zero", "coarse")


@dataclass
class PhaConfig:
    """Outer-loop settings.

    ``init`` picks the starting iterate: ``"upper"`` fills the unknowns with
    the a priori bound ``max l / lambda + max |g|`` (iterates then decrease),
    ``"zero"`` with 0, ``"coarse"`` with a coarse-grid solution.
    """

    epsilon: float = 1e-10
    max_outer: int = 1000
    worker_count: int = 1
    init: str = "upper"
    coarse_points: int = 4
    max_inner: int = 1000
    nested_interface_splits: int | None = None
    record: bool = False

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class OuterStep:
    par_time_max: float
    par_iters_max: int
    seq_time: float
    seq_iters: int
    change: float
    inner_iters: int = 0


@dataclass
class SolveReport:
    """Result of a decomposed solve; ``values`` and ``policy`` cover every node."""

    values: np.ndarray
    policy: np.ndarray
    outer_iterations: int
    steps: list[OuterStep]
    converged: bool
    residual: float = float("nan")
    init_time: float = 0.0
    wall_time: float = 0.0
    history: list[np.ndarray] = field(default_factory=list, repr=False)
    beta: np.ndarray | None = None

    @property
    def par_time_max(self) -> float:
        return sum(s.par_time_max for s in self.steps)

    @property
    def par_iters_max(self) -> int:
        return max((s.par_iters_max for s in self.steps), default=0)

    @property
    def seq_time(self) -> float:
        return sum(s.seq_time for s in self.steps)

    @property
    def seq_iters(self) -> int:
        return max((s.seq_iters for s in self.steps), default=0)

    @property
    def inner_iterations(self) -> int:
        return sum(s.inner_iters for s in self.steps)

    @property
    def total_time(self) -> float:
        """Initialisation plus, per outer iteration, slowest block plus interface."""
        return self.init_time + self.par_time_max + self.seq_time


# A block solver takes (unknowns, frozen node values, warm state) and returns
# (block values, new warm state, iterations, inner iterations).
BlockSolver = Callable[[np.ndarray, np.ndarray, object], tuple]


def _howard_block(table: StencilTable, max_inner: int) -> BlockSolver:
    def solve(U, V, warm):
        if warm is None:
            res = howard_solve(table, U, V, v0=V[U], max_iter=max_inner)
        else:
            res = howard_solve(table, U, V, policy0=warm, max_iter=max_inner)
        if not res.converged:
            raise MaxIterExceeded(res)
        return res.values, res.policy, res.iterations, res.iterations

    return solve


def _timed(solve: BlockSolver, U, V, warm):
    t0 = time.perf_counter()
    out = solve(U, V, warm)
    return out, time.perf_counter() - t0


def interface_blocks(table: StencilTable, dec: Decomposition, cuts: int):
    """Split the interface into blocks separated by a thinner second interface.

    The second interface holds the nodes where two split planes cross plus
    ``cuts - 1`` cross-sections of every plane.  The remaining interface nodes
    are grouped into connected components of the stencil coupling graph, so
    distinct blocks never couple directly.
    """
    grid = dec.grid
    J = dec.interface
    if len(J) == 0:
        return [], J
    mi = grid.multi_index[J]
    on_plane = np.zeros((len(J), grid.dim), dtype=bool)
    on_cut = np.zeros((len(J), grid.dim), dtype=bool)
    for a in range(grid.dim):
        lab = _axis_labels(grid.counts[a], dec.splits[a], grid.periodic[a], a)
        on_plane[:, a] = lab[mi[:, a]] == INTERFACE
        if cuts > 1:
            try:
                cut_lab = _axis_labels(grid.counts[a], cuts, grid.periodic[a], a)
            except ValueError:
                continue
            on_cut[:, a] = cut_lab[mi[:, a]] == INTERFACE
    second = (on_plane.sum(axis=1) >= 2) | (on_cut & ~on_plane).any(axis=1)
    J2 = J[second]
    rest = J[~second]
    if len(rest) == 0:
        return [], J
    loc = np.full(grid.n_nodes, -1, dtype=np.int64)
    loc[rest] = np.arange(len(rest))
    c = table.cols[:, rest]
    v = table.vals[:, rest]
    lc = loc[c]
    keep = (lc >= 0) & (v != 0.0)
    rows = np.broadcast_to(np.arange(len(rest))[None, :, None], c.shape)[keep]
    adj = coo_matrix((np.ones(len(rows)), (rows, lc[keep])), shape=(len(rest), len(rest)))
    n_comp, labels = connected_components(adj, directed=False)
    blocks = [rest[labels == i] for i in range(n_comp)]
    return blocks, J2


def decomposed_loop(blocks: list[np.ndarray], interface: np.ndarray, V: np.ndarray,
                    solve_block: BlockSolver, solve_interface: BlockSolver, cfg: PhaConfig,
                    unknowns: np.ndarray, warm: np.ndarray | None = None):
    """Alternate block solves and interface solves until the iterate settles.

    ``V`` (a node vector) is updated in place.  ``warm`` is a per-node array
    of warm-start states (policies), also updated in place.  Returns
    ``(steps, converged, history)``.
    """
    steps: list[OuterStep] = []
    history = [V[unknowns].copy()] if cfg.record else []
    has_warm = warm is not None and (warm[unknowns] >= 0).all()
    pool = ThreadPoolExecutor(cfg.worker_count) if cfg.worker_count > 1 and len(blocks) > 1 else None
    try:
        for k in range(cfg.max_outer):
            before = V[unknowns].copy()
            snapshot = V.copy()
            snapshot.setflags(write=False)
            states = [warm[B] if has_warm else None for B in blocks]
            if pool is None:
                results = [_timed(solve_block, B, snapshot, s) for B, s in zip(blocks, states)]
            else:
                groups = [list(range(w, len(blocks), cfg.worker_count)) for w in range(cfg.worker_count)]

                def run(group):
                    return [(i, _timed(solve_block, blocks[i], snapshot, states[i])) for i in group]

                futures = [pool.submit(run, g) for g in groups if g]
                results = [None] * len(blocks)
                for fut in futures:
                    for i, r in fut.result():
                        results[i] = r
            par_time = 0.0
            par_iters = 0
            inner = 0
            for B, ((vals, state, iters, inn), dt) in zip(blocks, results):
                V[B] = vals
                if warm is not None:
                    warm[B] = state
                par_time = max(par_time, dt)
                par_iters = max(par_iters, iters)
                inner += inn
            if cfg.record:
                history.append(V[unknowns].copy())
            seq_time, seq_iters = 0.0, 0
            if len(interface):
                state = warm[interface] if has_warm else None
                (vals, state, seq_iters, inn), seq_time = _timed(solve_interface, interface, V, state)
                V[interface] = vals
                if warm is not None:
                    warm[interface] = state
                inner += inn
                if cfg.record:
                    history.append(V[unknowns].copy())
            has_warm = warm is not None
            change = float(np.abs(V[unknowns] - before).max()) if len(unknowns) else 0.0
            steps.append(OuterStep(par_time, par_iters, seq_time, seq_iters, change, inner))
            log.debug("outer %d: change %.3e", k + 1, change)
            if change <= cfg.epsilon or len(interface) == 0:
                return steps, True, history
    finally:
        if pool is not None:
            pool.shutdown()
    return steps, False, history


def _nested_interface_solver(table, dec, cfg, make_block: Callable[[], BlockSolver]) -> BlockSolver:
    sub_blocks, J2 = interface_blocks(table, dec, cfg.nested_interface_splits)
    inner_cfg = PhaConfig(
        epsilon=cfg.epsilon / 10, max_outer=cfg.max_outer, worker_count=cfg.worker_count,
        max_inner=cfg.max_inner,
    )
    block = make_block()

    def solve(U, V, warm):
        W = V.copy()
        w = np.full(len(V), -1, dtype=np.int64)
        if warm is not None:
            w[U] = warm
        steps, ok, _ = decomposed_loop(sub_blocks, J2, W, block, block, inner_cfg, U, w)
        if not ok:
            raise MaxOuterExceeded(SolveReport(W, w, len(steps), steps, False))
        its = sum(s.par_iters_max + s.seq_iters for s in steps)
        return W[U], w[U], its, sum(s.inner_iters for s in steps)

    return solve


def coarse_init(spec: ProblemSpec, points_per_axis: int = 4, solve: Callable | None = None):
    """Solve on a ``points_per_axis**d`` grid and interpolate to ``spec.grid``.

    If the target holds no node of that grid, the count is raised until it
    does.  Returns ``(node values, seconds spent)``.  ``solve`` maps a problem on the
    coarse grid to a node vector; by default classic Howard is used.
    """
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be >= 2")
    t0 = time.perf_counter()
    fine = spec.grid
    # A small target may contain no coarse node; refine until one does.
    n = points_per_axis
    while True:
        counts = tuple(min(n, c) for c in fine.counts)
        if counts == fine.counts:
            coarse_spec = spec
            break
        coarse_spec = spec.with_grid(Grid.from_counts(fine.lo, fine.hi, counts, fine.periodic))
        try:
            coarse_spec.table
            break
        except EmptyTargetAtThisResolution:
            n += 1
    cg = coarse_spec.grid
    if solve is None:
        def solve(p):
            V = p.initial_values()
            if len(cg.interior):
                res = howard_solve(p)
                V[res.unknowns] = res.values
            return V
    Vc = solve(coarse_spec)
    if coarse_spec is spec:
        V = Vc.copy()
    else:
        cols, w = _interp_batch(cg, fine.coords)
        V = (w * Vc[cols]).sum(axis=1)
    V[fine.dirichlet] = spec.boundary_values()[fine.dirichlet]
    return V, time.perf_counter() - t0


def upper_bound(spec: ProblemSpec) -> float:
    """A priori bound ``max |l| / lambda + max |g|`` on the discrete solution."""
    x = spec.grid.coords
    lmax = max(float(np.abs(spec.cost(x, a)).max()) for a in spec.controls)
    gmax = float(np.abs(spec.g(x[spec.grid.dirichlet])).max(initial=0.0))
    return lmax / spec.discount + gmax


def initial_iterate(spec: ProblemSpec, cfg: PhaConfig, v0=None, coarse_solve=None):
    """Starting node vector for the outer loop and the time spent building it."""
    grid = spec.grid
    U = grid.interior
    if v0 is not None:
        v0 = np.asarray(v0, dtype=float)
        V = spec.initial_values(0.0)
        V[U] = v0[U] if v0.shape == (grid.n_nodes,) else v0
        return V, 0.0
    if cfg.init == "coarse":
        return coarse_init(spec, cfg.coarse_points, solve=coarse_solve)
    if cfg.init == "upper":
        return spec.initial_values(upper_bound(spec)), 0.0
    return spec.initial_values(0.0), 0.0


def pha_solve(spec: ProblemSpec, dec: Decomposition, cfg: PhaConfig | None = None,
              v0: np.ndarray | None = None) -> SolveReport:
    """Parallel Howard's algorithm on the decomposition ``dec``.

    ``v0`` (a node vector, or values on the unknowns) overrides ``cfg.init``.

    Raises:
        MaxOuterExceeded: when ``cfg.max_outer`` is reached; carries the report.
    """
    cfg = cfg or PhaConfig()
    if dec.grid is not spec.grid and dec.grid.counts != spec.grid.counts:
        raise ValueError("decomposition was built on a different grid")
    t_start = time.perf_counter()
    table = spec.table
    grid = spec.grid
    U = grid.interior
    V, init_time = initial_iterate(spec, cfg, v0)
    warm = np.full(grid.n_nodes, -1, dtype=np.int64)
    solve_block = _howard_block(table, cfg.max_inner)
    if cfg.nested_interface_splits:
        solve_interface = _nested_interface_solver(table, dec, cfg, lambda: _howard_block(table, cfg.max_inner))
    else:
        solve_interface = solve_block
    steps, ok, history = decomposed_loop(dec.subdomains, dec.interface, V, solve_block, solve_interface,
                                         cfg, U, warm)
    res = bellman_residual(table, U, V[U], V)
    report = SolveReport(
        V, warm, len(steps), steps, ok, float(np.abs(res).max()) if len(U) else 0.0,
        init_time, time.perf_counter() - t_start, history,
    )
    if not ok:
        raise MaxOuterExceeded(report)
    return report


@dataclass
class MonotoneReport:
    direction: str
    monotone: bool
    bounded: bool
    n_iterates: int
    worst_step: float
    worst_bound: float

    @property
    def ok(self) -> bool:
        return self.monotone and self.bounded


def monotone_trajectory_check(spec: ProblemSpec, dec: Decomposition, v_star: np.ndarray,
                              v0: np.ndarray | None = None, cfg: PhaConfig | None = None,
                              step_tol: float = 1e-12, bound_tol: float = 1e-10) -> MonotoneReport:
    """Rerun the decomposed solve from ``v0`` and check every half-step is ordered.

    ``v0`` defaults to zero on the unknowns.  From below ``v_star`` the
    iterates must not decrease and must stay below ``v_star + bound_tol``;
    from above, the mirror image.
    """
    grid = spec.grid
    U = grid.interior
    v_star = np.asarray(v_star, dtype=float)
    vs = v_star[U] if v_star.shape == (grid.n_nodes,) else v_star
    if v0 is None:
        v0 = np.zeros(len(U))
    v0 = np.asarray(v0, dtype=float)
    v0u = v0[U] if v0.shape == (grid.n_nodes,) else v0
    cfg = PhaConfig(**{**(cfg.__dict__ if cfg else {}), "record": True})
    report = pha_solve(spec, dec, cfg, v0=v0u)
    its = report.history
    below = bool(np.all(v0u <= vs))
    if below:
        steps = [float((a - b).max()) for a, b in zip(its[:-1], its[1:])]
        bounds = [float((it - vs).max()) for it in its]
        direction = "non-decreasing"
    else:
        steps = [float((b - a).max()) for a, b in zip(its[:-1], its[1:])]
        bounds = [float((vs - it).max()) for it in its]
        direction = "non-increasing"
    worst_step = max(steps, default=0.0)
    worst_bound = max(bounds, default=0.0)
    return MonotoneReport(direction, worst_step <= step_tol, worst_bound <= bound_tol, len(its),
                          worst_step, worst_bound)
