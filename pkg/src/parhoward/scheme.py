"""Monotone discretisations of the discounted Bellman equation.

For a control ``a`` each unknown node ``i`` gets one row of a matrix
``B(a)`` and one entry of a vector ``c(a)``.  Two schemes are provided:

* ``"upwind"``: per-axis one-sided differences scaled by ``1/lambda``,
  diagonal ``1 + sum_k |f_k| / (h_k lambda)``, one off-diagonal
  ``-|f_k| / (h_k lambda)`` per axis towards the side ``f_k`` points to,
  right-hand side ``l / lambda``.
* ``"semilagrangian"``: foot ``y = x_i + tau f(x_i, a)``; the row is the
  identity row minus ``(1 - lambda tau)`` times the multilinear weights of
  ``y``, right-hand side ``tau l``.

In both cases ``B(a) V - c(a)`` at node ``i`` equals ``V_i`` minus the
one-step dynamic programming update, so the discrete value function solves
``max_a (B(a) V - c(a)) = 0``.  Couplings to nodes that are not unknowns
(Dirichlet data, or frozen values of another block) are moved into the
right-hand side.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import CflViolation, MissingFixedValue, PointOutsideDomain
from .grid import Grid

if TYPE_CHECKING:
    from .problems import ObstacleSpec, TargetSpec

SCHEMES = ("upwind", "semilagrangian")
_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of a steady first-order control problem on a grid.

    ``dynamics(x, a)`` and ``running_cost(x, a)`` take an ``(n, d)`` array of
    points and one control (a row of ``controls``); ``exit_cost(x)`` takes
    points only.  Scalars are broadcast.
    """

    grid: Grid
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    running_cost: Callable[[np.ndarray, np.ndarray], np.ndarray | float]
    discount: float
    exit_cost: Callable[[np.ndarray], np.ndarray | float]
    controls: np.ndarray
    scheme: str = "upwind"
    target: "TargetSpec | None" = None
    obstacle: "ObstacleSpec | None" = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        controls = np.asarray(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls[:, None]
        object.__setattr__(self, "controls", controls)
        if not self.discount > 0:
            raise ValueError(f"discount must be positive, got {self.discount}")
        if len(controls) < 1:
            raise ValueError("the control set is empty")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    def with_grid(self, grid: Grid) -> "ProblemSpec":
        """Same problem data on another grid (obstacle values are not carried over)."""
        return ProblemSpec(
            grid, self.dynamics, self.running_cost, self.discount, self.exit_cost,
            self.controls, self.scheme, self.target, None, self.name, dict(self.params),
        )

    @property
    def n_controls(self) -> int:
        """Number of controls of the assembled system (doubled by an obstacle)."""
        return self.table.n_controls

    def f(self, x: np.ndarray, a) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.dynamics(x, np.atleast_1d(a)), dtype=float), x.shape)

    def cost(self, x: np.ndarray, a) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.running_cost(x, np.atleast_1d(a)), dtype=float), x.shape[:1])

    def g(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.broadcast_to(np.asarray(self.exit_cost(x), dtype=float), x.shape[:1])

    @cached_property
    def max_speed(self) -> np.ndarray:
        """Per-axis bound of ``|f|`` over all nodes and controls."""
        x = self.grid.coords
        return np.max([np.abs(self.f(x, a)).max(axis=0) for a in self.controls], axis=0)

    @cached_property
    def time_step(self) -> float:
        """Semi-Lagrangian step: ``min h``, reduced so feet stay within one cell."""
        h = np.asarray(self.grid.h)
        speed = self.max_speed
        with np.errstate(divide="ignore"):
            tau = np.where(speed > 0, h / np.where(speed > 0, speed, 1.0), np.inf)
        return float(min(h.min(), tau.min()))

    def boundary_values(self) -> np.ndarray:
        """Node vector holding ``g`` on Dirichlet nodes and NaN elsewhere."""
        v = np.full(self.grid.n_nodes, np.nan)
        mask = self.grid.dirichlet
        v[mask] = self.g(self.grid.coords[mask])
        return v

    def initial_values(self, fill: float | np.ndarray = 0.0) -> np.ndarray:
        v = self.boundary_values()
        unknown = ~self.grid.dirichlet
        v[unknown] = np.broadcast_to(fill, v.shape)[unknown]
        return v

    @cached_property
    def table(self) -> "StencilTable":
        return build_table(self)


@dataclass
class SystemRow:
    node: int
    entries: list[tuple[int, float]]
    rhs: float

    def as_dict(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for j, c in self.entries:
            out[j] = out.get(j, 0.0) + c
        return out


@dataclass
class AssembledSystem:
    """``B(policy) V = c`` restricted to ``unknowns`` (positions in that order)."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    unknowns: np.ndarray
    policy: np.ndarray

    def rows(self) -> list[SystemRow]:
        m = self.matrix
        out = []
        for r, node in enumerate(self.unknowns):
            lo, hi = m.indptr[r], m.indptr[r + 1]
            entries = [(int(self.unknowns[j]), float(v)) for j, v in zip(m.indices[lo:hi], m.data[lo:hi])]
            out.append(SystemRow(int(node), entries, float(self.rhs[r])))
        return out


# -- interpolation -------------------------------------------------------------

def _locate(grid: Grid, points: np.ndarray):
    """Per-axis lower cell index and fractional position of each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    idx = np.empty(points.shape, dtype=np.int64)
    frac = np.empty(points.shape)
    for a in range(grid.dim):
        n = grid.counts[a]
        t = (points[:, a] - grid.lo[a]) / grid.h[a]
        if grid.periodic[a]:
            t = np.mod(t, n)
            i0 = np.floor(t).astype(np.int64)
            fr = t - i0
            up = fr > 1 - _SNAP
            i0 = np.where(up, i0 + 1, i0) % n
            fr = np.where(up | (fr < _SNAP), 0.0, fr)
        else:
            i0 = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
            fr = t - i0
            up = (fr > 1 - _SNAP) & (i0 < n - 2)
            i0 = np.where(up, i0 + 1, i0)
            fr = np.where(up | (np.abs(fr) < _SNAP), 0.0, fr)
            fr = np.where(np.abs(fr - 1) < _SNAP, 1.0, fr)
        idx[:, a] = i0
        frac[:, a] = fr
    return idx, frac


def _interp_batch(grid: Grid, points: np.ndarray):
    """Corner node indices and multilinear weights, shapes ``(n, 2**d)``."""
    idx, frac = _locate(grid, points)
    n = len(idx)
    corners = list(itertools.product((0, 1), repeat=grid.dim))
    cols = np.empty((n, len(corners)), dtype=np.int64)
    w = np.ones((n, len(corners)))
    for c, offs in enumerate(corners):
        multi = idx + np.asarray(offs)
        for a in range(grid.dim):
            if grid.periodic[a]:
                multi[:, a] %= grid.counts[a]
            w[:, c] *= frac[:, a] if offs[a] else 1.0 - frac[:, a]
        cols[:, c] = np.ravel_multi_index(tuple(multi.T), grid.counts)
    return cols, w


def interp_weights(grid: Grid, point) -> list[tuple[int, float]]:
    """Multilinear interpolation weights of ``point`` over its cell corners.

    Zero weights are dropped.  Raises :class:`PointOutsideDomain` if the point
    lies outside the closed box (periodic axes wrap).
    """
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape != (grid.dim,):
        raise ValueError(f"expected a point with {grid.dim} coordinates")
    for a in range(grid.dim):
        if grid.periodic[a]:
            continue
        eps = 1e-12 * grid.h[a]
        if not grid.lo[a] - eps <= point[a] <= grid.hi[a] + eps:
            raise PointOutsideDomain(f"point {point.tolist()} is outside the domain along axis {a}")
    cols, w = _interp_batch(grid, point[None, :])
    out: dict[int, float] = {}
    for j, wj in zip(cols[0], w[0]):
        if wj != 0.0:
            out[int(j)] = out.get(int(j), 0.0) + float(wj)
    return sorted(out.items())


def _clip_to_box(grid: Grid, points: np.ndarray) -> np.ndarray:
    points = np.array(points, dtype=float, copy=True)
    for a in range(grid.dim):
        if not grid.periodic[a]:
            np.clip(points[..., a], grid.lo[a], grid.hi[a], out=points[..., a])
    return points


# -- single rows -----------------------------------------------------------------

def _fold(spec: ProblemSpec, node: int, diag: float, offdiag: dict[int, float], rhs: float,
          boundary_values: Mapping[int, float] | np.ndarray | None) -> SystemRow:
    dirichlet = spec.grid.dirichlet
    entries = [(node, diag)]
    for j, coef in sorted(offdiag.items()):
        if coef == 0.0:
            continue
        if j == node:
            entries[0] = (node, entries[0][1] + coef)
        elif dirichlet[j]:
            gj = _lookup(boundary_values, j)
            if gj is None:
                gj = float(spec.g(spec.grid.coords[j])[0])
            rhs -= coef * gj
        else:
            entries.append((j, coef))
    return SystemRow(int(node), entries, float(rhs))


def _lookup(values, j):
    if values is None:
        return None
    if isinstance(values, Mapping):
        return values.get(j)
    v = float(values[j])
    return None if np.isnan(v) else v


def assemble_row_upwind(spec: ProblemSpec, node: int, control, boundary_values=None) -> SystemRow:
    """Upwind row of ``B(a)`` and entry of ``c(a)`` at an unknown node.

    Dirichlet neighbours are folded into the right-hand side using
    ``boundary_values`` (or ``g`` when a value is not supplied).
    """
    grid, lam = spec.grid, spec.discount
    x = grid.coords[node]
    fx = spec.f(x, control)[0]
    diag = 1.0
    offdiag: dict[int, float] = {}
    for a in range(grid.dim):
        if fx[a] == 0.0:
            continue
        k = abs(fx[a]) / (grid.h[a] * lam)
        diag += k
        j = int(grid.shift([node], a, 1 if fx[a] > 0 else -1)[0])
        offdiag[j] = offdiag.get(j, 0.0) - k
    rhs = float(spec.cost(x, control)[0]) / lam
    return _fold(spec, node, diag, offdiag, rhs, boundary_values)


def assemble_row_sl(spec: ProblemSpec, node: int, control, boundary_values=None) -> SystemRow:
    """Semi-Lagrangian row: identity minus ``beta`` times the foot's weights."""
    tau = spec.time_step
    beta = 1.0 - spec.discount * tau
    if beta <= 0.0:
        raise CflViolation(f"lambda * tau = {spec.discount * tau} must be < 1")
    grid = spec.grid
    x = grid.coords[node]
    foot = _clip_to_box(grid, x + tau * spec.f(x, control)[0])
    offdiag: dict[int, float] = {}
    for j, w in interp_weights(grid, foot):
        offdiag[j] = offdiag.get(j, 0.0) - beta * w
    rhs = tau * float(spec.cost(x, control)[0])
    return _fold(spec, node, 1.0, offdiag, rhs, boundary_values)


# -- vectorised tables -------------------------------------------------------

@dataclass(eq=False)
class StencilTable:
    """Rows of ``B(a)`` and ``c(a)`` for every control and every node.

    Row ``i`` of ``B(k)`` is ``diag[k, i]`` on the diagonal plus ``vals[k, i, s]``
    at columns ``cols[k, i, s]`` (columns may repeat and may include ``i``).
    Rows of Dirichlet nodes are identity rows with ``g`` on the right.
    """

    grid: Grid
    diag: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray

    @property
    def n_controls(self) -> int:
        return self.diag.shape[0]

    def copy(self) -> "StencilTable":
        return StencilTable(self.grid, self.diag.copy(), self.cols.copy(), self.vals.copy(), self.rhs.copy())

    def residuals(self, values: np.ndarray, nodes: np.ndarray, choices: np.ndarray | None = None) -> np.ndarray:
        """``(B(k) V - c(k))`` at ``nodes``; shape ``(K, n)`` or ``(C, n)`` with ``choices``."""
        nodes = np.asarray(nodes)
        if choices is None:
            d, c, v, r = self.diag[:, nodes], self.cols[:, nodes], self.vals[:, nodes], self.rhs[:, nodes]
        else:
            k = np.asarray(choices).T
            d, c, v, r = self.diag[k, nodes], self.cols[k, nodes], self.vals[k, nodes], self.rhs[k, nodes]
        return d * values[nodes] + np.einsum("...s,...s->...", v, values[c]) - r

    def assemble(self, unknowns: np.ndarray, policy: np.ndarray, fixed_values: np.ndarray) -> AssembledSystem:
        unknowns = np.asarray(unknowns, dtype=np.int64)
        policy = np.asarray(policy, dtype=np.int64)
        n = len(unknowns)
        d = self.diag[policy, unknowns]
        c = self.cols[policy, unknowns]
        v = self.vals[policy, unknowns]
        r = self.rhs[policy, unknowns].copy()
        loc = np.full(self.grid.n_nodes, -1, dtype=np.int64)
        loc[unknowns] = np.arange(n)
        lc = loc[c]
        inside = (lc >= 0) & (v != 0.0)
        outside = (lc < 0) & (v != 0.0)
        if outside.any():
            fv = fixed_values[c[outside]]
            bad = np.isnan(fv)
            if bad.any():
                raise MissingFixedValue(c[outside][np.argmax(bad)])
            contrib = np.zeros_like(v)
            contrib[outside] = v[outside] * fv
            r -= contrib.sum(axis=1)
        row_ids = np.broadcast_to(np.arange(n)[:, None], c.shape)
        rows = np.concatenate([np.arange(n), row_ids[inside]])
        colsl = np.concatenate([np.arange(n), lc[inside]])
        data = np.concatenate([d, v[inside]])
        mat = sp.csr_matrix((data, (rows, colsl)), shape=(n, n))
        mat.sum_duplicates()
        return AssembledSystem(mat, r, unknowns, policy)


def _upwind_arrays(spec: ProblemSpec, a, x: np.ndarray, nodes: np.ndarray):
    grid, lam = spec.grid, spec.discount
    fx = spec.f(x, a)
    h = np.asarray(grid.h)
    k = np.abs(fx) / (h * lam)
    diag = 1.0 + k.sum(axis=1)
    cols = np.empty((len(nodes), grid.dim), dtype=np.int64)
    for ax in range(grid.dim):
        step = np.where(fx[:, ax] > 0, 1, -1)
        nb = np.where(step > 0, grid.shift(nodes, ax, 1), grid.shift(nodes, ax, -1))
        cols[:, ax] = np.where(fx[:, ax] == 0.0, nodes, nb)
    return diag, cols, -k, spec.cost(x, a) / lam


def _sl_arrays(spec: ProblemSpec, a, x: np.ndarray, nodes: np.ndarray):
    tau = spec.time_step
    beta = 1.0 - spec.discount * tau
    if beta <= 0.0:
        raise CflViolation(f"lambda * tau = {spec.discount * tau} must be < 1")
    foot = _clip_to_box(spec.grid, x + tau * spec.f(x, a))
    cols, w = _interp_batch(spec.grid, foot)
    return np.ones(len(nodes)), cols, -beta * w, tau * spec.cost(x, a)


def build_table(spec: ProblemSpec) -> StencilTable:
    """Assemble rows for all controls and nodes, then apply target and obstacle."""
    grid = spec.grid
    nodes = grid.interior
    x = grid.coords[nodes]
    make = _upwind_arrays if spec.scheme == "upwind" else _sl_arrays
    width = grid.dim if spec.scheme == "upwind" else 2**grid.dim
    K, N = len(spec.controls), grid.n_nodes
    diag = np.ones((K, N))
    cols = np.broadcast_to(np.arange(N)[:, None], (N, width)).copy()
    cols = np.broadcast_to(cols, (K, N, width)).copy()
    vals = np.zeros((K, N, width))
    rhs = np.empty((K, N))
    gb = spec.g(grid.coords[grid.dirichlet])
    for k, a in enumerate(spec.controls):
        d, c, v, r = make(spec, a, x, nodes)
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(v)) and np.all(np.isfinite(r))):
            raise ValueError(f"dynamics or running cost is not finite for control {a}")
        diag[k, nodes], cols[k, nodes], vals[k, nodes], rhs[k, nodes] = d, c, v, r
        rhs[k, grid.dirichlet] = gb
    table = StencilTable(grid, diag, cols, vals, rhs)
    if spec.target is not None:
        table = replace_rows(table, spec.target.mask(grid), spec.target.value)
    if spec.obstacle is not None:
        table = add_obstacle_controls(table, spec.obstacle.values)
    return table


def replace_rows(table: StencilTable, mask: np.ndarray, value: float | np.ndarray) -> StencilTable:
    """Identity rows with right-hand side ``value`` at ``mask``, for every control."""
    out = table.copy()
    out.diag[:, mask] = 1.0
    out.vals[:, mask] = 0.0
    out.cols[:, mask] = np.flatnonzero(mask)[:, None]
    out.rhs[:, mask] = np.broadcast_to(value, out.rhs.shape[1:])[mask] if np.ndim(value) else value
    return out


def add_obstacle_controls(table: StencilTable, W: np.ndarray) -> StencilTable:
    """Double the control set: control ``2k`` is the original row, ``2k + 1`` the row ``V_i = W_i``."""
    W = np.asarray(W, dtype=float)
    K, N, S = table.vals.shape
    stop = replace_rows(table, ~table.grid.dirichlet, W)
    inter = lambda a, b: np.stack([a, b], axis=1).reshape((2 * K,) + a.shape[1:])
    return StencilTable(
        table.grid,
        inter(table.diag, stop.diag),
        inter(table.cols, stop.cols),
        inter(table.vals, stop.vals),
        inter(table.rhs, stop.rhs),
    )


# -- systems ----------------------------------------------------------------------

def node_values(spec: ProblemSpec, values=None) -> np.ndarray:
    """Normalise fixed values to a node vector (NaN where nothing is known).

    ``values`` may be ``None`` (Dirichlet data only), a mapping ``node -> value``
    or an array over all nodes.
    """
    if values is None:
        return spec.boundary_values()
    if isinstance(values, Mapping):
        v = np.full(spec.grid.n_nodes, np.nan)
        for j, val in values.items():
            v[int(j)] = val
        return v
    v = np.asarray(values, dtype=float)
    if v.shape != (spec.grid.n_nodes,):
        raise ValueError(f"expected {spec.grid.n_nodes} node values, got shape {v.shape}")
    return v


def assemble_system(spec: ProblemSpec, unknowns, policy, fixed_values=None) -> AssembledSystem:
    """Square system over ``unknowns`` for the given per-unknown control indices.

    Raises :class:`MissingFixedValue` if a coupled node outside ``unknowns``
    has no value.
    """
    unknowns = np.asarray(unknowns, dtype=np.int64)
    policy = np.broadcast_to(np.asarray(policy, dtype=np.int64), unknowns.shape)
    return spec.table.assemble(unknowns, policy, node_values(spec, fixed_values))
