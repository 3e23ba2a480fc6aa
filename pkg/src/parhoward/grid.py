"""Uniform tensor grids on boxes and their splitting into subdomains.

Nodes are numbered in row-major (C) order.  A node on the boundary of the
box carries Dirichlet data; every other node is an unknown of the discrete
problem.  An axis may be flagged periodic, in which case it has no boundary
nodes and neighbour lookups wrap around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionOutOfRange, NonConformingSpacing, TooManySplits

INTERFACE = -1
BOUNDARY = -2


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid over ``[lo, hi]`` (``[lo, hi)`` along periodic axes)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    counts: tuple[int, ...]
    periodic: tuple[bool, ...] = ()

    def __post_init__(self):
        d = len(self.lo)
        if d not in (1, 2, 3):
            raise DimensionOutOfRange(f"grid dimension must be 1, 2 or 3, got {d}")
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * d)
        if not (len(self.hi) == len(self.counts) == len(self.periodic) == d):
            raise ValueError("lo, hi, counts and periodic must have the same length")
        for a in range(d):
            if not self.lo[a] < self.hi[a]:
                raise ValueError(f"axis {a}: lo must be smaller than hi")
            if self.counts[a] < 2:
                raise ValueError(f"axis {a}: at least 2 nodes are required")

    @classmethod
    def from_counts(cls, lo, hi, counts, periodic=None) -> "Grid":
        lo = tuple(float(v) for v in lo)
        d = len(lo)
        return cls(
            lo,
            tuple(float(v) for v in hi),
            tuple(int(n) for n in counts),
            tuple(bool(p) for p in periodic) if periodic is not None else (False,) * d,
        )

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def n_nodes(self) -> int:
        return math.prod(self.counts)

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (n if per else n - 1)
            for lo, hi, n, per in zip(self.lo, self.hi, self.counts, self.periodic)
        )

    @cached_property
    def strides(self) -> tuple[int, ...]:
        s = [1] * self.dim
        for a in range(self.dim - 2, -1, -1):
            s[a] = s[a + 1] * self.counts[a + 1]
        return tuple(s)

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.lo[axis] + self.h[axis] * np.arange(self.counts[axis])

    @cached_property
    def multi_index(self) -> np.ndarray:
        """``(n_nodes, d)`` integer multi-indices of all nodes."""
        idx = np.indices(self.counts).reshape(self.dim, -1).T
        return np.ascontiguousarray(idx)

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_nodes, d)`` coordinates of all nodes."""
        lo = np.asarray(self.lo)
        h = np.asarray(self.h)
        return lo + self.multi_index * h

    @cached_property
    def dirichlet(self) -> np.ndarray:
        mask = np.zeros(self.counts, dtype=bool)
        for a in range(self.dim):
            if self.periodic[a]:
                continue
            sl = [slice(None)] * self.dim
            sl[a] = 0
            mask[tuple(sl)] = True
            sl[a] = -1
            mask[tuple(sl)] = True
        return mask.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        """Flat indices of the unknown (non-Dirichlet) nodes."""
        return np.flatnonzero(~self.dirichlet)

    @property
    def node_class(self) -> np.ndarray:
        return np.where(self.dirichlet, "dirichlet", "interior")

    def ravel(self, multi) -> np.ndarray | int:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.counts)

    def unravel(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.counts), axis=-1)

    def shift(self, flat, axis: int, step: int) -> np.ndarray:
        """Index of the neighbour ``step`` nodes away along ``axis``.

        Returns -1 where the neighbour falls off a non-periodic axis.
        """
        flat = np.asarray(flat)
        pos = (flat // self.strides[axis]) % self.counts[axis]
        new = pos + step
        n = self.counts[axis]
        if self.periodic[axis]:
            new = new % n
            return flat + (new - pos) * self.strides[axis]
        return np.where((new >= 0) & (new < n), flat + step * self.strides[axis], -1)

    def neighbors(self, flat: int, diagonal: bool = False) -> np.ndarray:
        """Grid neighbours of a node (axis neighbours, or the full 3^d block)."""
        if diagonal:
            out = np.array([flat])
            for a in range(self.dim):
                out = np.concatenate([self.shift(out, a, s) for s in (-1, 0, 1)])
                out = out[out >= 0]
            out = np.unique(out)
        else:
            out = np.unique(
                np.concatenate([self.shift([flat], a, s) for a in range(self.dim) for s in (-1, 1)])
            )
            out = out[out >= 0]
        return out[out != flat]


def build_grid(lo: Sequence[float], hi: Sequence[float], dx: Sequence[float], periodic=None) -> Grid:
    """Build the grid with spacing ``dx`` on the box ``[lo, hi]``.

    Raises:
        NonConformingSpacing: if ``dx`` does not tile an axis.
        DimensionOutOfRange: if the dimension is not 1, 2 or 3.
    """
    lo = tuple(float(v) for v in np.atleast_1d(lo))
    hi = tuple(float(v) for v in np.atleast_1d(hi))
    dx = tuple(float(v) for v in np.atleast_1d(dx))
    d = len(lo)
    if d not in (1, 2, 3):
        raise DimensionOutOfRange(f"grid dimension must be 1, 2 or 3, got {d}")
    if len(hi) != d or len(dx) != d:
        raise ValueError("lo, hi and dx must have the same length")
    periodic = tuple(bool(p) for p in periodic) if periodic is not None else (False,) * d
    counts = []
    for a in range(d):
        if not lo[a] < hi[a]:
            raise ValueError(f"axis {a}: lo must be smaller than hi")
        if dx[a] <= 0:
            raise ValueError(f"axis {a}: dx must be positive")
        cells = (hi[a] - lo[a]) / dx[a]
        if not math.isclose(cells, round(cells), rel_tol=1e-9, abs_tol=1e-9):
            raise NonConformingSpacing(
                f"axis {a}: dx={dx[a]} does not tile [{lo[a]}, {hi[a]}] ({cells} cells)"
            )
        counts.append(round(cells) + (0 if periodic[a] else 1))
        if counts[-1] < 3:
            raise ValueError(f"axis {a}: dx={dx[a]} leaves fewer than 3 nodes")
    return Grid(lo, hi, tuple(counts), periodic)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Partition of the unknown nodes into subdomain blocks and an interface.

    ``owner`` maps every node to its subdomain id, to ``INTERFACE`` (-1) or to
    ``BOUNDARY`` (-2) for Dirichlet nodes.
    """

    grid: Grid
    splits: tuple[int, ...]
    subdomains: list[np.ndarray]
    interface: np.ndarray
    owner: np.ndarray = field(repr=False)

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)


def _axis_labels(n: int, splits: int, periodic: bool, axis: int) -> np.ndarray:
    labels = np.full(n, BOUNDARY, dtype=np.int64)
    if periodic:
        first, m = 0, n
        n_interface = splits if splits > 1 else 0
    else:
        first, m = 1, n - 2
        n_interface = splits - 1
    free = m - n_interface
    base, extra = divmod(free, splits)
    if free < splits:
        raise TooManySplits(f"axis {axis}: {splits} splits leave an empty slab ({m} interior nodes)")
    pos = first
    for s in range(splits):
        width = base + (1 if s < extra else 0)
        labels[pos : pos + width] = s
        pos += width
        if s < n_interface:
            labels[pos] = INTERFACE
            pos += 1
    return labels


def decompose(grid: Grid, splits: Sequence[int]) -> Decomposition:
    """Split the unknowns into ``prod(splits)`` boxes separated by one-node planes.

    Slab widths are as equal as possible, earlier slabs taking the extra nodes.
    On a periodic axis with more than one split, a plane is also placed at the
    wrap-around so that the first and last slabs do not touch.
    """
    splits = tuple(int(s) for s in np.atleast_1d(splits))
    if len(splits) != grid.dim:
        raise ValueError(f"need one split count per axis, got {splits} for a {grid.dim}D grid")
    if any(s < 1 for s in splits):
        raise ValueError("split counts must be >= 1")
    labels = [_axis_labels(grid.counts[a], splits[a], grid.periodic[a], a) for a in range(grid.dim)]
    per_node = np.stack([labels[a][grid.multi_index[:, a]] for a in range(grid.dim)], axis=1)
    owner = np.full(grid.n_nodes, BOUNDARY, dtype=np.int64)
    is_bnd = (per_node == BOUNDARY).any(axis=1)
    is_int = ~is_bnd & (per_node == INTERFACE).any(axis=1)
    inside = ~is_bnd & ~is_int
    owner[is_int] = INTERFACE
    owner[inside] = np.ravel_multi_index(tuple(per_node[inside].T), splits)
    n_sub = math.prod(splits)
    subdomains = [np.flatnonzero(owner == i) for i in range(n_sub)]
    return Decomposition(grid, splits, subdomains, np.flatnonzero(owner == INTERFACE), owner)


def optimal_splits(n_total: int, d: int) -> int:
    """Smallest per-axis split count balancing interface and subdomain sizes.

    Returns the least ``N_s >= 2`` with ``(N_s**d * (N_s - 1) * d)**d >= n_total``.
    """
    if n_total < 2:
        raise ValueError("n_total must be at least 2")
    if d not in (1, 2, 3):
        raise DimensionOutOfRange(f"d must be 1, 2 or 3, got {d}")
    ns = 2
    while (ns**d * (ns - 1) * d) ** d < n_total:
        ns += 1
    return ns
