"""Built-in test problems, target and obstacle transformations, exact solutions."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptyTargetAtThisResolution, UnknownProblem
from .grid import Grid, build_grid
from .scheme import ProblemSpec, StencilTable, replace_rows

PROBLEMS = ("eikonal1d", "eikonal2d", "eikonal3d", "zermelo", "dubins", "pursuit_evasion")

ZERMELO_TARGET_RADIUS = 0.005
CAPTURE_RADIUS = 0.15
DUBINS_DISCOUNT = 1e-6
OBSTACLE_RADIUS = 0.25
OBSTACLE_OFFSET = 0.2


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Set of nodes where the value is pinned to ``value``."""

    contains: Callable[[np.ndarray], np.ndarray]
    value: float = 0.0

    def mask(self, grid: Grid) -> np.ndarray:
        m = np.asarray(self.contains(grid.coords), dtype=bool) & ~grid.dirichlet
        if not m.any():
            raise EmptyTargetAtThisResolution(f"no grid node lies in the target for h={grid.h}")
        return m


def ball_target(center, radius: float, axes=None, value: float = 0.0) -> TargetSpec:
    """Closed ball (over ``axes``, default all) around ``center``."""
    center = np.asarray(center, dtype=float)

    def contains(x):
        xs = x if axes is None else x[:, list(axes)]
        return np.linalg.norm(xs - center, axis=1) <= radius * (1 + 1e-9) + 1e-12

    return TargetSpec(contains, value)


@dataclass(frozen=True, eq=False)
class ObstacleSpec:
    """Obstacle values ``W`` sampled at every grid node; the solution satisfies ``V <= W``."""

    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("obstacle values must be finite")
        object.__setattr__(self, "values", w)


def disk_obstacle(grid: Grid, center, radius: float, offset: float = 0.2, axes=(0, 1)) -> ObstacleSpec:
    """``W = offset + signed distance to a disk`` (negative inside the disk)."""
    xs = grid.coords[:, list(axes)]
    sd = np.linalg.norm(xs - np.asarray(center, dtype=float), axis=1) - radius
    return ObstacleSpec(offset + sd)


def apply_target(table: StencilTable, target: TargetSpec) -> StencilTable:
    """Replace the target rows by identity rows with right-hand side ``target.value``."""
    return replace_rows(table, target.mask(table.grid), target.value)


def apply_obstacle(spec: ProblemSpec, obstacle: ObstacleSpec) -> ProblemSpec:
    """Extend the controls to ``A x {0, 1}``; the extra bit switches a row to ``V_i = W_i``.

    Control ``2k`` of the result is control ``k`` of ``spec``, control
    ``2k + 1`` the stopping row, so greedy improvement over the doubled set
    solves ``max(max_a (B(a) V - c(a)), V - W) = 0``.
    """
    if np.shape(obstacle.values) != (spec.grid.n_nodes,):
        raise ValueError("obstacle values must cover every grid node")
    return dataclasses.replace(spec, obstacle=obstacle)


def analytic_eikonal(x, lo, hi) -> np.ndarray | float:
    """``1 - exp(-dist(x, boundary))`` for the box ``[lo, hi]``."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    dist = np.minimum(x - lo, hi - x).min(axis=-1)
    return 1.0 - np.exp(-np.maximum(dist, 0.0))


def oracle_values(spec) -> np.ndarray | None:
    """Exact solution at every node when one is known, else ``None``."""
    if spec.name.startswith("eikonal") and getattr(spec, "obstacle", None) is None:
        return analytic_eikonal(spec.grid.coords, spec.grid.lo, spec.grid.hi)
    return None


def _tidy(a: np.ndarray) -> np.ndarray:
    return np.where(np.abs(a) < 1e-14, 0.0, a)


def circle_controls(n: int) -> np.ndarray:
    """``n`` unit vectors at angles ``2 pi k / n``."""
    t = 2 * np.pi * np.arange(n) / n
    return _tidy(np.stack([np.cos(t), np.sin(t)], axis=1))


def sphere_controls(n: int) -> np.ndarray:
    """Unit vectors in 3D: the 26 lattice directions for ``n == 26``, else a Fibonacci set."""
    if n == 26:
        d = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1) if (i, j, k) != (0, 0, 0)], float)
        return d / np.linalg.norm(d, axis=1, keepdims=True)
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z**2)
    phi = np.pi * (1 + 5**0.5) * i
    return _tidy(np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1))


def _unit_cost(x, a):
    return 1.0


def _zero(x):
    return 0.0


def _drift(x, a):
    return np.broadcast_to(a, x.shape)


def _penalty(value):
    def g(x):
        return value

    return g


def builtin_problem(name: str, dx: float, control_count: int | None = None, scheme: str | None = None,
                    obstacle: bool = False, **params):
    """Construct one of the catalogue problems at spacing ``dx``.

    ``pursuit_evasion`` returns a :class:`~parhoward.maxmin.GameSpec`, the
    others a :class:`~parhoward.scheme.ProblemSpec`.

    Args:
        obstacle: add the disk obstacle ``W = 0.2 + signed distance`` to the
            disk of radius 0.25 at the origin (first two coordinates).
        params: ``speed`` (Dubins car speed, default 1); ``obstacle_radius``,
            ``obstacle_offset``.
    """
    spec = _builtin(name, dx, control_count, scheme, params)
    if obstacle:
        if name == "pursuit_evasion":
            raise ValueError("the obstacle extension applies to one-player problems only")
        if spec.grid.dim < 2:
            raise ValueError("the disk obstacle needs at least two dimensions")
        W = disk_obstacle(spec.grid, (0.0, 0.0), params.get("obstacle_radius", OBSTACLE_RADIUS),
                          params.get("obstacle_offset", OBSTACLE_OFFSET))
        spec = apply_obstacle(spec, W)
    return spec


def _builtin(name, dx, control_count, scheme, params):
    if name == "eikonal1d":
        n = control_count or 2
        grid = build_grid([-1.0], [1.0], [dx])
        controls = np.linspace(-1.0, 1.0, n)[:, None]
        return ProblemSpec(grid, _drift, _unit_cost, 1.0, _zero, controls, scheme or "upwind", name=name)
    if name == "eikonal2d":
        grid = build_grid([-1.0, -1.0], [1.0, 1.0], [dx, dx])
        controls = circle_controls(control_count or 32)
        return ProblemSpec(grid, _drift, _unit_cost, 1.0, _zero, controls, scheme or "upwind", name=name)
    if name == "eikonal3d":
        grid = build_grid([-1.0] * 3, [1.0] * 3, [dx] * 3)
        controls = sphere_controls(control_count or 26)
        return ProblemSpec(grid, _drift, _unit_cost, 1.0, _zero, controls, scheme or "upwind", name=name)
    if name == "zermelo":
        grid = build_grid([-1.0, -1.0], [1.0, 1.0], [dx, dx])
        lam = 1.0

        def zermelo_f(x, a):
            out = np.empty_like(x)
            out[:, 0] = a[0] + 1.0 - x[:, 1] ** 2
            out[:, 1] = a[1]
            return out

        return ProblemSpec(
            grid, zermelo_f, _unit_cost, lam, _penalty(10.0 / lam * 1.0),
            circle_controls(control_count or 32), scheme or "upwind",
            target=ball_target([0.0, 0.0], ZERMELO_TARGET_RADIUS), name=name,
        )
    if name == "dubins":
        c = float(params.get("speed", 1.0))
        grid = build_grid([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], [dx, dx, dx], periodic=(False, False, True))

        def dubins_f(x, a):
            out = np.empty_like(x)
            out[:, 0] = c * np.cos(np.pi * x[:, 2])
            out[:, 1] = c * np.sin(np.pi * x[:, 2])
            out[:, 2] = a[0]
            return out

        controls = np.linspace(-1.0, 1.0, control_count or 8)[:, None]
        return ProblemSpec(
            grid, dubins_f, _unit_cost, DUBINS_DISCOUNT, _zero, controls, scheme or "semilagrangian",
            name=name, params={"speed": c},
        )
    if name == "pursuit_evasion":
        from .maxmin import GameSpec

        grid = build_grid([-1.0, -1.0], [1.0, 1.0], [dx, dx])
        ctl = circle_controls(control_count or 8)

        def pe_f(x, a, b):
            return np.broadcast_to(a / 2.0 - b, x.shape)

        return GameSpec(
            grid, pe_f, lambda x, a, b: 1.0, 1.0, _penalty(10.0), ctl, ctl, scheme or "upwind",
            target=ball_target([0.0, 0.0], CAPTURE_RADIUS), name=name,
        )
    raise UnknownProblem(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}")
