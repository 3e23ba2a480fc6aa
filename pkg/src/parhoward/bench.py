"""Experiment configs, sweeps over grid spacing and splits, reports and grid dumps.

Config files are flat ``key = value`` lines with ``#`` comments and dotted
section keys, e.g.::

    problem.name = eikonal2d
    solver.algorithm = pha
    sweep.dx = 0.1, 0.05
    sweep.splits = 2x2, 3x3

A bare split count such as ``2`` applies to every axis.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, HowardError
from .grid import Grid, decompose
from .howard import howard_solve
from .maxmin import GameSpec, maxmin_howard, maxmin_solve
from .pha import INIT_MODES, PhaConfig, pha_solve
from .problems import PROBLEMS, builtin_problem, oracle_values
from .scheme import SCHEMES

log = logging.getLogger(__name__)

ALGORITHMS = ("classic", "pha", "maxmin")
FORMATS = ("csv", "aligned_text")

CSV_HEADER = (
    "dx", "splits", "classic_iters", "classic_time_s", "pha_outer_iters", "par_time_max_s",
    "par_iters_max", "seq_time_s", "seq_iters", "total_time_s", "linf_error",
)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def parse_splits(text: str) -> list[tuple[int, ...]]:
    """``"2, 3x3, 2x2x1"`` -> ``[(2,), (3, 3), (2, 2, 1)]``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = tuple(int(p) for p in item.lower().split("x"))
        if any(p < 1 for p in parts):
            raise ValueError(f"split counts must be >= 1, got {item!r}")
        out.append(parts)
    return out


def format_splits(splits) -> str:
    return "x".join(str(s) for s in splits)


@dataclass
class ExperimentConfig:
    problem: str = "eikonal1d"
    controls: int | None = None
    scheme: str | None = None
    obstacle: bool = False
    speed: float = 1.0
    algorithm: str = "pha"
    init: str = "upper"
    eps: float = 1e-10
    max_iter: int = 1000
    max_outer: int = 1000
    workers: int = 1
    coarse_points: int = 4
    interface_splits: int | None = None
    dx: list[float] = field(default_factory=list)
    splits: list[tuple[int, ...]] = field(default_factory=lambda: [(1,)])
    csv_path: str | None = None
    text_path: str | None = None
    dump_path: str | None = None
    format: str = "csv"

    def pha_config(self) -> PhaConfig:
        return PhaConfig(
            epsilon=self.eps, max_outer=self.max_outer, worker_count=self.workers, init=self.init,
            coarse_points=self.coarse_points, max_inner=self.max_iter,
            nested_interface_splits=self.interface_splits,
        )

    def validate(self) -> "ExperimentConfig":
        checks = [
            ("problem.name", self.problem in PROBLEMS, f"unknown problem, expected one of {PROBLEMS}"),
            ("problem.scheme", self.scheme is None or self.scheme in SCHEMES, f"expected one of {SCHEMES}"),
            ("problem.controls", self.controls is None or self.controls >= 1, "must be >= 1"),
            ("solver.algorithm", self.algorithm in ALGORITHMS, f"expected one of {ALGORITHMS}"),
            ("solver.init", self.init in INIT_MODES, f"expected one of {INIT_MODES}"),
            ("solver.eps", self.eps >= 0, "must be >= 0"),
            ("solver.max_iter", self.max_iter >= 1, "must be >= 1"),
            ("solver.max_outer", self.max_outer >= 1, "must be >= 1"),
            ("solver.workers", self.workers >= 1, "must be >= 1"),
            ("solver.coarse_points", self.coarse_points >= 2, "must be >= 2"),
            ("sweep.dx", all(d > 0 for d in self.dx), "spacings must be positive"),
            ("output.format", self.format in FORMATS, f"expected one of {FORMATS}"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        game = self.problem == "pursuit_evasion"
        if self.algorithm == "maxmin" and not game:
            raise ConfigError("solver.algorithm", "maxmin needs a two-player problem")
        if game and self.algorithm == "pha":
            raise ConfigError("solver.algorithm", "pursuit_evasion is solved with algorithm=maxmin")
        return self


# config key -> (attribute, parser)
_KEYS = {
    "problem.name": ("problem", str.strip),
    "problem.controls": ("controls", _opt_int),
    "problem.scheme": ("scheme", lambda t: t.strip() or None),
    "problem.obstacle": ("obstacle", _bool),
    "problem.speed": ("speed", float),
    "solver.algorithm": ("algorithm", str.strip),
    "solver.init": ("init", str.strip),
    "solver.eps": ("eps", float),
    "solver.max_iter": ("max_iter", int),
    "solver.max_outer": ("max_outer", int),
    "solver.workers": ("workers", int),
    "solver.coarse_points": ("coarse_points", int),
    "solver.interface_splits": ("interface_splits", _opt_int),
    "sweep.dx": ("dx", _floats),
    "sweep.splits": ("splits", parse_splits),
    "output.csv": ("csv_path", lambda t: t.strip() or None),
    "output.text": ("text_path", lambda t: t.strip() or None),
    "output.dump": ("dump_path", lambda t: t.strip() or None),
    "output.format": ("format", str.strip),
}

CONFIG_KEYS = tuple(_KEYS)


def apply_setting(cfg: ExperimentConfig, key: str, value: str) -> None:
    """Set one dotted key from its text form.

    Raises:
        ConfigError: unknown key or unparsable value; names the key.
    """
    if key not in _KEYS:
        raise ConfigError(key, "unknown key")
    attr, parse = _KEYS[key]
    try:
        setattr(cfg, attr, parse(value))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse config text; the result is not yet validated."""
    cfg = base or ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        apply_setting(cfg, key, value)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class ReportRow:
    """One ``(dx, splits)`` cell of a sweep; ``None`` marks a missing value."""

    dx: float
    splits: str
    classic_iters: int | None = None
    classic_time_s: float | None = None
    pha_outer_iters: int | None = None
    par_time_max_s: float | None = None
    par_iters_max: int | None = None
    seq_time_s: float | None = None
    seq_iters: int | None = None
    total_time_s: float | None = None
    linf_error: float | None = None
    error: str | None = field(default=None, compare=False)
    assembly_time_s: float | None = field(default=None, compare=False)


_INT_COLS = {"classic_iters", "pha_outer_iters", "par_iters_max", "seq_iters"}


def _make_problem(cfg: ExperimentConfig, dx: float):
    return builtin_problem(cfg.problem, dx, cfg.controls, cfg.scheme, obstacle=cfg.obstacle, speed=cfg.speed)


def _expand_splits(splits: tuple[int, ...], dim: int) -> tuple[int, ...]:
    if len(splits) == 1:
        return splits * dim
    if len(splits) != dim:
        raise ValueError(f"splits {format_splits(splits)} do not match a {dim}D grid")
    return splits


def _classic(spec):
    """Undecomposed solve; returns (node values, iterations, seconds)."""
    if isinstance(spec, GameSpec):
        table = spec.table
        V = spec.problem.initial_values(0.0)
        t0 = time.perf_counter()
        res = maxmin_howard(table, spec.n_a, spec.n_b, spec.grid.interior, V)
        dt = time.perf_counter() - t0
        V[res.unknowns] = res.values
        return V, res.inner_iterations, dt
    spec.table
    t0 = time.perf_counter()
    res = howard_solve(spec)
    dt = time.perf_counter() - t0
    V = spec.initial_values(0.0)
    V[res.unknowns] = res.values
    return V, res.iterations, dt


def run_experiment(cfg: ExperimentConfig) -> list[ReportRow]:
    """Run every ``(dx, splits)`` cell of the sweep.

    Solver failures are logged and recorded in ``ReportRow.error``; the row
    keeps whatever was measured before the failure.
    """
    cfg.validate()
    rows: list[ReportRow] = []
    pcfg = cfg.pha_config()
    for dx in cfg.dx:
        cells = [ReportRow(dx, format_splits(s)) for s in cfg.splits]
        rows.extend(cells)
        try:
            t0 = time.perf_counter()
            spec = _make_problem(cfg, dx)
            spec.table
            assembly = time.perf_counter() - t0
            V_ha, it_ha, t_ha = _classic(spec)
        except (HowardError, ValueError) as exc:
            log.error("dx=%g: %s", dx, exc)
            for row in cells:
                row.error = f"{type(exc).__name__}: {exc}"
            continue
        oracle = oracle_values(spec)
        for splits, row in zip(cfg.splits, cells):
            row.classic_iters, row.classic_time_s = it_ha, t_ha
            row.assembly_time_s = assembly
            if cfg.algorithm == "classic":
                if oracle is not None:
                    row.linf_error = float(np.abs(V_ha - oracle).max())
                continue
            try:
                dec = decompose(spec.grid, _expand_splits(splits, spec.grid.dim))
                if cfg.algorithm == "maxmin":
                    rep = maxmin_solve(spec, dec, pcfg)
                else:
                    rep = pha_solve(spec, dec, pcfg)
            except (HowardError, ValueError) as exc:
                log.error("dx=%g splits=%s: %s", dx, row.splits, exc)
                row.error = f"{type(exc).__name__}: {exc}"
                continue
            row.pha_outer_iters = rep.outer_iterations
            row.par_time_max_s = rep.par_time_max
            row.par_iters_max = rep.par_iters_max
            row.seq_time_s = rep.seq_time
            row.seq_iters = rep.seq_iters
            row.total_time_s = rep.total_time
            if oracle is not None:
                row.linf_error = float(np.abs(rep.values - oracle).max())
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows: list[ReportRow], format: str = "csv", verbose: bool = False) -> bytes:
    """Serialise rows as CSV (fixed header) or as an aligned text table.

    Missing values are empty fields.  ``verbose`` adds an assembly-time
    column and error notes to the text table only; the CSV layout is fixed.
    """
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_cell(getattr(r, c)) for c in CSV_HEADER])
        return buf.getvalue().encode()
    if format != "aligned_text":
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    header = list(CSV_HEADER) + (["assembly_time_s"] if verbose else [])
    table = [header]
    for r in rows:
        cells = []
        for c in header:
            v = getattr(r, c)
            if isinstance(v, float) and c != "dx":
                cells.append(f"{v:.4g}")
            else:
                cells.append(_cell(v) or "-")
        table.append(cells)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(wd) for cell, wd in zip(row, widths)) for row in table]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    for r in rows:
        if r.error:
            lines.append(f"! dx={r.dx} splits={r.splits}: {r.error}")
    return ("\n".join(lines) + "\n").encode()


def parse_report_csv(data: bytes | str) -> list[ReportRow]:
    """Inverse of ``emit_report(rows, "csv")``."""
    text = data.decode() if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = []
    for rec in reader:
        kw = {}
        for name, cell in zip(header, rec):
            if name == "splits":
                kw[name] = cell
            elif cell == "":
                kw[name] = None
            elif name in _INT_COLS:
                kw[name] = int(cell)
            else:
                kw[name] = float(cell)
        rows.append(ReportRow(**kw))
    return rows


def dump_grid_function(grid: Grid, values, path: str | Path) -> None:
    """Write ``coords... value`` per node in row-major order, 17 significant digits.

    The first line is ``# <d> <counts...> <lo...> <hi...>``.

    Raises:
        OSError: when the file cannot be written; the message names the path.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_nodes,):
        raise ValueError(f"expected {grid.n_nodes} values, got shape {values.shape}")
    head = [str(grid.dim)] + [str(n) for n in grid.counts] + [repr(v) for v in grid.lo + grid.hi]
    data = np.column_stack([grid.coords, values])
    try:
        with open(path, "w") as fh:
            fh.write("# " + " ".join(head) + "\n")
            np.savetxt(fh, data, fmt="%.17g", delimiter=" ")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write grid dump: {exc.strerror}", str(path)) from exc


def read_grid_function(path: str | Path) -> tuple[Grid, np.ndarray]:
    """Read a file written by :func:`dump_grid_function`."""
    with open(path) as fh:
        head = fh.readline().lstrip("#").split()
        d = int(head[0])
        counts = tuple(int(v) for v in head[1 : 1 + d])
        lo = tuple(float(v) for v in head[1 + d : 1 + 2 * d])
        hi = tuple(float(v) for v in head[1 + 2 * d : 1 + 3 * d])
        data = np.loadtxt(fh, ndmin=2)
    periodic = tuple(
        not math.isclose(data[:, a].max(), hi[a]) if len(data) else False for a in range(d)
    )
    return Grid(lo, hi, counts, periodic), data[:, d].copy()

