"""Command-line front end: ``parhoward {solve,bench,sweep,dump}``.

Every verb accepts ``--config FILE`` plus flags named after the config keys
(``--eps`` for ``solver.eps``, ``--dx`` for ``sweep.dx`` ...).  Flags
override values read from the file; ``--set KEY=VALUE`` reaches any key.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import (
    CONFIG_KEYS,
    ExperimentConfig,
    _classic,
    _expand_splits,
    _make_problem,
    apply_setting,
    dump_grid_function,
    emit_report,
    load_config,
    run_experiment,
)
from .errors import ConfigError, HowardError
from .grid import decompose
from .maxmin import maxmin_solve
from .pha import pha_solve
from .problems import oracle_values

# flag -> config key
FLAGS = {
    "problem": "problem.name",
    "controls": "problem.controls",
    "scheme": "problem.scheme",
    "obstacle": "problem.obstacle",
    "speed": "problem.speed",
    "algorithm": "solver.algorithm",
    "init": "solver.init",
    "eps": "solver.eps",
    "max_iter": "solver.max_iter",
    "max_outer": "solver.max_outer",
    "workers": "solver.workers",
    "coarse_points": "solver.coarse_points",
    "interface_splits": "solver.interface_splits",
    "dx": "sweep.dx",
    "splits": "sweep.splits",
    "csv": "output.csv",
    "text": "output.text",
    "dump": "output.dump",
    "format": "output.format",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value experiment file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help=f"set any config key ({', '.join(CONFIG_KEYS)})")
    for flag, key in FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, metavar="VALUE", help=f"sets {key}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging and assembly times")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parhoward", description="Howard and parallel Howard solvers for HJB equations.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in [
        ("solve", "solve one problem at the first dx/splits and print a summary"),
        ("bench", "run the experiment described by the config, emit a report"),
        ("sweep", "same as bench; intended for dx/splits given on the command line"),
        ("dump", "solve once and write the grid function to output.dump"),
    ]:
        _add_common(sub.add_parser(verb, help=text, description=text))
    return parser


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for flag, key in FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            apply_setting(cfg, key, value)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, value = item.split("=", 1)
        apply_setting(cfg, key.strip(), value)
    return cfg.validate()


def _write(data: bytes, path: str | None, out) -> None:
    if path:
        Path(path).write_bytes(data)
    else:
        out.write(data.decode())


def _solve_once(cfg: ExperimentConfig):
    if not cfg.dx:
        raise ConfigError("sweep.dx", "solve and dump need at least one spacing")
    spec = _make_problem(cfg, cfg.dx[0])
    if cfg.algorithm == "classic":
        V, its, dt = _classic(spec)
        return spec, V, {"iterations": its, "time_s": dt}
    dec = decompose(spec.grid, _expand_splits(cfg.splits[0], spec.grid.dim))
    solver = maxmin_solve if cfg.algorithm == "maxmin" else pha_solve
    rep = solver(spec, dec, cfg.pha_config())
    info = {
        "outer_iterations": rep.outer_iterations,
        "par_time_max_s": rep.par_time_max,
        "seq_time_s": rep.seq_time,
        "total_time_s": rep.total_time,
        "wall_time_s": rep.wall_time,
        "residual": rep.residual,
    }
    return spec, rep.values, info


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except (ConfigError, OSError) as exc:
        print(f"parhoward: config error: {exc}", file=sys.stderr)
        return 2

    if args.verb in ("bench", "sweep"):
        rows = run_experiment(cfg)
        if cfg.csv_path:
            _write(emit_report(rows, "csv"), cfg.csv_path, out)
        if cfg.text_path:
            _write(emit_report(rows, "aligned_text", args.verbose), cfg.text_path, out)
        if not (cfg.csv_path or cfg.text_path):
            _write(emit_report(rows, cfg.format, args.verbose), None, out)
        return 1 if any(r.error for r in rows) else 0

    try:
        spec, V, info = _solve_once(cfg)
    except (HowardError, ValueError) as exc:
        print(f"parhoward: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.verb == "dump":
        if not cfg.dump_path:
            print("parhoward: config error: output.dump: dump needs a path", file=sys.stderr)
            return 2
        try:
            dump_grid_function(spec.grid, V, cfg.dump_path)
        except OSError as exc:
            print(f"parhoward: {exc}", file=sys.stderr)
            return 1
        return 0
    oracle = oracle_values(spec)
    if oracle is not None:
        info["linf_error"] = float(np.abs(V - oracle).max())
    print(f"problem={cfg.problem} dx={cfg.dx[0]} algorithm={cfg.algorithm} nodes={spec.grid.n_nodes}", file=out)
    for k, v in info.items():
        print(f"{k}={v}", file=out)
    if cfg.dump_path:
        dump_grid_function(spec.grid, V, cfg.dump_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
