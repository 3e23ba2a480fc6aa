"""Run a bench sweep from a config file and print both report formats.

The same file works with the command line tool:
    parhoward sweep --config sweep.cfg --csv out.csv --text out.txt
"""

import sys
import tempfile
from pathlib import Path

from parhoward.bench import emit_report, load_config, run_experiment

CONFIG = """\
# eikonal 2D, decomposed solver, a few split choices
problem.name = eikonal2d
solver.algorithm = pha
solver.eps = 1e-10
solver.workers = 4
sweep.dx = 0.1, 0.05
sweep.splits = 2x2, 3x3, 4x4
"""

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "sweep.cfg"
    path.write_text(CONFIG)
    cfg = load_config(path)

rows = run_experiment(cfg)
sys.stdout.write(emit_report(rows, "aligned_text").decode())
print()
sys.stdout.write(emit_report(rows, "csv").decode())
