"""Regenerate the boundary-family, value-surface and PDE CSVs behind the figures.

    python scripts/reproduce_figures.py [out_dir]

Adds two decreasing curves started above G_inf to the default family.
"""

import sys
from pathlib import Path

from maxstop.cli import main
from maxstop.config import REFERENCE_CONFIG

out = Path(sys.argv[1] if len(sys.argv) > 1 else "figures_out")
out.mkdir(parents=True, exist_ok=True)
cfg = out / "figures.ini"
cfg.write_text(REFERENCE_CONFIG.replace("upper_starts =\n", "upper_starts = 0.5:0.6, 2.0:0.45\n"))

status = 0
for cmd in ("params", "boundary", "value", "pde"):
    status |= main([cmd, "--config", str(cfg), "--out", str(out)])
sys.exit(status)
