"""Run every verification check on the reference configuration.

    python scripts/run_verify.py [out_dir] [--fast]

--fast disables the PDE and Monte-Carlo stages (seconds instead of about a minute).
"""

import sys
from pathlib import Path

from maxstop.cli import main
from maxstop.config import REFERENCE_CONFIG

args = [a for a in sys.argv[1:] if a != "--fast"]
out = Path(args[0] if args else "verify_out")
out.mkdir(parents=True, exist_ok=True)
text = REFERENCE_CONFIG
if "--fast" in sys.argv:
    # the reference file has one 'enabled = true' each, under [pde] and [mc]
    text = text.replace("enabled = true", "enabled = false")
cfg = out / "verify.ini"
cfg.write_text(text)
sys.exit(main(["verify", "--config", str(cfg), "--out", str(out)]))
