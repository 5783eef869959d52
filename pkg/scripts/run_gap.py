"""Coupled-ensemble gap estimate at desk defaults (about 15 minutes on one core).

Extra arguments are passed through, e.g. ``--seed 3 --out out/gap``.
"""

import sys
from pathlib import Path

from snsgap.cli import cli_main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.cfg"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/gap"]
    sys.exit(cli_main(["gap", "--config", str(CONFIG), *args]))
