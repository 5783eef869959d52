"""Galerkin truncation ladder n = 2, 4, 8, 12.

Extra arguments are passed through, e.g. ``--seed 3 --out out/galerkin``.
"""

import sys
from pathlib import Path

from snsgap.cli import cli_main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.cfg"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/galerkin"]
    sys.exit(cli_main(["galerkin", "--config", str(CONFIG), *args]))
