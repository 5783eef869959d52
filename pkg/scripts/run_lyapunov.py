"""Exponential drift bound and the scalar oracle.

Extra arguments are passed through, e.g. ``--seed 3 --out out/lyapunov``.
"""

import sys
from pathlib import Path

from snsgap.cli import cli_main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.cfg"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/lyapunov"]
    sys.exit(cli_main(["lyapunov", "--config", str(CONFIG), *args]))
