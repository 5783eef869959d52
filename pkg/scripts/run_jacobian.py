"""Finite-difference quotients of the flow against the tangent flow.

Extra arguments are passed through, e.g. ``--seed 3 --out out/jacobian``.
"""

import sys
from pathlib import Path

from snsgap.cli import cli_main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.cfg"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/jacobian"]
    sys.exit(cli_main(["jacobian", "--config", str(CONFIG), *args]))
