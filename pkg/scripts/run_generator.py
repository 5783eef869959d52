"""One-step generator residuals for three cylindrical observables.

Extra arguments are passed through, e.g. ``--seed 3 --out out/generator``.
"""

import sys
from pathlib import Path

from snsgap.cli import cli_main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.cfg"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/generator"]
    sys.exit(cli_main(["generator", "--config", str(CONFIG), *args]))
