"""Finite-kernel contraction pipeline and coupling ladder on the lazy 5-cycle walk."""

import sys
from pathlib import Path

from snsgap.cli import cli_main

KERNEL = Path(__file__).resolve().parent.parent / "configs" / "lazy5.csv"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--out" not in args:
        args += ["--out", "out/doeblin"]
    sys.exit(cli_main(["doeblin", "--kernel", str(KERNEL), *args]))
