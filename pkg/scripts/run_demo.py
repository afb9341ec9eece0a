#!/usr/bin/env python3
"""End-to-end demo: all pipeline stages into one artifact directory.

Passes flags straight through to `postasr demo`; defaults to the tiny
scale so a laptop run finishes in minutes.

    python scripts/run_demo.py --out-dir runs/demo [--scale small] [--seed 1]
"""

import sys

from postasr.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--scale" not in argv:
        argv = ["--scale", "tiny", *argv]
    sys.exit(main(["demo", *argv]))
