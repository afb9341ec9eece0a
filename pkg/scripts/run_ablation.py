#!/usr/bin/env python3
"""Data-variant and initialization ablations over an existing run directory.

Expects `gen-data` and `vocab-build` artifacts in --out-dir (run
scripts/run_demo.py or the individual subcommands first), then writes
table1.csv and table2.csv there.

    python scripts/run_ablation.py --out-dir runs/demo [--scale tiny]
"""

import sys

from postasr.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--scale" not in argv:
        argv = ["--scale", "tiny", *argv]
    sys.exit(main(["ablate", *argv]))
