"""Command-line entry point mapping subcommands onto pipeline stages.

Exit codes: 0 success, 2 usage (argparse), 3 invalid configuration,
4 missing input file, 1 anything else (including a held directory lock).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline as pl

_STAGE_HELP = {
    "vocab-build": "derive the wordpiece inventory from the clean training corpus",
    "gen-data": "generate corpora and corrupted/clean parallel pairs",
    "lm-fit": "fit the word n-gram model on the clean training corpus",
    "train": "train the corrector on the selected pair variant",
    "correct": "apply the trained corrector to the held-out pairs",
    "decode": "run lattice beam search with shallow fusion over the held-out corpus",
    "eval": "report corpus WER for a pairs file",
    "ablate": "train every data variant and initialization cell, emit report tables",
    "demo": "run the whole pipeline end to end",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="postasr",
        description="Corrupted-transcript post-processing: data generation, "
                    "corrector training, fused decoding, and WER reports.")
    parser.add_argument("--version", action="version", version=f"postasr {pl.VERSION}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")
    for name in pl.SUBCOMMANDS:
        sp = sub.add_parser(name, help=_STAGE_HELP[name], description=_STAGE_HELP[name])
        sp.add_argument("--config", metavar="FILE",
                        help="JSON config with per-stage sections; flags override it")
        sp.add_argument("--seed", type=int, default=None, help="master random seed")
        sp.add_argument("--scale", choices=sorted(pl.SCALE_PRESETS), default="small",
                        help="preset workload size (default: small)")
        sp.add_argument("--out-dir", default="out", metavar="DIR",
                        help="artifact directory (default: ./out)")
        sp.add_argument("--json", action="store_true",
                        help="print the stage summary as one JSON object")
    return parser


def _print_summary(name: str, summary: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(summary, sort_keys=True))
        return
    if name == "eval":
        print(f"WER {summary['wer']:.2f}")
    for key, value in summary.items():
        if name == "eval" and key == "wer":
            continue
        print(f"{key} {value}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = pl.load_config_file(args.config) if args.config else None
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = pl.effective_config(args.scale, file_cfg, overrides)
        summary = pl.run_stage(args.subcommand, cfg, args.out_dir)
    except pl.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except pl.MissingInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except pl.LockError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    _print_summary(args.subcommand, summary, args.json)
    return 0


if __name__ == "__main__":
    sys.exit(main())
