"""Command line front end.

Subcommands mirror the experiment modes:

    lerouxgas simulate    --config cfg.txt [--seed S] [--out DIR] ...
    lerouxgas pde         ...
    lerouxgas sweep       ...
    lerouxgas spectral    ...
    lerouxgas lemma-check ...
    lerouxgas diagnose    ...

Flags override config-file keys; every run writes a manifest with the fully
resolved configuration, per-replica seeds and output checksums, so re-running
a manifest's config reproduces the CSV outputs byte for byte.
"""

from __future__ import annotations

import argparse
import sys

from .config import MODES, parse_config_file, validate_config
from .harness import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lerouxgas", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--replicas", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--n", help="comma separated system sizes")
        p.add_argument("--beta", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--profile")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    raw = parse_config_file(args.config) if args.config else {}
    raw["mode"] = args.mode
    for key in ("seed", "out", "replicas", "threads", "n", "beta", "sigma", "T", "profile"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    cfg = validate_config(raw)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    outdir = run(cfg)
    print(f"outputs written to {outdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
