"""Command-line front door.

Exit codes: 0 success, 1 runtime failure (diagnostics written to the
output directory), 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .config import EXPERIMENTS, load_config, merge_config
from .errors import ConfigError
from .experiments import run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mkvlab",
        description="Simulation and verification lab for McKean-Vlasov SDEs",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("runs") / name, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="override worker count")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else merge_config({})
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            user = cfg.copy()
            user.update(overrides)
            cfg = merge_config(user)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(args.experiment, cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        args.out.mkdir(parents=True, exist_ok=True)
        diag = args.out / "error_diagnostics.txt"
        diag.write_text(traceback.format_exc(), encoding="utf-8")
        print(f"runtime failure: {exc} (diagnostics in {diag})", file=sys.stderr)
        return 1
    print(
        f"{args.experiment}: wrote {len(manifest.outputs)} files to {args.out} "
        f"in {manifest.wall_clock_seconds:.2f}s (config {manifest.config_hash[:12]})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
