"""``spikegan run <config> [--seed N] [--out DIR] [--preset paper|desk]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import ConfigError, DatasetError, NumericError, UsageError
from .config import to_ini, load_config
from .experiments import RUNNERS, RunResult

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GRADCHECK = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikegan", description="Spiking GAN experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by an INI config")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--seed", type=int, default=None, help="override [experiment] seed")
    run.add_argument("--out", default=None, help="artifact directory")
    run.add_argument("--preset", choices=("paper", "desk"), default=None, help="parameter preset")
    run.add_argument("--resume", default=None, help="training-state checkpoint to continue from")
    return parser


def run_config(cfg, out: Path | None = None) -> RunResult:
    """Run a validated config; writes the resolved config to ``out/config.ini`` first."""
    out = Path(out or cfg.run.out or f"runs/{cfg.experiment}-seed{cfg.seed}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(to_ini(cfg))
    return RUNNERS[cfg.experiment](cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, preset=args.preset, seed=args.seed, out=args.out)
        if args.resume is not None:
            cfg.run = replace(cfg.run, resume=args.resume)
        result = run_config(cfg)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, DatasetError) as exc:
        print(f"path error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for key, value in result.summary.items():
        print(f"{key}: {value}")
    if result.exit_code == EXIT_GRADCHECK:
        print("gradient check failed", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
