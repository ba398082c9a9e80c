"""Command-line front end: validate {generate|train|analyze|run-all}.

Flags override the JSON config file, which overrides the built-in defaults.
The exit code reports whether the pipeline completed — the verdict itself is
data (stdout + report.json), never an exit code.
"""

from __future__ import annotations

import argparse
import sys
from typing import Any

from .config import load_config_file, resolve_config
from .errors import MdpcheckError
from .pipeline import cmd_analyze, cmd_generate, cmd_run_all, cmd_train

_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "run-all": cmd_run_all,
}


def _parse_percentile(text: str) -> float | list[float]:
    """A single level, or a comma-separated per-feature list."""
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad percentile {text!r}: {e}") from e
    return parts[0] if len(parts) == 1 else parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="validate",
        description=(
            "Decide whether a designed MDP is a plausible RL target by "
            "training world-model ensembles on random-policy data and "
            "testing reward contribution and action sensitivity per feature."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "roll the train/eval datasets"),
        ("train", "train the original and baseline ensembles"),
        ("analyze", "compute statistics, verdict, and report artifacts"),
        ("run-all", "generate, train, and analyze with idempotent resume"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--env", type=int, choices=range(1, 8), metavar="1-7",
                       help="environment id")
        p.add_argument("--out", help="run directory for all artifacts")
        p.add_argument("--reduced", action="store_true", default=None,
                       help="use the reduced-scale profile")
        p.add_argument("--jobs", type=int, help="parallel training processes")
        p.add_argument("--percentile", type=_parse_percentile, metavar="X",
                       help="significance percentile, global or comma-separated per feature")
        p.add_argument("--seed", type=int, help="master seed for every derived stream")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict[str, Any] = {
        "env_id": args.env,
        "output_dir": args.out,
        "reduced_scale": args.reduced,
        "jobs": args.jobs,
        "percentile": args.percentile,
        "seed": args.seed,
    }
    try:
        file_data = load_config_file(args.config) if args.config else None
        cfg = resolve_config(file_data, overrides)
        _COMMANDS[args.command](cfg)
    except MdpcheckError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
