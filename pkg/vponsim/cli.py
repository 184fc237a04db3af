"""Command line: ``vponsim run`` and ``vponsim sweep``."""

import argparse
import logging
import sys
from pathlib import Path

from vponsim import __version__
from vponsim.config import EAST_WEST_MODES, POLICY_KINDS, SPLIT_KINDS
from vponsim.exceptions import GuardValidationError, SimulationError
from vponsim.log_config import configure_logging, get_logger
from vponsim.runner import run_scenario, sweep
from vponsim.scenario import FIG2_SERVING, OVERRIDES

logger = get_logger(__name__)

# CLI flag -> override name
RUN_FLAGS = {
    "seed": "seed",
    "duration": "duration",
    "policy": "policy",
    "slice_size": "slice-size",
    "erlang": "erlang",
    "east_west_mode": "east-west-mode",
    "split": "split",
    "serving": "serving",
}


def _csv_list(text: str) -> list[str]:
    values = [item.strip() for item in text.split(",") if item.strip()]
    expanded = []
    for item in values:
        # integer ranges such as 1..12
        if ".." in item:
            low, high = item.split("..", 1)
            expanded.extend(str(v) for v in range(int(low), int(high) + 1))
        else:
            expanded.append(item)
    return expanded


def _add_overrides(parser: argparse.ArgumentParser, seed: bool = True) -> None:
    if seed:
        parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--duration", type=float, help="simulated seconds after warmup")
    parser.add_argument("--policy", choices=[*POLICY_KINDS, "none"], help="offload policy")
    parser.add_argument("--slice-size", type=int, help="fig2 only: C-RAN ONUs in the slice")
    parser.add_argument("--erlang", type=float, help="constant offered load per RU")
    parser.add_argument("--east-west-mode", choices=EAST_WEST_MODES)
    parser.add_argument("--split", choices=SPLIT_KINDS)
    parser.add_argument("--serving", choices=FIG2_SERVING, help="fig2 only: serving OLT placement")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vponsim", description="TWDM-PON fronthaul vPON slicing simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one scenario and write its result bundle")
    run.add_argument("scenario", help="preset name (fig2, fig3, fig4) or YAML file")
    run.add_argument("--out", type=Path, default=Path("results"), help="bundle directory")
    _add_overrides(run)

    sweep_cmd = commands.add_parser("sweep", help="run a scenario over parameter values and seeds")
    sweep_cmd.add_argument("scenario", help="preset name (fig2, fig3, fig4) or YAML file")
    sweep_cmd.add_argument("--param", required=True, choices=[name for name in OVERRIDES if name != "seed"])
    sweep_cmd.add_argument("--values", required=True, type=_csv_list, help="comma list, ranges like 1..12")
    sweep_cmd.add_argument("--seeds", type=_csv_list, default=["1"], help="comma list of seeds")
    sweep_cmd.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    sweep_cmd.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    # base overrides shared by every sweep point
    _add_overrides(sweep_cmd, seed=False)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {name: getattr(args, flag) for flag, name in RUN_FLAGS.items() if getattr(args, flag, None) is not None}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    configure_logging(level)

    try:
        if args.command == "run":
            bundle = run_scenario(args.scenario, _overrides(args))
            bundle.write(args.out)
            stats = bundle.summary
            if stats.is_empty:
                print(f"{bundle.config.name}: no delivered frames")
            else:
                print(
                    f"{bundle.config.name}: {stats.count} frames, mean {stats.mean_us:.3f} us, "
                    f"p99 {stats.p99_us:.3f} us, {bundle.offloads} offload events"
                )
        else:
            rows = sweep(args.scenario, args.param, args.values, args.seeds, args.out, args.workers, _overrides(args))
            for row in rows:
                mean = "-" if row.mean_us is None else f"{row.mean_us:.3f}"
                print(f"{args.param}={row.value} seed={row.seed}: mean {mean} us")
    except GuardValidationError as exc:
        logger.error("%s", exc)
        return 1
    except (SimulationError, OSError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
