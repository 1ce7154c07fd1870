import argparse
import logging
import sys
from typing import Dict, List, Optional

from lplab.dependencies import USAGE_EXIT, LabError, MarginError, set_thread_cap
from lplab.utils import RunConfig, write_report

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# flags that land in RunConfig; everything else is command specific
CONFIG_FLAGS = (
    "dim",
    "points",
    "box_l",
    "space",
    "symbol",
    "n_exp",
    "K",
    "tol",
    "max_iter",
    "quad_nodes",
    "time_refine",
    "probe_pairs",
    "allow_over_margin",
    "seed",
    "threads",
    "u0",
    "amplitude",
    "out",
    "csv",
    "field_out",
)


class UsageError(Exception):
    pass


class LabArgumentParser(argparse.ArgumentParser):
    """Usage problems raise instead of exiting, so run() can map them to status 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def common_options() -> argparse.ArgumentParser:
    common = LabArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON; flags override it")
    common.add_argument("--dim", type=int)
    common.add_argument("--points", type=int, help="grid points per axis")
    common.add_argument("--box-l", dest="box_l", type=float)
    common.add_argument("--space")
    common.add_argument("--symbol")
    common.add_argument("--N", dest="n_exp", type=int, help="decay exponent of the derived space")
    common.add_argument("--K", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--quad-nodes", dest="quad_nodes", type=int)
    common.add_argument("--time-refine", dest="time_refine", type=int)
    common.add_argument("--probe-pairs", dest="probe_pairs", type=int)
    common.add_argument("--allow-over-margin", dest="allow_over_margin", action="store_const", const=True)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--u0", help="builtin:<name> or an LPF1 file")
    common.add_argument("--amplitude", type=float)
    common.add_argument("--out", help="JSON report path")
    common.add_argument("--csv", help="CSV table path")
    common.add_argument("--field-out", dest="field_out", help="LPF1 dump path")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true")
    return common


def build_parser() -> LabArgumentParser:
    from lplab.commands import counterexample, decompose, microlocal, norms, selftest, solve

    parser = LabArgumentParser(prog="lplab", description="Littlewood–Paley and mild-solution laboratory")
    subparsers = parser.add_subparsers(dest="command", parser_class=LabArgumentParser)
    subparsers.required = True
    common = common_options()
    for module in (decompose, norms, solve, counterexample, microlocal, selftest):
        module.register(subparsers, common)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    return base.merged({name: getattr(args, name, None) for name in CONFIG_FLAGS})


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO)
    logging.getLogger().setLevel(level)


def _payload(command: str, config: RunConfig, result) -> Dict:
    return {"command": command, "config": config.model_dump(mode="json"), "result": result}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run one command, write its artifacts, return the process status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return USAGE_EXIT

    _configure_logging(args)
    command = args.command + (f" {args.verb}" if getattr(args, "verb", None) else "")
    config = None
    try:
        config = resolve_config(args)
        set_thread_cap(config.threads)
        logger.info(f"🚀 lplab {command} on {config.dim}-d grid N={config.points}, L={config.box_l}")
        result, status = args.handler(args, config)
    except MarginError as e:
        logger.error(f"❌ {e}")
        if e.report is not None and config is not None and config.out:
            write_report(config.out, _payload(command, config, e.report))
        return e.exit_code
    except LabError as e:
        logger.error(f"❌ {e}")
        return e.exit_code
    finally:
        set_thread_cap(None)

    if config.out:
        write_report(config.out, _payload(command, config, result))
    summary = result.get("summary") if isinstance(result, dict) else None
    if summary is not None:
        print(summary)
    if status == 0:
        logger.info(f"✅ lplab {command} finished")
    else:
        logger.warning(f"⚠️ lplab {command} finished with status {status}")
    return status


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
