import logging

from lab_service.errors import ArgumentError
from lab_service.norms import (
    DerivedBN,
    DerivedCN,
    critical_index,
    format_space,
    is_invariant,
    norm,
    parse_space,
    time_weighted_norm,
)
from lab_service.paraproduct import eta_estimate, separation_constant
from lplab.utils import load_datum, parse_int_range

logger = logging.getLogger(__name__)


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("norm", parents=[common], help="evaluate one norm of a field")
    parser.add_argument("--time", type=float, help="time for cn/bn spaces")
    parser.set_defaults(handler=handle_norm)

    parser = subparsers.add_parser("eta-scan", parents=[common], help="measure the compatibility sequence η")
    parser.add_argument("--offsets", default="0:4", help="n values, a:b or a comma list")
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--k", type=int, help="high band; defaults to j_max")
    parser.add_argument("--ensemble", choices=("packet", "shell"), default="packet")
    parser.set_defaults(handler=handle_eta_scan)

    parser = subparsers.add_parser("separation", parents=[common], help="spectral separation constant")
    parser.add_argument("--k", type=int, required=True)
    parser.add_argument("--l", type=int, required=True)
    parser.add_argument("--trials", type=int, default=50)
    parser.set_defaults(handler=handle_separation)


def _space(config):
    if not config.space:
        raise ArgumentError("this command needs --space")
    return parse_space(config.space)


def handle_norm(args, config):
    spec = _space(config)
    field = load_datum(config, default="builtin:constant")
    if isinstance(spec, (DerivedCN, DerivedBN)) and args.time is not None:
        value = time_weighted_norm(field, args.time, spec)
    else:
        if args.time is not None:
            logger.warning("⚠️ --time only applies to cn and bn spaces; ignored")
        value = norm(field, spec)
    label = format_space(spec)
    logger.info(f"📏 ‖u0‖ in {label} = {value:.12g}")
    return {
        "space": label,
        "value": value,
        "time": args.time,
        "critical_index": critical_index(spec, config.dim),
        "invariant": is_invariant(spec, config.dim),
        "summary": f"{value:.12g}",
    }, 0


def handle_eta_scan(args, config):
    spec = _space(config)
    grid = config.grid()
    measurement = eta_estimate(
        spec,
        grid,
        offsets=parse_int_range(args.offsets),
        trials=args.trials,
        seed=config.seed,
        k=args.k,
        ensemble=args.ensemble,
    )
    if config.csv:
        measurement.to_csv(config.csv)
    slope = measurement.slope() if len(measurement.rows) >= 2 else None
    result = measurement.model_dump(mode="json")
    result["slope"] = slope
    result["summary"] = f"{measurement.space}: log2 slope {slope:.4f}" if slope is not None else measurement.space
    return result, 0


def handle_separation(args, config):
    spec = _space(config)
    value = separation_constant(spec, config.grid(), args.k, args.l, trials=args.trials, seed=config.seed)
    return {
        "space": format_space(spec),
        "k": args.k,
        "l": args.l,
        "trials": args.trials,
        "constant": value,
        "summary": f"separation constant {value:.6g}",
    }, 0
