import logging
import math

from lab_service.duhamel import Trajectory
from lab_service.errors import ArgumentError
from lab_service.microlocal import (
    analytic_profile,
    convolution_stability,
    decay_check,
    density_function,
    dini_check,
    eta_from_density,
    eta_is_summable,
    profile_from_function,
)
from lab_service.point_sets import PointSet
from lab_service.solver import get_solver_service
from lplab.utils import load_datum, write_csv

logger = logging.getLogger(__name__)

ORACLES = ("point", "line", "plane", "linear", "inverse-log")


def register(subparsers, common) -> None:
    group = subparsers.add_parser("microlocal", help="density functions and decay near a closed set")
    verbs = group.add_subparsers(dest="verb", parser_class=type(group))
    verbs.required = True

    parser = verbs.add_parser("density", parents=[common], help="measure ε_S on the grid")
    parser.add_argument("--set", dest="point_set", required=True, help="point(..), line(..), plane(..), pts(..), file(..)")
    parser.add_argument("--deltas", help="comma list of δ values; defaults to 2^-m down to 4/N")
    parser.set_defaults(handler=handle_density)

    parser = verbs.add_parser("dini", parents=[common], help="Dini sum of a density profile")
    _profile_options(parser)
    parser.set_defaults(handler=handle_dini)

    parser = verbs.add_parser("eta", parents=[common], help="η derived from a density profile")
    _profile_options(parser)
    parser.add_argument("--s-prime", dest="s_prime", type=float, default=1.0)
    parser.set_defaults(handler=handle_eta)

    parser = verbs.add_parser("decay", parents=[common], help="weighted sup envelope of u near S")
    parser.add_argument("--set", dest="point_set", default="plane(0,0)")
    parser.add_argument("--s-prime", dest="s_prime", type=float, default=2.0)
    parser.add_argument("--solve", action="store_true", help="use the Picard solution instead of the heat flow")
    parser.set_defaults(handler=handle_decay)

    parser = verbs.add_parser("stability", parents=[common], help="per-band constants of the weighted kernels")
    parser.add_argument("--set", dest="point_set", default="plane(0,0)")
    parser.add_argument("--s-prime", dest="s_prime", type=float, default=1.0)
    parser.add_argument("--kernel-exponent", dest="kernel_exponent", type=float)
    parser.set_defaults(handler=handle_stability)


def _profile_options(parser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--oracle", choices=ORACLES, default="point")
    source.add_argument("--set", dest="point_set", help="measure the profile of this set instead")


def _profile(args, config):
    if args.point_set:
        return density_function(PointSet.parse(args.point_set), config.grid())
    if args.oracle == "linear":
        return profile_from_function(lambda d: d, config.dim, name="linear")
    if args.oracle == "inverse-log":
        return profile_from_function(lambda d: 1.0 / math.log(math.e / d), config.dim, name="inverse-log")
    return analytic_profile(args.oracle, config.dim)


def _profile_rows(profile):
    return list(zip(profile.deltas, profile.values))


def handle_density(args, config):
    grid = config.grid()
    deltas = None
    if args.deltas:
        try:
            deltas = [float(d) for d in args.deltas.split(",") if d.strip()]
        except ValueError as e:
            raise ArgumentError(f"cannot read δ values '{args.deltas}'") from e
    profile = density_function(PointSet.parse(args.point_set), grid, deltas)
    if config.csv:
        write_csv(config.csv, ("delta", "epsilon"), _profile_rows(profile))
    result = profile.model_dump(mode="json")
    result["monotone"] = profile.is_monotone()
    result["summary"] = ", ".join(f"ε({d:g}) = {v:.4g}" for d, v in _profile_rows(profile))
    return result, 0


def handle_dini(args, config):
    profile = _profile(args, config)
    report = dini_check(profile)
    if config.csv:
        write_csv(config.csv, ("delta", "epsilon"), _profile_rows(profile))
    verdict = "passes" if report.passes else "fails"
    return {
        "profile": profile.model_dump(mode="json"),
        "dini": report.model_dump(mode="json"),
        "summary": f"{profile.provenance}: Dini {verdict}, sum {report.estimate:.6g}",
    }, 0


def handle_eta(args, config):
    profile = _profile(args, config)
    eta = eta_from_density(args.s_prime, profile)
    summable = eta_is_summable(eta)
    if config.csv:
        eta.to_csv(config.csv)
    return {
        "profile": profile.provenance,
        "s_prime": args.s_prime,
        "eta": list(eta.values),
        "summable": summable,
        "summary": f"η from {profile.provenance} at s′ = {args.s_prime:g}: {'summable' if summable else 'not summable'}",
    }, 0


def handle_decay(args, config):
    if config.u0 is None:
        config = config.merged({"u0": "builtin:sawtooth"})
    u0 = load_datum(config, vector=False)
    point_set = PointSet.parse(args.point_set)
    heat_part = Trajectory.heat_flow(u0)
    u = heat_part
    status = 0
    notes = []
    if args.solve:
        u, solve_report = get_solver_service(config.grid(), config.solver_config()).picard_solve(u0)
        if not solve_report.converged:
            notes.append(f"Picard iteration {solve_report.status}; envelope measured on the last iterate")
            status = 3
    report = decay_check(u, point_set, args.s_prime, heat_part=heat_part if args.solve else None)
    report.notes.extend(notes)
    if config.csv:
        write_csv(
            config.csv,
            ("t", "constant", "heat_exponent", "duhamel_exponent"),
            [(r.t, r.constant, r.heat_exponent, r.duhamel_exponent) for r in report.rows],
        )
    result = report.model_dump(mode="json")
    result["summary"] = f"case {report.case}: envelope constant spread {report.spread:.3f} over {len(report.rows)} times"
    return result, status


def handle_stability(args, config):
    report = convolution_stability(PointSet.parse(args.point_set), config.grid(), args.s_prime, args.kernel_exponent)
    if config.csv:
        write_csv(config.csv, ("j", "constant"), sorted(report.constants.items()))
    result = report.model_dump(mode="json")
    result["summary"] = f"kernel constants spread {report.spread:.3f} over {len(report.constants)} bands"
    return result, 0
