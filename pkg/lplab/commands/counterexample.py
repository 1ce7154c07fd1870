import logging
import math

from lab_service.counterexample_lab import (
    OrthonormalBump,
    ball_criterion,
    cone_sample,
    delta_sequence,
    kernel_sweep,
    lacunary_field,
    pairing_demo,
    prop19_pair,
    prop19_ratio,
    prop19_sharpness,
    random_signs,
)
from lab_service.errors import ArgumentError
from lab_service.norms import EtaSequence
from lplab.utils import parse_int_range, write_csv

logger = logging.getLogger(__name__)

ETA_RULES = {
    "harmonic": lambda n: (n + 1) ** -0.5,
    "geometric": lambda n: 2.0 ** (-n),
}


def register(subparsers, common) -> None:
    group = subparsers.add_parser("counterexample", help="finite building blocks of the ill-posedness constructions")
    verbs = group.add_subparsers(dest="verb", parser_class=type(group))
    verbs.required = True

    parser = verbs.add_parser(
        "prop19", aliases=["blowup"], parents=[common], help="blowup pair ‖Δ₀(f_k g_k)‖_∞ growth"
    )
    parser.add_argument("--ks", help="bands k, a:b or a comma list; defaults to j_min..j_max − 1")
    parser.set_defaults(handler=handle_prop19)

    parser = verbs.add_parser("delta-seq", parents=[common], help="δ-sequence built from η")
    _eta_options(parser)
    parser.add_argument("--window", help="lo:hi window of the δ sequence")
    parser.add_argument("--j0", type=int, default=4)
    parser.set_defaults(handler=handle_delta_sequence)

    parser = verbs.add_parser("lacunary", parents=[common], help="lacunary field and its M(η) ball criterion")
    _eta_options(parser)
    parser.add_argument("--period", type=int, default=32, help="integer box period")
    parser.add_argument("--shells", default="2:4")
    parser.add_argument("--x1", type=float, default=1.0)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--patterns", type=int, default=1, help="random sign patterns to try")
    parser.set_defaults(handler=handle_lacunary)

    parser = verbs.add_parser("pairing", parents=[common], help="ψ∗B(u,u)(1)(x) for a finite-shell lacunary field")
    _eta_options(parser)
    parser.add_argument("--period", type=int, default=16, help="integer box period")
    parser.add_argument("--shells", default="2:3")
    parser.add_argument("--x1", type=float, default=1.0)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--at", help="x₁ values to evaluate at, comma separated; defaults to --x1")
    parser.set_defaults(handler=handle_pairing)

    parser = verbs.add_parser("kernel", parents=[common], help="Duhamel kernel lower bound over a cone sample")
    parser.add_argument("--count", type=int, default=20)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.set_defaults(handler=handle_kernel)


def _eta_options(parser) -> None:
    parser.add_argument("--eta-rule", choices=sorted(ETA_RULES), default="harmonic")
    parser.add_argument("--eta", help="η as a CSV path or inline values a;b;c (overrides --eta-rule)")
    parser.add_argument("--eta-len", type=int, default=24, help="number of η values generated by a rule")


def _eta(args) -> EtaSequence:
    if args.eta:
        return EtaSequence.load(args.eta)
    return EtaSequence.from_rule(ETA_RULES[args.eta_rule], 0, args.eta_len - 1)


def handle_prop19(args, config):
    grid = config.grid()
    ks = parse_int_range(args.ks) if args.ks else list(range(grid.j_min, grid.j_max))
    rows = []
    for k in ks:
        pair = prop19_pair(k, grid=grid)
        sharp = prop19_sharpness(k, pair.phi)
        rows.append(
            {
                "k": k,
                "delta0_sup": prop19_ratio(k, pair.phi),
                "f_norm": sharp.f_norm,
                "g_norm": sharp.g_norm,
                "ratio": sharp.ratio,
                "floor": sharp.floor,
            }
        )
    quotients = [b["delta0_sup"] / a["delta0_sup"] for a, b in zip(rows, rows[1:]) if a["delta0_sup"] > 0]
    if config.csv:
        write_csv(config.csv, ("k", "delta0_sup", "f_norm", "g_norm", "ratio", "floor"), [tuple(r.values()) for r in rows])
    worst = max((abs(q - 4.0) for q in quotients), default=0.0)
    return {
        "rows": rows,
        "quotients": quotients,
        "summary": "consecutive quotients " + ", ".join(f"{q:.12g}" for q in quotients) + f" (max deviation from 4: {worst:.2e})",
    }, 0


def handle_delta_sequence(args, config):
    eta = _eta(args)
    window = None
    if args.window:
        bounds = parse_int_range(args.window)
        window = (bounds[0], bounds[-1])
    seq = delta_sequence(eta, window, j0=args.j0)
    harmonic = {}
    running = 0.0
    for j in sorted(seq.partial_sums):
        running += 1.0 / (j + 1)
        harmonic[j] = seq.partial_sums[j] / running
    if config.csv:
        rows = [
            (j, seq.delta_sq[j], seq.partial_sums[j], seq.slack[j], seq.hypothesis_terms[j])
            for j in sorted(seq.delta_sq)
        ]
        write_csv(config.csv, ("j", "delta_sq", "partial_sum", "slack", "hypothesis_term"), rows)
    result = seq.model_dump(mode="json")
    result["harmonic_ratio"] = harmonic
    result["min_slack"] = min(seq.slack.values())
    verdict = "holds" if seq.hypothesis_holds else "fails"
    result["summary"] = f"divergence hypothesis {verdict}; Σδ² = {seq.partial_sums[max(seq.partial_sums)]:.6g}"
    return result, 0


def handle_lacunary(args, config):
    bump = OrthonormalBump(dim=config.dim)
    grid = bump.grid_for(args.period, config.points)
    if args.patterns < 1:
        raise ArgumentError("need at least one sign pattern", patterns=args.patterns)
    shells = parse_int_range(args.shells)
    eta = _eta(args)
    seq = delta_sequence(eta, (min(shells), max(shells)), j0=min(shells))
    rows = []
    for pattern in range(args.patterns):
        signs = random_signs(config.seed + pattern)
        field = lacunary_field(seq, signs, args.x1, bump, grid, shells, args.alpha)
        outcome = ball_criterion(field, eta, shells=shells)
        rows.append({"pattern": pattern, "constant": outcome.constant, "per_radius": outcome.per_radius})
    constants = [r["constant"] for r in rows]
    spread = max(constants) / min(constants) if min(constants) > 0 else math.inf
    if config.csv:
        write_csv(config.csv, ("pattern", "constant"), [(r["pattern"], r["constant"]) for r in rows])
    return {
        "grid": grid.describe(),
        "shells": shells,
        "partition_error": bump.partition_error(),
        "rows": rows,
        "spread": spread,
        "summary": f"M(η) constant over {len(rows)} sign patterns: max {max(constants):.4g}, spread {spread:.3f}",
    }, 0


def handle_kernel(args, config):
    if args.count < 1:
        raise ArgumentError("need at least one cone sample", count=args.count)
    samples = cone_sample(args.count, dim=config.dim, alpha=args.alpha, seed=config.seed)
    rows = kernel_sweep(samples, alpha=args.alpha)
    inside = [r.ratio for r in rows if r.in_hypothesis]
    beta = min(inside) if inside else None
    if config.csv:
        write_csv(
            config.csv,
            ("x1", "site", "value", "sign", "ratio", "in_hypothesis", "distance"),
            [(r.x1, " ".join(f"{c:.17g}" for c in r.site), r.value, r.sign, r.ratio, r.in_hypothesis, r.distance) for r in rows],
        )
    return {
        "rows": [r.model_dump(mode="json") for r in rows],
        "beta": beta,
        "summary": f"β = {beta:.4g} over {len(inside)} cone sites" if beta is not None else "no site inside the cone",
    }, 0


def handle_pairing(args, config):
    bump = OrthonormalBump(dim=config.dim)
    grid = bump.grid_for(args.period, config.points)
    shells = parse_int_range(args.shells)
    eta = _eta(args)
    seq = delta_sequence(eta, (min(shells), max(shells)), j0=min(shells))
    points = [float(p) for p in args.at.split(",")] if args.at else None
    demo = pairing_demo(seq, random_signs(config.seed), args.x1, bump, grid, shells, args.alpha, points, config.quad_nodes)
    if config.csv:
        write_csv(config.csv, ("x1", "value", "imag", "b_sup", "ratio"), [tuple(r.model_dump().values()) for r in demo.rows])
    result = demo.model_dump(mode="json")
    first = demo.rows[0]
    result["summary"] = f"ψ∗B(u,u)(1)(x₁={first.x1:g}) = {first.value:.6g} over {demo.sites} sites (report only)"
    return result, 0
