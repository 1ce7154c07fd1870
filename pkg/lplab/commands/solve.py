import logging
from typing import List, Optional

from lab_service.duhamel import (
    EpsilonFunction,
    Trajectory,
    diagnostics_sweep,
    write_diagnostics_csv,
)
from lab_service.errors import ArgumentError
from lab_service.field_io import write_field
from lab_service.norms import EtaSequence, format_space
from lab_service.solver import get_solver_service, series_bound
from lplab.utils import load_datum, parse_int_range, write_csv

logger = logging.getLogger(__name__)


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("solve", parents=[common], help="Picard iteration for u = Su0 + B(u, u)")
    parser.add_argument("--init", choices=("heat", "zero"), default="heat")
    parser.set_defaults(handler=handle_solve)

    parser = subparsers.add_parser("series", parents=[common], help="multilinear series with Catalan bounds")
    parser.set_defaults(handler=handle_series)

    parser = subparsers.add_parser("local-solve", parents=[common], help="solve on a short horizon (0, T)")
    parser.add_argument("--T", dest="horizon", type=float, required=True)
    parser.set_defaults(handler=handle_local_solve)

    parser = subparsers.add_parser("diagnostics", parents=[common], help="per-band R_j, C_j sweep")
    parser.add_argument("--bands", help="j values, a:b or a comma list; defaults to the resolved bands")
    parser.add_argument("--eta", help="η as a CSV path or inline values a;b;c")
    parser.set_defaults(handler=handle_diagnostics)


def _solver(config):
    return get_solver_service(config.grid(), config.solver_config())


def _dump(config, u: Trajectory, command: str) -> None:
    if not config.field_out:
        return
    final = u(u.t_max if u.times is not None else 0.0)
    if final.rank:
        logger.warning("⚠️ LPF1 stores scalar fields only; skipping the field dump")
        return
    write_field(config.field_out, final, seed=config.seed, command=command, description="solution at the last sample time")


def handle_solve(args, config):
    solver = _solver(config)
    u0 = load_datum(config)
    u, report = solver.picard_solve(u0, init=args.init)
    _dump(config, u, "solve")
    if config.csv:
        write_csv(config.csv, ("iteration", "residual"), enumerate(report.residuals, start=1))
    result = report.model_dump(mode="json")
    result["summary"] = (
        f"{report.status}: {report.iterations} iterations, residual {report.final_residual:.3e}, "
        f"margin {report.margin:.4g}"
    )
    return result, 0 if report.converged else 3


def handle_series(args, config):
    solver = _solver(config)
    u0 = load_datum(config)
    terms, report = solver.tk_series(u0)
    result = report.model_dump(mode="json")
    if report.norm_B and report.margin is not None and report.margin <= 1.0:
        result["series_bound"] = series_bound(report.norm_B, report.norm_a)
    if config.csv:
        rows = [(t.k, t.norm, bound) for t, bound in zip(terms, report.catalan_bounds)]
        write_csv(config.csv, ("k", "term_norm", "catalan_bound"), rows)
    if config.field_out:
        _dump(config, solver.series_sum(terms), "series")
    result["summary"] = f"series to K={len(terms)}: ‖T_K‖ = {terms[-1].norm:.4g}, fitted C = {report.fitted_C}"
    return result, 0


def handle_local_solve(args, config):
    solver = _solver(config)
    u0 = load_datum(config)
    u, report = solver.local_solve(u0, args.horizon)
    if report.status == "converged":
        _dump(config, u, "local-solve")
    if config.csv:
        write_csv(config.csv, ("iteration", "residual"), enumerate(report.residuals, start=1))
    result = report.model_dump(mode="json")
    norms = ", ".join(f"{k}: {v:.4g}" for k, v in report.operator_norms.items())
    result["summary"] = f"{report.status} on (0, {args.horizon:g}); ‖L‖ {norms}"
    return result, 0 if report.status == "converged" else 3


def _bands(text: Optional[str], grid) -> List[int]:
    if not text:
        return list(grid.resolved_bands)
    bands = parse_int_range(text)
    for j in bands:
        grid.check_band(j)
        if j > grid.j_max:
            raise ArgumentError("diagnostic bands must not exceed j_max", band=j, ceiling=grid.j_max)
    return bands


def handle_diagnostics(args, config):
    """R_j, C_j on the unit-normalized heat flow of the datum, over the resolved bands and dyadic times."""
    solver = _solver(config)
    grid = solver.grid
    bands = _bands(args.bands, grid)
    u0 = load_datum(config)
    a = Trajectory.heat_flow(u0)
    size = solver.f_norm(a)
    if size == 0:
        raise ArgumentError("diagnostics need a nonzero datum")
    a = a * (1.0 / size)
    eps = EpsilonFunction(eta=EtaSequence.load(args.eta)) if args.eta else None
    times = [4.0 ** (-j) for j in bands]
    rows = diagnostics_sweep(a, a, solver.spec, bands, times, eps, order=config.quad_nodes)
    if config.csv:
        write_diagnostics_csv(rows, config.csv)
    ratios = [r.ratio for r in rows]
    return {
        "space": format_space(solver.spec),
        "bands": bands,
        "times": times,
        "rows": [r.model_dump(mode="json") for r in rows],
        "max_ratio": max(ratios, default=0.0),
        "summary": f"{len(rows)} (j, t) points, max R_j/envelope {max(ratios, default=0.0):.4g}",
    }, 0
