import logging
import math
from typing import Callable, List, Tuple

import numpy as np

from lab_service.duhamel import EpsilonFunction, Trajectory, bilinear_B
from lab_service.norms import EtaSequence, Lebesgue, magnitude, norm
from lab_service.solver import catalan, catalan_by_recursion, series_bound
from lab_service.spectral_core import (
    Grid,
    Scalar1,
    band_decomposition,
    delta_j,
    dyadic_rescale,
    from_physical,
    heat,
    plane_wave,
    random_bandlimited,
    reconstruct,
)

logger = logging.getLogger(__name__)

Check = Tuple[str, Callable[[Grid], float], float]
SELFTEST_POINTS = 64


def _max_abs(field) -> float:
    return float(np.max(magnitude(field.values, field.grid)))


def _band_keeps_its_wave(grid: Grid) -> float:
    wave = plane_wave(grid, (4,) + (0,) * (grid.dim - 1))
    return _max_abs(delta_j(wave, 2) - wave)


def _band_kills_far_wave(grid: Grid) -> float:
    return _max_abs(delta_j(plane_wave(grid, (16,) + (0,) * (grid.dim - 1)), 1))


def _telescoping(grid: Grid) -> float:
    f = random_bandlimited(grid, np.random.default_rng(0), grid.j_min + 1, grid.j_max - 1)
    return _max_abs(reconstruct(band_decomposition(f)) - f) / _max_abs(f)


def _heat_identity(grid: Grid) -> float:
    f = random_bandlimited(grid, np.random.default_rng(1), grid.j_min, grid.j_max)
    return _max_abs(heat(f, 0.0) - f)


def _heat_semigroup(grid: Grid) -> float:
    f = random_bandlimited(grid, np.random.default_rng(2), grid.j_min, grid.j_max)
    return _max_abs(heat(heat(f, 0.01), 0.02) - heat(f, 0.03)) / _max_abs(f)


def _symbol_on_wave(grid: Grid) -> float:
    wave = plane_wave(grid, (1,) + (0,) * (grid.dim - 1))
    return _max_abs(Scalar1().apply(wave) - wave * 1j)


def _rescale_identity(grid: Grid) -> float:
    f = random_bandlimited(grid, np.random.default_rng(3), grid.j_min, grid.j_max)
    return _max_abs(dyadic_rescale(f, 0) - f)


def _constant_norm(grid: Grid) -> float:
    c = from_physical(grid, np.full(grid.shape, 2.5), mean_zero=False)
    return abs(norm(c, Lebesgue(p=3.0)) - 2.5 * grid.volume ** (1.0 / 3.0)) / (2.5 * grid.volume ** (1.0 / 3.0))


def _catalan(grid: Grid) -> float:
    return float(sum(abs(a - catalan(k)) for k, a in enumerate(catalan_by_recursion(64), start=1)))


def _series_bound_zero(grid: Grid) -> float:
    return abs(series_bound(1.0, 0.0))


def _single_term_epsilon(grid: Grid) -> float:
    eps = EpsilonFunction(eta=EtaSequence(values=(1.0,)))
    return max(abs(eps(s) - min(1.0, s)) for s in (0.0, 0.25, 0.5, 1.0, 4.0))


def _zero_bilinear(grid: Grid) -> float:
    zero = Trajectory.zero(grid)
    return _max_abs(bilinear_B(zero, zero, 0.1))


CHECKS: List[Check] = [
    ("band keeps a wave at |ξ| = 2^j", _band_keeps_its_wave, 1e-12),
    ("band removes a wave at |ξ| = 2^{j+3}", _band_kills_far_wave, 1e-12),
    ("bands telescope back to the field", _telescoping, 1e-10),
    ("heat at t = 0 is the identity", _heat_identity, 0.0),
    ("heat semigroup law", _heat_semigroup, 1e-12),
    ("scalar1 multiplies e^{ix₁} by i", _symbol_on_wave, 1e-12),
    ("rescale by 2^0 is the identity", _rescale_identity, 1e-14),
    ("Lebesgue norm of a constant", _constant_norm, 1e-12),
    ("Catalan closed form matches the recursion", _catalan, 0.0),
    ("series bound vanishes for a zero datum", _series_bound_zero, 0.0),
    ("single-term ε is min(1, s)", _single_term_epsilon, 1e-15),
    ("B(0, 0) vanishes", _zero_bilinear, 0.0),
]


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("selftest", parents=[common], help="run the built-in invariant checks")
    parser.set_defaults(handler=handle_selftest)


def handle_selftest(args, config):
    # the checks place waves at fixed lattice points, so they run on their own grid
    grid = Grid(config.dim, SELFTEST_POINTS, 1.0)
    rows = []
    for name, check, tolerance in CHECKS:
        error = check(grid)
        passed = math.isfinite(error) and error <= tolerance
        rows.append({"check": name, "error": error, "tolerance": tolerance, "passed": passed})
        if passed:
            logger.info(f"✅ {name}: {error:.2e}")
        else:
            logger.error(f"❌ {name}: {error:.2e} > {tolerance:.0e}")
    failed = [r["check"] for r in rows if not r["passed"]]
    summary = f"{len(rows) - len(failed)}/{len(rows)} checks passed"
    return {"checks": rows, "failed": failed, "summary": summary}, 0 if not failed else 3
