import logging
import math
from functools import lru_cache
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft
from pydantic import BaseModel

from lab_service.counterexample_lab import tail_verdict
from lab_service.duhamel import Trajectory
from lab_service.errors import ArgumentError, DegenerateSetError, PreconditionError
from lab_service.norms import (
    DEFAULT_SAMPLING,
    EtaSequence,
    SamplingConfig,
    dyadic_radii,
    magnitude,
    periodic_sq_distance,
)
from lab_service.point_sets import PointSet, distance_field
from lab_service.spectral_core import Grid
from lab_service.workers import get_thread_cap, parallel_map

logger = logging.getLogger(__name__)

# level sets closer than this fraction of a cell count as ties
TIE = 1e-9


class DensityProfile(BaseModel):
    """ε_S sampled on δ = 2^{−m}, m = 0, 1, ..."""

    deltas: List[float]
    values: List[float]
    provenance: str
    dim: int
    point_set: Optional[str] = None

    def dyadic(self) -> List[float]:
        """ε_S(2^{−m}) for m = 0 .. M, the longest dyadic run starting at δ = 1."""
        table = {}
        for delta, value in zip(self.deltas, self.values):
            m = -math.log2(delta)
            if abs(m - round(m)) < 1e-9:
                table[int(round(m))] = value
        out, m = [], 0
        while m in table:
            out.append(table[m])
            m += 1
        return out

    def is_monotone(self) -> bool:
        pairs = sorted(zip(self.deltas, self.values))
        return all(b[1] >= a[1] - 1e-12 for a, b in zip(pairs, pairs[1:]))


def _oracle(kind: str, dim: int) -> Callable[[float], float]:
    if kind == "point":
        return lambda d: d ** dim
    if kind == "plane" and dim == 2:
        return lambda d: (2.0 / math.pi) * (d * math.sqrt(1.0 - d * d) + math.asin(d))
    if kind == "plane" and dim == 3:
        return lambda d: 1.5 * d * (1.0 - d * d / 3.0)
    if kind == "line" and dim == 3:
        return lambda d: 1.0 - (1.0 - d * d) ** 1.5
    if kind == "line" and dim == 2:
        return _oracle("plane", 2)
    raise ArgumentError(f"no density oracle for '{kind}' in dimension {dim}")


def analytic_profile(kind: str, dim: int, m_max: int = 30) -> DensityProfile:
    """Exact ε_S for a point, line or plane (ball centered on S)."""
    oracle = _oracle(kind, dim)
    deltas = [2.0 ** (-m) for m in range(m_max + 1)]
    return DensityProfile(deltas=deltas, values=[oracle(d) for d in deltas], provenance=f"oracle:{kind}", dim=dim)


def profile_from_function(func: Callable[[float], float], dim: int, m_max: int = 30, name: str = "function") -> DensityProfile:
    deltas = [2.0 ** (-m) for m in range(m_max + 1)]
    return DensityProfile(deltas=deltas, values=[float(func(d)) for d in deltas], provenance=name, dim=dim)


def lipschitz_defect(dist: np.ndarray, grid: Grid) -> float:
    """max over neighbor pairs of |d_S(x) − d_S(y)| − |x − y| (≤ 0 for a 1-Lipschitz field)."""
    worst = -math.inf
    for axis in range(grid.dim):
        jump = np.abs(dist - np.roll(dist, 1, axis=axis))
        worst = max(worst, float(np.max(jump)) - grid.spacing)
    return worst


@lru_cache(maxsize=64)
def _soft_ball(grid: Grid, radius: float) -> Tuple[np.ndarray, float]:
    """Ball indicator with weight ½ on the sphere |x| = radius."""
    d = np.sqrt(periodic_sq_distance(grid))
    tol = TIE * grid.spacing
    weight = np.where(d < radius - tol, 1.0, np.where(np.abs(d - radius) <= tol, 0.5, 0.0))
    spectrum = sfft.rfftn(weight)
    spectrum.setflags(write=False)
    return spectrum, float(np.sum(weight))


def _level_indicator(dist: np.ndarray, level: float, spacing: float, inclusive: bool) -> np.ndarray:
    tol = TIE * spacing
    tie = 1.0 if inclusive else 0.5
    return np.where(dist < level - tol, 1.0, np.where(np.abs(dist - level) <= tol, tie, 0.0))


def default_deltas(grid: Grid) -> List[float]:
    """δ = 2^{−m} down to 4/N."""
    out, m = [], 0
    while 2.0 ** (-m) >= 4.0 / grid.n - 1e-15:
        out.append(2.0 ** (-m))
        m += 1
    return out


def density_function(
    S: PointSet,
    grid: Grid,
    deltas: Optional[Sequence[float]] = None,
    sampling: Optional[SamplingConfig] = None,
) -> DensityProfile:
    """ε_S(δ) = sup_{x, r} |{y ∈ B(x, r) : d_S(y) ≤ δr}| / |B(x, r)| over dyadic r and strided x.

    Only radii with δr of at least two cells enter; ties on the ball boundary
    and on the level set d_S = δr count half.
    """
    if S.is_empty:
        raise DegenerateSetError("density of an empty set is undefined")
    sampling = sampling or DEFAULT_SAMPLING
    deltas = list(deltas) if deltas is not None else default_deltas(grid)
    if any(not 0 < d <= 1 for d in deltas):
        raise ArgumentError("δ must lie in (0, 1]", deltas=deltas)
    dist = distance_field(S, grid)
    centers = (slice(None, None, sampling.stride(grid)),) * grid.dim
    radii = dyadic_radii(grid)
    workers = get_thread_cap()

    def one(delta: float) -> float:
        best = 0.0
        for r in radii:
            if delta * r < 2.0 * grid.spacing * (1 - 1e-12):
                continue
            spectrum, total = _soft_ball(grid, r)
            indicator = _level_indicator(dist, delta * r, grid.spacing, inclusive=delta >= 1.0)
            counts = sfft.irfftn(sfft.rfftn(indicator, workers=workers) * spectrum, s=grid.shape, workers=workers)
            best = max(best, float(np.max(counts[centers])) / total)
        return min(best, 1.0)

    logger.info(f"🔄 Density function of {S.to_text()} on N={grid.n}, {len(deltas)} δ values")
    values = parallel_map(one, deltas)
    profile = DensityProfile(
        deltas=deltas,
        values=values,
        provenance="grid",
        dim=grid.dim,
        point_set=S.to_text(),
    )
    if not profile.is_monotone():
        logger.warning("⚠️ Measured density profile is not monotone")
    return profile


class DiniReport(BaseModel):
    estimate: float
    passes: bool
    tail_ratio: float
    terms: int


def dini_check(profile: DensityProfile) -> DiniReport:
    """Σ_m ε_S(2^{−m}) and a verdict from the geometric trend of its tail."""
    if not profile.is_monotone():
        raise PreconditionError("density profile must be nondecreasing in δ")
    terms = profile.dyadic()
    if len(terms) < 4:
        raise ArgumentError("Dini check needs at least four dyadic values", terms=len(terms))
    passes, worst = tail_verdict(terms)
    report = DiniReport(estimate=math.fsum(terms), passes=passes, tail_ratio=worst, terms=len(terms))
    logger.info(f"{'✅' if passes else '⚠️'} Dini sum {report.estimate:.4g} over {len(terms)} terms, tail ratio {worst:.3f}")
    return report


def eta_from_density(s_prime: float, profile: DensityProfile) -> EtaSequence:
    """η_n = Σ_{m=0}^{n} 2^{−2s′(n−m)} ε_S(2^{−m})."""
    if s_prime <= 0:
        raise ArgumentError("s′ must be positive", s_prime=s_prime)
    eps = profile.dyadic()
    if not eps:
        raise ArgumentError("profile holds no dyadic values starting at δ = 1")
    values = [
        math.fsum(2.0 ** (-2.0 * s_prime * (n - m)) * eps[m] for m in range(n + 1)) for n in range(len(eps))
    ]
    return EtaSequence(values=tuple(values), n_lo=0)


def eta_is_summable(eta: EtaSequence) -> bool:
    return tail_verdict(eta.values)[0]


class DecayRow(BaseModel):
    t: float
    constant: float
    heat_exponent: Optional[float] = None
    duhamel_exponent: Optional[float] = None


class DecayReport(BaseModel):
    case: Literal["a", "b", "c"]
    s_prime: float
    point_set: str
    rows: List[DecayRow]
    spread: float
    notes: List[str] = []


def _decay_exponent(mag: np.ndarray, dist: np.ndarray, t: float, shells: int = 6) -> Optional[float]:
    """−slope of log max|v| against log d over distance shells [4√t, max d]."""
    lo, hi = 4.0 * math.sqrt(t), float(np.max(dist))
    if hi <= 2.0 * lo:
        return None
    edges = np.geomspace(lo, hi, shells + 1)
    xs, ys = [], []
    for a, b in zip(edges, edges[1:]):
        inside = (dist >= a) & (dist < b)
        if np.any(inside):
            peak = float(np.max(mag[inside]))
            if peak > 0:
                xs.append(math.log(math.sqrt(a * b)))
                ys.append(math.log(peak))
    if len(xs) < 3:
        return None
    return float(-np.polyfit(xs, ys, 1)[0])


def decay_check(
    u: Trajectory,
    S: PointSet,
    s_prime: float,
    times: Optional[Sequence[float]] = None,
    heat_part: Optional[Trajectory] = None,
) -> DecayReport:
    """sup_x |u(t, x)|(√t + d_S(x)), times (√t)^{1−s′} when s′ < 1, over dyadic t.

    With a heat part Su₀ available, the decay exponents of Su₀ and of
    w = u − Su₀ away from S are fitted as well.
    """
    if s_prime <= 0:
        raise ArgumentError("s′ must be positive", s_prime=s_prime)
    grid = u.grid
    dist = distance_field(S, grid)
    if heat_part is None and u.base is not None:
        heat_part = Trajectory.heat_flow(u.base)
    if times is None:
        times = [4.0 ** (-m) for m in range(1, grid.j_max + 1)]
    times = [t for t in times if 0 < t <= u.t_max]
    case = "a" if s_prime > 1 else ("c" if s_prime < 1 else "b")
    notes = []
    if case == "b":
        notes.append("s′ = 1: the logarithmic case is fitted with the s′ > 1 envelope")

    def one(t: float) -> DecayRow:
        mag = magnitude(u(t).values, grid)
        weight = math.sqrt(t) + dist
        constant = float(np.max(mag * weight))
        if case == "c":
            constant *= math.sqrt(t) ** (1.0 - s_prime)
        row = DecayRow(t=t, constant=constant)
        if heat_part is not None:
            heat_mag = magnitude(heat_part(t).values, grid)
            rest = magnitude((u(t) - heat_part(t)).values, grid)
            row.heat_exponent = _decay_exponent(heat_mag, dist, t)
            row.duhamel_exponent = _decay_exponent(rest, dist, t)
        return row

    rows = parallel_map(one, times)
    constants = [r.constant for r in rows if r.constant > 0]
    spread = max(constants) / min(constants) if constants else 1.0
    logger.info(f"📈 Decay check (case {case}) over {len(rows)} times: constant spread {spread:.3f}")
    return DecayReport(case=case, s_prime=s_prime, point_set=S.to_text(), rows=rows, spread=spread, notes=notes)


class StabilityReport(BaseModel):
    s_prime: float
    kernel_exponent: float
    constants: Dict[int, float]
    spread: float


def convolution_stability(
    S: PointSet,
    grid: Grid,
    s_prime: float,
    kernel_exponent: Optional[float] = None,
    bands: Optional[Sequence[int]] = None,
) -> StabilityReport:
    """C_j = sup_x (k_j ∗ w_j)(x) / w_j(x), k_j ∝ (1 + 2^j|x|)^{−N} of unit mass, w_j = (1 + 2^j d_S)^{−s′}."""
    kernel_exponent = grid.dim + s_prime + 1.0 if kernel_exponent is None else kernel_exponent
    if kernel_exponent <= grid.dim + s_prime:
        raise ArgumentError("kernel exponent must exceed d + s′", N=kernel_exponent, bound=grid.dim + s_prime)
    dist = distance_field(S, grid)
    radius = np.sqrt(periodic_sq_distance(grid))
    bands = list(grid.resolved_bands if bands is None else bands)
    workers = get_thread_cap()

    def one(j: int) -> float:
        kernel = (1.0 + 2.0 ** j * radius) ** (-kernel_exponent)
        kernel = kernel / np.sum(kernel)
        weight = (1.0 + 2.0 ** j * dist) ** (-s_prime)
        smoothed = sfft.irfftn(
            sfft.rfftn(kernel, workers=workers) * sfft.rfftn(weight, workers=workers), s=grid.shape, workers=workers
        )
        return float(np.max(smoothed / weight))

    constants = dict(zip(bands, parallel_map(one, bands)))
    spread = max(constants.values()) / min(constants.values())
    logger.info(f"📊 Convolution stability over bands {bands}: spread {spread:.3f}")
    return StabilityReport(s_prime=s_prime, kernel_exponent=kernel_exponent, constants=constants, spread=spread)
