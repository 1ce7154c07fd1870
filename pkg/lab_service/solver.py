import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from lab_service.duhamel import (
    DEFAULT_ORDER,
    Trajectory,
    bilinear_trajectory,
    sample_times,
    trajectory_norm,
)
from lab_service.errors import ArgumentError, MarginError
from lab_service.norms import DerivedCN, Lebesgue, SpaceSpec, band_norms, format_space, magnitude
from lab_service.spectral_core import (
    Grid,
    SpectralField,
    derivative,
    parse_symbol,
    plane_wave,
    random_bandlimited,
)
from lab_service.workers import parallel_map

logger = logging.getLogger(__name__)

# Catalan asymptotics c_k ~ 4^k k^{-3/2} / (4√π)
CATALAN_CONSTANT = 1.0 / (4.0 * math.sqrt(math.pi))


def catalan(k: int) -> int:
    """c_k = (2k − 2)! / (k! (k − 1)!), so c_1 = c_2 = 1, c_3 = 2, c_4 = 5."""
    if k < 1:
        raise ArgumentError("Catalan numbers start at k = 1", k=k)
    return math.comb(2 * k - 2, k - 1) // k


def catalan_by_recursion(K: int) -> List[int]:
    """c_1..c_K from c_k = Σ_{l=1}^{k−1} c_l c_{k−l}."""
    if K < 1:
        raise ArgumentError("need K >= 1", K=K)
    c = [0, 1]
    for k in range(2, K + 1):
        c.append(sum(c[l] * c[k - l] for l in range(1, k)))
    return c[1:]


def quarter_sum(K: int) -> float:
    """S_K = Σ_{k=2}^{K} c_k 4^{−k}, which increases to ¼."""
    terms, term = [], 1.0 / 16.0
    for k in range(2, K + 1):
        terms.append(term)
        term *= (2 * k - 1) / (2.0 * (k + 1))
    return math.fsum(terms)


def series_bound(normB: float, normA: float) -> float:
    """(1 − √(1 − 4‖B‖‖a‖)) / (2‖B‖) = Σ c_k ‖B‖^{k−1}‖a‖^k."""
    if normB <= 0:
        raise ArgumentError("‖B‖ must be positive", normB=normB)
    if normA < 0:
        raise ArgumentError("‖a‖ must be nonnegative", normA=normA)
    x = 4.0 * normB * normA
    if x > 1.0 + 1e-12:
        raise MarginError("4‖B‖‖a‖ exceeds 1; the series bound does not apply", margin=x)
    return (1.0 - math.sqrt(max(0.0, 1.0 - x))) / (2.0 * normB)


def truncated_series(normB: float, normA: float, K: int) -> float:
    return math.fsum(catalan(k) * normB ** (k - 1) * normA ** k for k in range(1, K + 1))


class SolverConfig(BaseModel):
    n_exp: int = 4
    base: Optional[SpaceSpec] = None
    symbol: str = "scalar1"
    quad_nodes: int = DEFAULT_ORDER
    time_refine: int = 1
    probe_pairs: int = 32
    seed: int = 0
    tol: float = 1e-8
    max_iter: int = 50
    K: int = 12
    allow_over_margin: bool = False
    init: Literal["heat", "zero"] = "heat"

    def space(self, dim: int) -> DerivedCN:
        return DerivedCN(base=self.base or Lebesgue(p=float(dim)), N=self.n_exp)


class SolverReport(BaseModel):
    status: str = "pending"
    space: str = ""
    symbol: str = ""
    grid: Dict[str, object] = {}
    norm_B: Optional[float] = None
    norm_a: Optional[float] = None
    margin: Optional[float] = None
    uniqueness_radius: Optional[float] = None
    term_norms: List[float] = []
    catalan_bounds: List[float] = []
    asymptotic_constants: List[float] = []
    fitted_C: Optional[float] = None
    residuals: List[float] = []
    iterations: int = 0
    converged: bool = False
    final_residual: Optional[float] = None
    solution_norm: Optional[float] = None
    in_uniqueness_ball: Optional[bool] = None
    horizon: Optional[float] = None
    operator_norms: Dict[str, float] = {}
    tail_ratio: Optional[float] = None
    notes: List[str] = []


@dataclass(frozen=True)
class SeriesTerm:
    k: int
    trajectory: Trajectory
    norm: float


class SmoothingRow(BaseModel):
    order: Tuple[int, ...]
    slope: float
    theory: float
    times: List[float]
    sup_values: List[float]


class MildSolver:
    """Fixed-point engine for u = Su₀ + B(u, u) on one grid and configuration."""

    def __init__(self, grid: Grid, config: Optional[SolverConfig] = None):
        self.grid = grid
        self.config = config or SolverConfig()
        self.spec = self.config.space(grid.dim)
        self.symbol = parse_symbol(self.config.symbol)
        self.times = sample_times(grid, self.config.time_refine)
        logger.info(
            f"✅ MildSolver ready: {format_space(self.spec)}, symbol {self.config.symbol}, "
            f"{len(self.times)} sample times, {self.config.quad_nodes} quadrature nodes"
        )

    def _new_report(self) -> SolverReport:
        return SolverReport(
            space=format_space(self.spec),
            symbol=self.config.symbol,
            grid=self.grid.describe(),
        )

    def f_norm(self, u: Trajectory, times: Optional[Sequence[float]] = None) -> float:
        return trajectory_norm(u, self.spec, self.times[1:] if times is None else times)

    def B(self, u: Trajectory, v: Trajectory, times: Optional[Sequence[float]] = None) -> Trajectory:
        return bilinear_trajectory(u, v, self.times if times is None else times, self.config.quad_nodes, self.symbol)

    def _random_datum(self, rng: np.random.Generator, components: Tuple[int, ...]) -> SpectralField:
        if not components:
            return random_bandlimited(self.grid, rng, self.grid.j_min, self.grid.j_max - 1)
        parts = [random_bandlimited(self.grid, rng, self.grid.j_min, self.grid.j_max - 1).coef for _ in range(components[0])]
        return SpectralField(self.grid, np.stack(parts))

    def measure_B(self, a: Trajectory) -> float:
        """max ‖B(u, v)‖_𝓕 / (‖u‖_𝓕 ‖v‖_𝓕) over (a, a) and random heat-flow pairs."""
        pairs = [(a, a)]
        for i in range(max(self.config.probe_pairs - 1, 0)):
            rng = np.random.default_rng((self.config.seed, i))
            u = Trajectory.heat_flow(self._random_datum(rng, a.components))
            v = Trajectory.heat_flow(self._random_datum(rng, a.components))
            pairs.append((u, v))

        def ratio(pair: Tuple[Trajectory, Trajectory]) -> float:
            u, v = pair
            denominator = self.f_norm(u) * self.f_norm(v)
            if denominator == 0:
                return 0.0
            return self.f_norm(self.B(u, v)) / denominator

        best = max(parallel_map(ratio, pairs))
        logger.info(f"📏 Measured ‖B‖ = {best:.6g} over {len(pairs)} probe pairs")
        return best

    def _prepare(self, u0: SpectralField, report: SolverReport) -> Trajectory:
        if u0.grid != self.grid:
            raise ArgumentError("datum lives on another grid", datum=u0.grid, solver=self.grid)
        a = Trajectory.heat_flow(u0)
        report.norm_a = self.f_norm(a)
        report.norm_B = self.measure_B(a)
        report.margin = 4.0 * report.norm_B * report.norm_a
        report.uniqueness_radius = 1.0 / (2.0 * report.norm_B) if report.norm_B > 0 else math.inf
        if report.margin > 1.0:
            if not self.config.allow_over_margin:
                report.status = "refused"
                logger.error(f"❌ Smallness margin 4‖B‖‖a‖ = {report.margin:.4g} > 1, refusing")
                raise MarginError("smallness margin exceeds 1", report=report, margin=report.margin)
            logger.warning(f"⚠️ Margin {report.margin:.4g} > 1, continuing in report-only mode")
            report.notes.append("margin above 1; results are report-only")
        return a

    def tk_series(self, u0: SpectralField, K: Optional[int] = None) -> Tuple[List[SeriesTerm], SolverReport]:
        """T_1 = a, T_k = Σ_{l=1}^{k−1} B(T_l, T_{k−l}); each unordered pair is computed once."""
        K = K or self.config.K
        report = self._new_report()
        a = self._prepare(u0, report)
        terms: Dict[int, Trajectory] = {1: a}
        for k in range(2, K + 1):
            pairs = [(l, k - l) for l in range(1, k // 2 + 1)]
            parts = parallel_map(lambda lm: self.B(terms[lm[0]], terms[lm[1]]), pairs)
            total = None
            for (l, m), part in zip(pairs, parts):
                contribution = part if l == m else part * 2.0
                total = contribution if total is None else total + contribution
            terms[k] = total
            logger.debug(f"🔁 Series term T_{k} built from {len(pairs)} pairs")

        series = [SeriesTerm(k, terms[k], self.f_norm(terms[k])) for k in range(1, K + 1)]
        report.term_norms = [t.norm for t in series]
        normB, normA = report.norm_B, report.norm_a
        report.catalan_bounds = [catalan(t.k) * normB ** (t.k - 1) * normA ** t.k for t in series]
        if normB > 0 and normA > 0:
            report.asymptotic_constants = [
                t.norm * normB * t.k ** 1.5 / report.margin ** t.k for t in series if t.k >= 2
            ]
            report.fitted_C = max(report.asymptotic_constants, default=None)
        report.status = "series"
        report.iterations = K
        logger.info(f"✅ Series to order {K}: ‖T_K‖ = {series[-1].norm:.4g}")
        return series, report

    def series_sum(self, terms: List[SeriesTerm]) -> Trajectory:
        total = terms[0].trajectory
        for term in terms[1:]:
            total = total + term.trajectory
        return total

    def picard_solve(
        self,
        u0: SpectralField,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        init: Optional[str] = None,
    ) -> Tuple[Trajectory, SolverReport]:
        """Iterate u ← Su₀ + B(u, u); non-convergence is reported, not raised."""
        tol = self.config.tol if tol is None else tol
        max_iter = self.config.max_iter if max_iter is None else max_iter
        init = init or self.config.init
        report = self._new_report()
        a = self._prepare(u0, report)
        u = a if init == "heat" else Trajectory.zero(self.grid, a.components)
        for m in range(max_iter):
            new = a + self.B(u, u)
            dist = self.f_norm(new - u)
            report.residuals.append(dist)
            report.iterations = m + 1
            u = new
            logger.debug(f"🔁 Picard iteration {m + 1}: ‖u_new − u‖ = {dist:.3e}")
            if dist < tol:
                report.converged = True
                break
            if not math.isfinite(dist) or dist > 1e6 * max(report.norm_a, 1e-300):
                report.notes.append("iterates blew up")
                break

        report.final_residual = self.f_norm(u - a - self.B(u, u))
        report.solution_norm = self.f_norm(u)
        report.in_uniqueness_ball = report.solution_norm <= report.uniqueness_radius + tol
        report.status = "converged" if report.converged else "diverged"
        if report.converged:
            logger.info(f"✅ Picard converged in {report.iterations} iterations, residual {report.final_residual:.3e}")
        else:
            logger.warning(f"⚠️ Picard did not converge in {report.iterations} iterations")
        return u, report

    def local_times(self, T: float) -> List[float]:
        if T <= 0:
            raise ArgumentError("local horizon must be positive", T=T)
        floor = 4.0 ** (-(self.grid.j_max + 2))
        refine = self.config.time_refine
        times, i = [], 0
        while True:
            t = T * 4.0 ** (-i / refine)
            if t < floor * (1 - 1e-12):
                break
            times.append(t)
            i += 1
        return [0.0] + sorted(times)

    def _operator_norm_L(self, a: Trajectory, directions: List[Trajectory], times: List[float], horizon: float) -> float:
        window = [t for t in times[1:] if t <= horizon * (1 + 1e-12)]

        def ratio(v: Trajectory) -> float:
            size = self.f_norm(v, window)
            if size == 0:
                return 0.0
            return 2.0 * self.f_norm(self.B(a, v, times), window) / size

        return max(parallel_map(ratio, directions))

    def local_solve(
        self,
        u0: SpectralField,
        T: float,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
    ) -> Tuple[Trajectory, SolverReport]:
        """Solve v = B(a, a) + 2B(a, v) + B(v, v) on (0, T), return u = a + v."""
        tol = self.config.tol if tol is None else tol
        max_iter = self.config.max_iter if max_iter is None else max_iter
        report = self._new_report()
        report.horizon = T
        if u0.grid != self.grid:
            raise ArgumentError("datum lives on another grid", datum=u0.grid, solver=self.grid)
        times = self.local_times(T)
        a = Trajectory.heat_flow(u0)
        report.norm_a = self.f_norm(a, times[1:])

        directions = []
        for i in range(max(self.config.probe_pairs // 4, 1)):
            rng = np.random.default_rng((self.config.seed, 10_000 + i))
            directions.append(Trajectory.heat_flow(self._random_datum(rng, a.components)))
        if report.norm_a > 0:
            directions.append(self.B(a, a, times))
        for factor in (1, 4, 16):
            report.operator_norms[f"T/{factor}"] = self._operator_norm_L(a, directions, times, T / factor)
        report.tail_ratio = self.tail_ratio(u0)
        logger.info(f"📏 Local ‖L‖ at T, T/4, T/16: {list(report.operator_norms.values())}")

        if report.operator_norms["T/1"] >= 1.0:
            report.status = "refused-local"
            report.notes.append(f"‖L‖ >= 1 at T = {T:g}; try T = {T / 4:g}")
            logger.warning(f"⚠️ ‖L‖ = {report.operator_norms['T/1']:.4g} at T = {T:g}, suggesting T/4")
            return a, report

        v = Trajectory.zero(self.grid, a.components)
        for m in range(max_iter):
            new = self.B(a + v, a + v, times)
            dist = self.f_norm(new - v, times[1:])
            report.residuals.append(dist)
            report.iterations = m + 1
            v = new
            if dist < tol:
                report.converged = True
                break
            if not math.isfinite(dist):
                break
        report.final_residual = self.f_norm(v - self.B(a + v, a + v, times), times[1:])
        u = a + v
        report.solution_norm = self.f_norm(u, times[1:])
        report.status = "converged" if report.converged else "diverged"
        logger.info(f"✅ Local solve on (0, {T:g}): {report.status}, residual {report.final_residual:.3e}")
        return u, report

    def smoothing_check(
        self,
        u: Trajectory,
        orders: Sequence[Sequence[int]],
        times: Optional[Sequence[float]] = None,
    ) -> List[SmoothingRow]:
        """Fit log sup_x |D^α u(t)| against log t; the critical rate is −(|α| + 1)/2."""
        if times is None:
            times = [4.0 ** (-j) for j in range(self.grid.j_min + 1, self.grid.j_max + 1)]
        times = [t for t in times if t <= u.t_max]
        rows = []
        for alpha in orders:
            alpha = tuple(int(a) for a in alpha) + (0,) * (self.grid.dim - len(alpha))
            sups = [float(np.max(magnitude(derivative(u(t), alpha).values, self.grid))) for t in times]
            slope = float(np.polyfit(np.log2(times), np.log2(np.maximum(sups, 1e-300)), 1)[0])
            rows.append(
                SmoothingRow(
                    order=alpha,
                    slope=slope,
                    theory=-(sum(alpha) + 1) / 2.0,
                    times=list(times),
                    sup_values=sups,
                )
            )
            logger.info(f"📈 Smoothing α={alpha}: slope {slope:.3f} (critical {-(sum(alpha) + 1) / 2:.1f})")
        return rows

    def weak_limit_check(
        self,
        u: Trajectory,
        u0: SpectralField,
        times: Optional[Sequence[float]] = None,
    ) -> List[Tuple[float, float]]:
        """max over test waves of |⟨u(t) − u₀, φ⟩| / ⟨φ, φ⟩ at decreasing t.

        The test family is one axis wave per power of two on the lattice.
        """
        u0.require_same_grid(u(0.0))
        if times is None:
            times = [4.0 ** (-j) for j in range(self.grid.j_min - 1, self.grid.j_max + 3)]
        times = sorted((t for t in times if 0 < t <= u.t_max), reverse=True)
        tests = []
        k = 1
        while k < self.grid.n // 2:
            tests.append(plane_wave(self.grid, (k,) + (0,) * (self.grid.dim - 1)))
            k *= 2
        axes = tuple(range(-self.grid.dim, 0))
        rows = []
        for t in times:
            diff = (u(t) - u0).coef
            gaps = [np.max(np.abs(np.sum(diff * np.conj(phi.coef), axis=axes))) for phi in tests]
            rows.append((t, float(max(gaps))))
        logger.debug(f"🔁 Weak limit gaps: {[f'{g:.2e}' for _, g in rows]}")
        return rows

    def scale_to_margin(self, u0: SpectralField, target: float = 0.5) -> SpectralField:
        """Rescale the amplitude of u0 so that 4‖B‖‖Su₀‖ equals ``target``."""
        a = Trajectory.heat_flow(u0)
        normA = self.f_norm(a)
        if normA == 0:
            return u0
        margin = 4.0 * self.measure_B(a) * normA
        return u0 * (target / margin)

    def tail_ratio(self, u0: SpectralField) -> float:
        """‖Δ_j u₀‖_E at the top resolved band over the max across bands, E the base space."""
        per_band = band_norms(u0, self.spec.base)
        norms = [per_band[j] for j in self.grid.resolved_bands]
        top = max(norms) if norms else 0.0
        return norms[-1] / top if top > 0 else 0.0


solver_service = None


def get_solver_service(grid: Grid, config: Optional[SolverConfig] = None) -> MildSolver:
    """Reuse one MildSolver per (grid, config)."""
    global solver_service
    if solver_service is None or solver_service.grid != grid or solver_service.config != (config or SolverConfig()):
        logger.info("🚀 Initializing MildSolver...")
        solver_service = MildSolver(grid, config)
    return solver_service
