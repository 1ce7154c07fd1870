import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from lab_service.errors import AliasingError, ArgumentError, GridMismatchError
from lab_service.norms import DerivedCN, EtaSequence, norm, time_weighted_norm
from lab_service.paraproduct import bony_split
from lab_service.spectral_core import (
    Grid,
    Scalar1,
    SpectralField,
    SymbolSpec,
    band_symbol,
    delta_j,
    dyadic_rescale,
    padded_values,
    product,
    product_from_values,
)
from lab_service.workers import parallel_map

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 32


@dataclass(frozen=True)
class TimeQuadrature:
    """Gauss–Legendre nodes on (0, t) graded towards both endpoints.

    Half the nodes sit on τ = (t/2)s², half on τ = t − (t/2)r², s, r ∈ (0, 1).
    """

    t: float
    order: int = DEFAULT_ORDER
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.t > 0:
            raise ArgumentError("quadrature needs t > 0", t=self.t)
        if self.order < 2 or self.order % 2:
            raise ArgumentError("quadrature order must be even and >= 2", order=self.order)
        x, w = np.polynomial.legendre.leggauss(self.order // 2)
        s = 0.5 * (x + 1.0)
        w = 0.5 * w
        near_zero = 0.5 * self.t * s ** 2
        near_t = self.t - 0.5 * self.t * s ** 2
        nodes = np.concatenate([near_zero, near_t])
        weights = np.concatenate([self.t * s * w, self.t * s * w])
        order = np.argsort(nodes, kind="stable")
        object.__setattr__(self, "nodes", nodes[order])
        object.__setattr__(self, "weights", weights[order])

    def __len__(self) -> int:
        return self.order

    def refined(self) -> "TimeQuadrature":
        return TimeQuadrature(self.t, 2 * self.order)


class Trajectory:
    """t ↦ u(t): heat flow of ``base`` + constant ``offset`` + samples interpolated in √t.

    Samples start at t = 0 and fix the domain (0, t_max]; without samples the
    trajectory is defined for all t ≥ 0.
    """

    # least recently used evaluations beyond this are dropped
    cache_size: ClassVar[int] = 128

    def __init__(
        self,
        grid: Grid,
        components: Tuple[int, ...] = (),
        base: Optional[SpectralField] = None,
        offset: Optional[SpectralField] = None,
        times: Optional[Sequence[float]] = None,
        samples: Optional[Sequence[SpectralField]] = None,
    ):
        for part in [base, offset] + list(samples or []):
            if part is not None and part.grid != grid:
                raise GridMismatchError("trajectory parts live on different grids")
        self.grid = grid
        self.components = components
        self.base = base
        self.offset = offset
        self.times = None if times is None else np.asarray(times, dtype=float)
        self.samples = tuple(samples or ())
        if self.times is not None:
            if len(self.times) != len(self.samples) or len(self.times) < 2:
                raise ArgumentError("sampled trajectories need matching times and samples (at least two)")
            if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
                raise ArgumentError("sample times must start at 0 and increase")
        self._cache: "OrderedDict[float, SpectralField]" = OrderedDict()
        self._lock = threading.Lock()

    @property
    def t_max(self) -> float:
        return math.inf if self.times is None else float(self.times[-1])

    @property
    def mean_zero(self) -> bool:
        parts = [p for p in [self.base, self.offset] + list(self.samples) if p is not None]
        return all(p.mean_zero for p in parts)

    @classmethod
    def heat_flow(cls, u0: SpectralField) -> "Trajectory":
        return cls(u0.grid, u0.coef.shape[: u0.rank], base=u0)

    @classmethod
    def constant(cls, value: SpectralField) -> "Trajectory":
        return cls(value.grid, value.coef.shape[: value.rank], offset=value)

    @classmethod
    def zero(cls, grid: Grid, components: Tuple[int, ...] = ()) -> "Trajectory":
        return cls(grid, components)

    @classmethod
    def from_samples(cls, times: Sequence[float], samples: Sequence[SpectralField], base=None) -> "Trajectory":
        first = samples[0]
        return cls(first.grid, first.coef.shape[: first.rank], base=base, times=times, samples=samples)

    def __call__(self, t: float) -> SpectralField:
        if t < 0 or t > self.t_max * (1 + 1e-12):
            raise ArgumentError("time outside the trajectory domain", t=t, t_max=self.t_max)
        t = float(t)
        with self._lock:
            cached = self._cache.get(t)
            if cached is not None:
                self._cache.move_to_end(t)
                return cached
        value = self._evaluate(t)
        with self._lock:
            self._cache.setdefault(t, value)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return value

    def _evaluate(self, t: float) -> SpectralField:
        coef = np.zeros(self.components + self.grid.shape, dtype=np.complex128)
        if self.base is not None:
            coef = coef + self.base.coef * np.exp(-t * self.grid.xi_sq)
        if self.offset is not None:
            coef = coef + self.offset.coef
        if self.samples:
            i = int(np.searchsorted(self.times, t, side="right")) - 1
            i = min(max(i, 0), len(self.times) - 2)
            s0, s1 = math.sqrt(self.times[i]), math.sqrt(self.times[i + 1])
            theta = min(max((math.sqrt(t) - s0) / (s1 - s0), 0.0), 1.0)
            if theta == 0.0:
                coef = coef + self.samples[i].coef
            elif theta == 1.0:
                coef = coef + self.samples[i + 1].coef
            else:
                coef = coef + (1.0 - theta) * self.samples[i].coef + theta * self.samples[i + 1].coef
        return SpectralField(self.grid, coef, self.mean_zero)

    def _combine(self, other: "Trajectory", sign: float) -> "Trajectory":
        if self.grid != other.grid or self.components != other.components:
            raise GridMismatchError("trajectories live on different grids")
        if self.times is not None and other.times is not None and not np.array_equal(self.times, other.times):
            raise ArgumentError("sampled trajectories must share their time grid to be combined")

        def add(a, b):
            if a is None:
                return None if b is None else b * sign
            return a if b is None else a + b * sign

        times = self.times if self.times is not None else other.times
        samples = None
        if times is not None:
            mine = self.samples or [None] * len(times)
            theirs = other.samples or [None] * len(times)
            samples = [add(a, b) for a, b in zip(mine, theirs)]
        return Trajectory(
            self.grid,
            self.components,
            base=add(self.base, other.base),
            offset=add(self.offset, other.offset),
            times=times,
            samples=samples,
        )

    def __add__(self, other: "Trajectory") -> "Trajectory":
        return self._combine(other, 1.0)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return self._combine(other, -1.0)

    def __mul__(self, scalar: float) -> "Trajectory":
        scale = lambda part: None if part is None else part * scalar
        return Trajectory(
            self.grid,
            self.components,
            base=scale(self.base),
            offset=scale(self.offset),
            times=self.times,
            samples=[scale(s) for s in self.samples] if self.samples else None,
        )

    __rmul__ = __mul__

    def rescaled(self, m: int) -> "Trajectory":
        """û(t) = 2^m u(4^m t, 2^m x) on the box shrunk by 2^m."""
        move = lambda part: None if part is None else dyadic_rescale(part, m)
        new_grid = Grid(self.grid.dim, self.grid.n, self.grid.box_l / 2.0 ** m)
        return Trajectory(
            new_grid,
            self.components,
            base=move(self.base),
            offset=move(self.offset),
            times=None if self.times is None else self.times / 4.0 ** m,
            samples=[move(s) for s in self.samples] if self.samples else None,
        )

    def sampled(self, times: Sequence[float]) -> "Trajectory":
        return Trajectory.from_samples(times, [self(t) for t in times])


def dyadic_times(grid: Grid, refine: int = 1) -> List[float]:
    """t = 4^{−j} for j from j_min − 3 to j_max + 2, ``refine`` points per factor 4."""
    if refine < 1:
        raise ArgumentError("time refinement must be >= 1", refine=refine)
    times = set()
    for j in range(grid.j_min - 3, grid.j_max + 3):
        for i in range(refine):
            if j == grid.j_min - 3 and i:
                continue
            times.add(4.0 ** (-(j - i / refine)) if i else 4.0 ** (-j))
    return sorted(times)


def sample_times(grid: Grid, refine: int = 1) -> List[float]:
    return [0.0] + dyadic_times(grid, refine)


def pairing(f: SpectralField, g: SpectralField) -> complex:
    """∫ f·conj(g) over the box."""
    f.require_same_grid(g)
    return complex(np.sum(f.coef * np.conj(g.coef)) * f.grid.volume)


def _node_term(u: Trajectory, v: Trajectory, tau: float, strict: bool) -> np.ndarray:
    a, b = u(tau), v(tau)
    grid = u.grid
    if a.rank == 0:
        values = padded_values(a) * padded_values(b)
    else:
        pa, pb = padded_values(a), padded_values(b)
        values = 0.5 * (pa[:, None] * pb[None, :] + pb[:, None] * pa[None, :])
    return product_from_values(grid, values, strict)


def bilinear_B(
    u: Trajectory,
    v: Trajectory,
    t: float,
    quad: Optional[TimeQuadrature] = None,
    sym: Optional[SymbolSpec] = None,
    strict: bool = False,
) -> SpectralField:
    """∫_0^t e^{(t−τ)Δ} P(D)(u(τ)v(τ)) dτ by the graded Gauss–Legendre rule.

    Products are projected onto the lattice; ``strict`` raises when that
    projection drops spectral content.
    """
    sym = sym or Scalar1()
    if u.grid != v.grid or u.components != v.components:
        raise GridMismatchError("bilinear_B inputs live on different grids")
    grid = u.grid
    out_components = (grid.dim,) if u.components else ()
    if t == 0:
        return SpectralField(grid, np.zeros(out_components + grid.shape))
    if t < 0:
        raise ArgumentError("bilinear_B needs t >= 0", t=t)
    if t > min(u.t_max, v.t_max) * (1 + 1e-12):
        raise ArgumentError("quadrature nodes leave the trajectory domain", t=t, t_max=min(u.t_max, v.t_max))
    quad = quad or TimeQuadrature(t)
    if not math.isclose(quad.t, t, rel_tol=1e-14):
        raise ArgumentError("quadrature was built for another time", quad_t=quad.t, t=t)

    xi_sq = grid.xi_sq
    terms = parallel_map(
        lambda node: node[1] * np.exp(-(t - node[0]) * xi_sq) * _node_term(u, v, node[0], strict),
        list(zip(quad.nodes, quad.weights)),
    )
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return sym.apply(SpectralField(grid, total, mean_zero=False))


def bilinear_trajectory(
    u: Trajectory,
    v: Trajectory,
    times: Sequence[float],
    order: int = DEFAULT_ORDER,
    sym: Optional[SymbolSpec] = None,
    strict: bool = False,
) -> Trajectory:
    """B(u, v) sampled on ``times`` (which start at 0)."""
    samples = [
        bilinear_B(u, v, t, TimeQuadrature(t, order) if t > 0 else None, sym, strict) for t in times
    ]
    return Trajectory.from_samples(times, samples)


def trajectory_norm(u: Trajectory, spec: DerivedCN, times: Iterable[float]) -> float:
    """sup over the sampled times of the time-weighted norm (the 𝓕-norm)."""
    return max((time_weighted_norm(u(t), t, spec) for t in times if t > 0), default=0.0)


class EpsilonFunction(BaseModel):
    """ε(s) = Σ_{n ≥ −4} η_n min(1, 4^n s) over the window of η."""

    model_config = ConfigDict(frozen=True)

    eta: EtaSequence

    def __call__(self, s: float) -> float:
        return epsilon_eval(self, s)


def epsilon_eval(eps: EpsilonFunction, s: float) -> float:
    if s < 0:
        raise ArgumentError("ε is defined for s >= 0", s=s)
    eta = eps.eta
    return float(sum(eta.at(n) * min(1.0, 4.0 ** n * s) for n in range(max(-4, eta.n_lo), eta.n_hi + 1)))


class BandDiagnostic(BaseModel):
    j: int
    t: float
    Rj: float
    Cj: float
    envelope: float
    ratio: float
    eps_envelope: Optional[float] = None
    eps_ratio: Optional[float] = None


def _check_diagnostic_band(grid: Grid, j: int) -> None:
    grid.check_band(j)
    if j > grid.j_max:
        raise AliasingError(f"band {j} of a product is not exactly resolved", ceiling=grid.j_max)


def band_diagnostics(
    u: Trajectory,
    v: Trajectory,
    t: float,
    j: int,
    spec: DerivedCN,
    eps: Optional[EpsilonFunction] = None,
    quad: Optional[TimeQuadrature] = None,
) -> BandDiagnostic:
    """R_j(t), C_j(t) by quadrature, against min(1, 4^j t)(1 + 2^j√t)^{−N} and ε(4^j t)(1 + 2^j√t)^{−N}.

    u and v are expected to be unit-normalized in the 𝓕-norm of ``spec``.
    """
    grid = u.grid
    _check_diagnostic_band(grid, j)
    quad = quad or TimeQuadrature(t)
    p = 2 * spec.N
    base = spec.base

    def weighted(node: Tuple[float, float]) -> Tuple[float, float]:
        tau, w = node
        a, b = u(tau), v(tau)
        weight = w * (1.0 + 2.0 ** j * math.sqrt(max(t - tau, 0.0))) ** (-p)
        low = b.with_coef(b.coef * band_symbol(grid, "low", j - 2))
        lowhigh = product(delta_j(a, j), low)
        r = norm(lowhigh.with_coef(lowhigh.coef, mean_zero=True), base)
        diagonal = bony_split(a, b, j).diagonal
        c = norm(diagonal, base)
        return weight * r, weight * c

    pieces = parallel_map(weighted, list(zip(quad.nodes, quad.weights)))
    r_j = 2.0 ** j * sum(r for r, _ in pieces)
    c_j = 2.0 ** j * sum(c for _, c in pieces)
    decay = (1.0 + 2.0 ** j * math.sqrt(t)) ** (-spec.N)
    envelope = min(1.0, 4.0 ** j * t) * decay
    row = BandDiagnostic(j=j, t=t, Rj=r_j, Cj=c_j, envelope=envelope, ratio=r_j / envelope)
    if eps is not None:
        eps_envelope = eps(4.0 ** j * t) * decay
        row.eps_envelope = eps_envelope
        row.eps_ratio = (r_j + c_j) / eps_envelope if eps_envelope > 0 else math.inf
    return row


def diagnostics_sweep(
    u: Trajectory,
    v: Trajectory,
    spec: DerivedCN,
    bands: Iterable[int],
    times: Iterable[float],
    eps: Optional[EpsilonFunction] = None,
    order: int = DEFAULT_ORDER,
) -> List[BandDiagnostic]:
    bands, times = list(bands), list(times)
    for j in bands:
        _check_diagnostic_band(u.grid, j)
    rows = []
    for j in bands:
        for t in times:
            rows.append(band_diagnostics(u, v, t, j, spec, eps, TimeQuadrature(t, order)))
    logger.info(f"✅ Band diagnostics: {len(rows)} (j, t) points")
    return rows


def write_diagnostics_csv(rows: List[BandDiagnostic], path) -> Path:
    path = Path(path)
    lines = ["j,t,Rj,Cj,envelope,ratio,eps_envelope,eps_ratio"]
    for r in rows:
        extra = ["" if x is None else f"{x:.17g}" for x in (r.eps_envelope, r.eps_ratio)]
        lines.append(
            f"{r.j},{r.t:.17g},{r.Rj:.17g},{r.Cj:.17g},{r.envelope:.17g},{r.ratio:.17g}," + ",".join(extra)
        )
    path.write_text("\n".join(lines) + "\n")
    return path
