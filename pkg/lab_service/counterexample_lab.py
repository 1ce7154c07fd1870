import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy import integrate
from scipy.special import logsumexp

from lab_service.duhamel import TimeQuadrature, Trajectory, bilinear_B, pairing
from lab_service.errors import ArgumentError, PreconditionError
from lab_service.norms import BesovHom, EtaSequence, ball_means, magnitude, norm
from lab_service.spectral_core import Grid, SpectralField, delta_j, from_physical, product, translate
from lab_service.workers import parallel_map

logger = logging.getLogger(__name__)

# Ḃ^{−1,∞}_∞, the space in which the blowup pair stays bounded
B_MINUS_ONE = BesovHom(s=-1.0, p="inf", q="inf")


# ---------------------------------------------------------------------------
# Blowup pair
# ---------------------------------------------------------------------------


def default_profile(grid: Grid) -> SpectralField:
    """φ = 1 + cos(x₂): real, spectrum in the unit ball."""
    return from_physical(grid, 1.0 + np.cos(grid.coordinates[1] / grid.box_l), mean_zero=False)


@dataclass(frozen=True)
class BlowupPair:
    """f = 2^k e^{−i2^k x₁}φ, g = 2^k e^{+i2^k x₁}φ, so fg = 4^k φ²."""

    k: int
    phi: SpectralField

    def _modulated(self, sign: int) -> SpectralField:
        grid = self.phi.grid
        shift = int(round(2.0 ** self.k * grid.box_l))
        coef = np.roll(self.phi.coef, sign * shift, axis=grid.axes[0]) * 2.0 ** self.k
        return SpectralField(grid, coef, mean_zero=False)

    @cached_property
    def f(self) -> SpectralField:
        return self._modulated(-1)

    @cached_property
    def g(self) -> SpectralField:
        return self._modulated(+1)

    def norms(self) -> Tuple[float, float]:
        as_mean_zero = lambda h: h.with_coef(h.coef, mean_zero=True)
        return norm(as_mean_zero(self.f), B_MINUS_ONE), norm(as_mean_zero(self.g), B_MINUS_ONE)


def prop19_pair(k: int, phi: Optional[SpectralField] = None, grid: Optional[Grid] = None) -> BlowupPair:
    if phi is None:
        if grid is None:
            raise ArgumentError("give a profile or a grid to build the default one")
        phi = default_profile(grid)
    grid = phi.grid
    if not grid.j_min <= k <= grid.j_max - 1:
        raise ArgumentError(
            "band k must satisfy j_min <= k <= j_max − 1",
            k=k,
            j_min=grid.j_min,
            ceiling=grid.j_max - 1,
        )
    spread = np.abs(phi.coef) > 1e-14 * max(float(np.max(np.abs(phi.coef))), 1e-300)
    if np.any(spread & (grid.xi_sq > 1.0 + 1e-12)):
        raise PreconditionError("profile spectrum leaves the unit ball")
    return BlowupPair(k, phi)


def prop19_ratio(k: int, phi: Optional[SpectralField] = None, grid: Optional[Grid] = None) -> float:
    """‖Δ₀(fg)‖_∞ for the blowup pair at band k; equals 4^k ‖Δ₀(φ²)‖_∞."""
    pair = prop19_pair(k, phi, grid)
    fg = product(pair.f, pair.g)
    value = float(np.max(np.abs(delta_j(fg, 0).values)))
    logger.debug(f"📊 Blowup pair k={k}: ‖Δ₀(fg)‖_∞ = {value:.6g}")
    return value


class SharpnessRow(BaseModel):
    k: int
    ratio: float
    floor: float
    f_norm: float
    g_norm: float


def prop19_sharpness(k: int, phi: Optional[SpectralField] = None, grid: Optional[Grid] = None) -> SharpnessRow:
    """Normalized Ḃ^{−1,∞}_∞ ratio of Δ₀(fg) for the blowup pair at n = k.

    ``floor`` is ½‖Δ₀(φ²)‖_∞/‖φ‖_∞², which the ratio stays above for every k.
    """
    pair = prop19_pair(k, phi, grid)
    f_norm, g_norm = pair.norms()
    low = delta_j(product(pair.f, pair.g), 0)
    ratio = norm(low, B_MINUS_ONE) / (4.0 ** k * f_norm * g_norm)
    phi_sup = float(np.max(np.abs(pair.phi.values)))
    square_band = float(np.max(np.abs(delta_j(product(pair.phi, pair.phi), 0).values)))
    floor = 0.5 * square_band / phi_sup ** 2
    logger.debug(f"📊 Blowup pair k={k}: normalized ratio {ratio:.4g} against floor {floor:.4g}")
    return SharpnessRow(k=k, ratio=ratio, floor=floor, f_norm=f_norm, g_norm=g_norm)


# ---------------------------------------------------------------------------
# δ-sequence
# ---------------------------------------------------------------------------


def tail_verdict(values: Sequence[float], threshold: float = 0.9) -> Tuple[bool, float]:
    """(summable, worst ratio) from a_{m+1}/a_m over the last half of the sequence."""
    values = [float(v) for v in values]
    tail = values[len(values) // 2 :]
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(tail, tail[1:])]
    worst = max(ratios, default=0.0)
    return worst <= threshold, worst


class DeltaSequence(BaseModel):
    """δ_j² from an η on its window, with the partial sums and per-n slack."""

    eta: EtaSequence
    j0: int
    sigma: Dict[int, float]
    delta_sq: Dict[int, float]
    partial_sums: Dict[int, float]
    slack: Dict[int, float]
    hypothesis_terms: Dict[int, float]
    hypothesis_holds: bool

    def coefficient(self, j: int) -> float:
        if j not in self.delta_sq:
            raise ArgumentError("shell index outside the δ window", j=j, window=f"[{self.j0}, {max(self.delta_sq)}]")
        return math.sqrt(self.delta_sq[j])

    def abel_partial_sum(self, J: int) -> float:
        """Σ_{j0 ≤ j ≤ J} δ_j² rebuilt from σ by summation by parts."""
        head = math.fsum((1.0 - 2.0 ** -3) * 2.0 ** (-3 * j) * self.sigma[j] for j in range(self.j0, J))
        return head + 2.0 ** (-3 * J) * self.sigma[J]


def delta_sequence(eta: EtaSequence, window: Optional[Tuple[int, int]] = None, j0: int = 4) -> DeltaSequence:
    """σ_n = inf_{k ≥ n} 2^{3k}η_k², δ_{j0}² = 2^{−3j0}σ_{j0}, δ_j² = 2^{−3j}(σ_j − σ_{j−1})."""
    lo, hi = window or (j0, eta.n_hi)
    lo = max(lo, j0)
    if hi <= lo:
        raise ArgumentError("δ window is empty", window=(lo, hi))
    values = [eta.at(n) for n in range(lo, hi + 1)]
    if any(v <= 0 for v in values):
        raise PreconditionError("η must be positive on the window")
    if not all(b <= a for a, b in zip(values, values[1:])):
        raise PreconditionError("η must be nonincreasing")
    if not eta.is_regular():
        raise PreconditionError("η must be regular (bounded neighbor ratios)")

    weighted = {n: 2.0 ** (3 * n) * eta.at(n) ** 2 for n in range(lo, hi + 1)}
    sigma, running = {}, math.inf
    for n in range(hi, lo - 1, -1):
        running = min(running, weighted[n])
        sigma[n] = running
    sigma = dict(sorted(sigma.items()))

    delta_sq = {lo: 2.0 ** (-3 * lo) * sigma[lo]}
    for j in range(lo + 1, hi + 1):
        delta_sq[j] = 2.0 ** (-3 * j) * (sigma[j] - sigma[j - 1])

    partial, total = {}, []
    for j in range(lo, hi + 1):
        total.append(delta_sq[j])
        partial[j] = math.fsum(total)
    slack = {
        n: eta.at(n) ** 2 - math.fsum(2.0 ** (3 * (j - n)) * delta_sq[j] for j in range(lo, n + 1))
        for n in range(lo, hi + 1)
    }
    terms = {n: 2.0 ** (-3 * n) * sigma[n] for n in range(lo, hi + 1)}
    summable, worst = tail_verdict(list(terms.values()))
    result = DeltaSequence(
        eta=eta,
        j0=lo,
        sigma=sigma,
        delta_sq=delta_sq,
        partial_sums=partial,
        slack=slack,
        hypothesis_terms=terms,
        hypothesis_holds=not summable,
    )
    verdict = "holds" if result.hypothesis_holds else "fails"
    logger.info(f"✅ δ-sequence on [{lo}, {hi}]: Σδ² = {partial[hi]:.6g}, divergence hypothesis {verdict} (tail ratio {worst:.3f})")
    return result


# ---------------------------------------------------------------------------
# Orthonormal bump and lacunary fields
# ---------------------------------------------------------------------------


def _integer_period(grid: Grid) -> int:
    period = grid.box_length
    if not math.isclose(period, round(period), rel_tol=1e-12):
        raise ArgumentError("lattice bumps need an integer box period", period=period)
    return int(round(period))


def _log_bump(radius: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """log ĥ for the radial bump exp(−1/(s(1−s))), s = (|ξ| − inner)/(outer − inner)."""
    s = (radius - inner) / (outer - inner)
    out = np.full(radius.shape, -np.inf)
    inside = (s > 0) & (s < 1)
    out[inside] = -1.0 / (s[inside] * (1.0 - s[inside]))
    return out


@dataclass(frozen=True)
class OrthonormalBump:
    """m with Σ_l |m̂(ξ + 2πl)|² = 1, built in log space.

    ĥ is supported in 2π ≤ |ξ| ≤ 8π; σ(ξ) = Σ_l e^{−2|ξ+2πl|²}|ĥ(ξ+2πl)|²,
    m̂₀ = σ^{−1/2}ĥ and m̂ = e^{−|ξ|²}m̂₀. On a box of integer period P the
    periodized bump has coefficients m̂(2πk/P)/P^d.
    """

    dim: int = 2
    inner: float = 2.0 * math.pi
    outer: float = 8.0 * math.pi
    reach: int = 5

    def _shifts(self) -> np.ndarray:
        axis = np.arange(-self.reach, self.reach + 1)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1) * 2.0 * math.pi

    def _log_weight(self, xi: np.ndarray) -> np.ndarray:
        """log(e^{−2|ξ|²}|ĥ(ξ)|²) for ξ of shape (..., d)."""
        r_sq = np.sum(xi ** 2, axis=-1)
        return -2.0 * r_sq + 2.0 * _log_bump(np.sqrt(r_sq), self.inner, self.outer)

    def log_sigma(self, xi: np.ndarray) -> np.ndarray:
        """log σ(ξ); σ is 2π-periodic in every coordinate."""
        xi = np.mod(np.asarray(xi, dtype=float), 2.0 * math.pi)
        shifted = xi[..., None, :] + self._shifts()
        return logsumexp(self._log_weight(shifted), axis=-1)

    def log_m_hat(self, xi: np.ndarray, log_sigma: Optional[np.ndarray] = None) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        log_sigma = self.log_sigma(xi) if log_sigma is None else log_sigma
        return 0.5 * self._log_weight(xi) - 0.5 * log_sigma

    def m_hat(self, xi: np.ndarray) -> np.ndarray:
        return np.exp(self.log_m_hat(xi))

    def partition_error(self, samples: int = 16) -> float:
        """max |Σ_l |m̂(ξ + 2πl)|² − 1| over a uniform sample of one period cell."""
        axis = (np.arange(samples) + 0.5) * (2.0 * math.pi / samples)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        xi = np.stack([m.reshape(-1) for m in mesh], axis=1)
        log_sigma = self.log_sigma(xi)
        shifted = xi[:, None, :] + self._shifts()
        total = logsumexp(2.0 * self.log_m_hat(shifted, log_sigma[:, None]), axis=-1)
        return float(np.max(np.abs(np.expm1(total))))

    def grid_for(self, period: int, n: int) -> Grid:
        """Box of integer period P; needs N/2 above the outer radius in lattice units."""
        if period < 1:
            raise ArgumentError("period must be a positive integer", period=period)
        if self.outer * period / (2.0 * math.pi) >= n // 2:
            raise ArgumentError("grid too coarse for the bump spectrum", period=period, n=n)
        return Grid(self.dim, n, period / (2.0 * math.pi))

    def periodized(self, grid: Grid) -> SpectralField:
        period = _integer_period(grid)
        if grid.dim != self.dim:
            raise ArgumentError("bump and grid dimensions differ", bump=self.dim, grid=grid.dim)
        residues = np.arange(period)
        mesh = np.meshgrid(*([residues] * self.dim), indexing="ij")
        cell = np.stack(mesh, axis=-1) * (2.0 * math.pi / period)
        log_sigma_cell = self.log_sigma(cell)
        k = np.meshgrid(*grid.wavenumbers, indexing="ij")
        lookup = tuple(np.mod(ki.astype(int), period) for ki in k)
        xi = np.stack(k, axis=-1) * (2.0 * math.pi / period)
        m_hat = np.exp(self.log_m_hat(xi, log_sigma_cell[lookup]))
        return SpectralField(grid, m_hat / period ** self.dim, mean_zero=False)

    def shifted(self, grid: Grid, site: Sequence[int]) -> SpectralField:
        """m(· − l) for an integer lattice site l."""
        cells = grid.n / grid.box_length
        shift = [int(round(c * cells)) for c in site]
        return translate(self.periodized(grid), shift)

    def gram(self, grid: Grid, sites: Sequence[Sequence[int]]) -> np.ndarray:
        fields = [self.shifted(grid, s) for s in sites]
        return np.array([[pairing(a, b).real for b in fields] for a in fields])


def cone_shell(j: int, x1: float, alpha: float, dim: int) -> List[Tuple[int, ...]]:
    """Lattice sites with l₁ ∈ 2^j x₁ ± α2^j/√2 and |l_i| ≤ α2^j/√2 for i ≥ 2."""
    half = alpha * 2.0 ** j / math.sqrt(2.0)
    first = range(math.ceil(2.0 ** j * x1 - half), math.floor(2.0 ** j * x1 + half) + 1)
    rest = range(math.ceil(-half), math.floor(half) + 1)
    axes = [first] + [rest] * (dim - 1)
    mesh = np.meshgrid(*[np.array(a) for a in axes], indexing="ij")
    return [tuple(int(c) for c in site) for site in np.stack([m.reshape(-1) for m in mesh], axis=1)]


class LacunaryResult(BaseModel):
    shells: List[int]
    sites: int
    constant: float
    per_radius: Dict[int, float]


def lacunary_field(
    delta: DeltaSequence,
    signs: Callable[[Tuple[int, ...]], float],
    x1: float,
    bump: OrthonormalBump,
    grid: Grid,
    shells: Sequence[int],
    alpha: float = 0.5,
) -> SpectralField:
    """Σ_j Σ_{l ∈ Λ_j} ε_l δ_j m(y − l) on the integer-period box of ``grid``."""
    period = _integer_period(grid)
    sites_by_shell = {j: cone_shell(j, x1, alpha, grid.dim) for j in shells}
    all_sites = [s for sites in sites_by_shell.values() for s in sites]
    if all_sites:
        span = np.ptp(np.array(all_sites), axis=0)
        if np.any(span + 4 >= period):
            raise ArgumentError("shells overflow the box", span=tuple(int(s) for s in span), period=period)

    base = bump.periodized(grid)
    cells = grid.n / period
    coef = np.zeros(grid.shape, dtype=np.complex128)
    mesh = np.meshgrid(*grid.wavenumbers, indexing="ij", sparse=True)
    for j, sites in sites_by_shell.items():
        c = delta.coefficient(j)
        for site in sites:
            eps = float(signs(site))
            if eps == 0 or c == 0:
                continue
            phase = sum(k * (round(s * cells) / grid.n) for k, s in zip(mesh, site))
            coef = coef + eps * c * base.coef * np.exp(-2j * np.pi * phase)
    logger.debug(f"🧪 Lacunary field: {len(all_sites)} sites over shells {list(shells)}")
    return SpectralField(grid, coef, mean_zero=False)


def ball_criterion(
    field: SpectralField,
    eta: EtaSequence,
    radii_exponents: Optional[Sequence[int]] = None,
    shells: Sequence[int] = (),
    sites: int = 0,
) -> LacunaryResult:
    """max over y₀ and k of ⨍_{B(y₀, 2^k)} |a|² / η_k²."""
    grid = field.grid
    power = magnitude(field.values, grid) ** 2
    if radii_exponents is None:
        top = math.floor(math.log2(math.pi * grid.box_l) + 1e-12)
        radii_exponents = range(0, top + 1)
    per_radius = {}
    for k in radii_exponents:
        level = eta.meta_at(k) ** 2
        mean = float(np.max(ball_means(power, grid, 2.0 ** k)))
        per_radius[int(k)] = mean / level if level > 0 else (0.0 if mean == 0 else math.inf)
    return LacunaryResult(shells=list(shells), sites=sites, constant=max(per_radius.values(), default=0.0), per_radius=per_radius)


def random_signs(seed: int) -> Callable[[Tuple[int, ...]], float]:
    """Reproducible ±1 per lattice site."""

    def sign(site: Tuple[int, ...]) -> float:
        rng = np.random.default_rng((seed,) + tuple(int(c) + 1_000_000 for c in site))
        return 1.0 if rng.random() < 0.5 else -1.0

    return sign


# ---------------------------------------------------------------------------
# Duhamel kernel lower bound
# ---------------------------------------------------------------------------


class ThetaProfile(BaseModel):
    """θ(x) = φ(x₁)ψ′(x′) with Gaussian φ (∫φ = 1) and Gaussian ψ′."""

    width: float = 0.25
    transverse: float = 1.0

    def phi(self, s: float) -> float:
        return math.exp(-0.5 * (s / self.width) ** 2) / (self.width * math.sqrt(2.0 * math.pi))

    def psi(self, y: np.ndarray) -> float:
        return math.exp(-0.5 * float(np.sum(np.asarray(y) ** 2)) / self.transverse ** 2)

    def __call__(self, x: np.ndarray) -> float:
        return self.phi(float(x[0])) * self.psi(x[1:])


class KernelBound(BaseModel):
    x1: float
    site: Tuple[float, ...]
    value: float
    sign: int
    ratio: float
    in_hypothesis: bool
    distance: float


def segment_distance(x: np.ndarray, l: np.ndarray) -> float:
    """d(x, [0, l])."""
    tau = float(np.clip(np.dot(x, l) / np.dot(l, l), 0.0, 1.0))
    return float(np.linalg.norm(x - tau * l))


def kernel_lower_bound(
    x1: float,
    l: Sequence[float],
    theta: Optional[ThetaProfile] = None,
    alpha: float = 0.5,
) -> KernelBound:
    """|∫₀¹ θ(x − τl) τ² dτ| for x = (x₁, 0, …) and its ratio to x₁²/l₁³.

    The sign of the integral is the sign attached to the site l.
    """
    theta = theta or ThetaProfile()
    l = np.asarray(l, dtype=float)
    if x1 <= 0 or l[0] <= 0:
        raise ArgumentError("need x₁ > 0 and l₁ > 0", x1=x1, l1=float(l[0]))
    x = np.zeros_like(l)
    x[0] = x1
    integrand = lambda tau: theta(x - tau * l) * tau ** 2
    peak = min(max(x1 / l[0], 0.0), 1.0)
    value, _ = integrate.quad(integrand, 0.0, 1.0, points=[peak] if 0.0 < peak < 1.0 else None, limit=200, epsabs=1e-15, epsrel=1e-11)
    distance = segment_distance(x, l)
    inside = bool(l[0] >= 4.0 * x1 and distance <= alpha)
    if not inside:
        logger.debug(f"⚠️ Site {tuple(l)} is outside the cone for x₁={x1}")
    return KernelBound(
        x1=x1,
        site=tuple(float(c) for c in l),
        value=abs(value),
        sign=int(np.sign(value)),
        ratio=abs(value) / (x1 ** 2 / l[0] ** 3),
        in_hypothesis=inside,
        distance=distance,
    )


def cone_sample(count: int = 20, dim: int = 3, alpha: float = 0.5, seed: int = 0) -> List[Tuple[float, Tuple[float, ...]]]:
    """(x₁, l) pairs with l₁ ≥ 4x₁ and d(x, [0, l]) ≤ α."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        x1 = float(rng.uniform(0.5, 2.0))
        l1 = float(rng.uniform(4.0 * x1, 16.0 * x1))
        rest = rng.uniform(-alpha, alpha, dim - 1)
        l = np.concatenate([[l1], rest])
        x = np.zeros(dim)
        x[0] = x1
        if segment_distance(x, l) <= alpha:
            out.append((x1, tuple(float(c) for c in l)))
    return out


def kernel_sweep(samples: Sequence[Tuple[float, Sequence[float]]], theta: Optional[ThetaProfile] = None, alpha: float = 0.5) -> List[KernelBound]:
    rows = parallel_map(lambda s: kernel_lower_bound(s[0], s[1], theta, alpha), list(samples))
    inside = [r.ratio for r in rows if r.in_hypothesis]
    if inside:
        logger.info(f"✅ Kernel sweep: β = {min(inside):.4g} over {len(inside)} sites in the cone")
    return rows


# ---------------------------------------------------------------------------
# Solver-side pairing on a finite shell
# ---------------------------------------------------------------------------


class PairingRow(BaseModel):
    x1: float
    value: float
    imag: float
    b_sup: float
    ratio: float


class PairingDemo(BaseModel):
    shells: List[int]
    sites: int
    order: int
    delta_energy: float
    rows: List[PairingRow]


def gaussian_test_function(grid: Grid, width: float = 1.0) -> SpectralField:
    """Periodized Gaussian ψ with ∫ψ = 1, centred at the origin."""
    coef = np.exp(-0.5 * width ** 2 * grid.xi_sq) / grid.volume
    return SpectralField(grid, coef.astype(np.complex128), mean_zero=False)


def pairing_demo(
    delta: DeltaSequence,
    signs: Callable[[Tuple[int, ...]], float],
    x1: float,
    bump: OrthonormalBump,
    grid: Grid,
    shells: Sequence[int],
    alpha: float = 0.5,
    points: Optional[Sequence[float]] = None,
    order: int = 16,
) -> PairingDemo:
    """ψ∗B(u, u)(1)(x) for the heat flow u of a finite-shell lacunary field.

    Evaluated at x = (x₁, 0, …) as ⟨B(u, u)(1), ψ(· − x)⟩. Report only.
    """
    field = lacunary_field(delta, signs, x1, bump, grid, shells, alpha)
    u = Trajectory.heat_flow(field)
    b = bilinear_B(u, u, 1.0, TimeQuadrature(1.0, order))
    b_sup = float(np.max(magnitude(b.values, grid)))
    psi = gaussian_test_function(grid)
    cells = grid.n / grid.box_length
    energy = math.fsum(delta.delta_sq[j] for j in shells)
    rows = []
    for x in points or (x1,):
        shift = (int(round(x * cells)),) + (0,) * (grid.dim - 1)
        value = pairing(b, translate(psi, shift))
        rows.append(
            PairingRow(
                x1=float(x),
                value=value.real,
                imag=value.imag,
                b_sup=b_sup,
                ratio=abs(value) / energy if energy > 0 else math.inf,
            )
        )
    sites = sum(len(cone_shell(j, x1, alpha, grid.dim)) for j in shells)
    logger.info(f"📊 Pairing on {sites} sites: ψ∗B(u,u)(1)(x₁) = {rows[0].value:.4g}")
    return PairingDemo(shells=list(shells), sites=sites, order=order, delta_energy=energy, rows=rows)
