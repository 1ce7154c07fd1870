import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from lab_service.errors import AliasingError, ArgumentError
from lab_service.norms import (
    BesovHom,
    FourierFq,
    Lebesgue,
    Lorentz,
    Morrey,
    SpaceSpec,
    exponent,
    format_space,
    norm,
)
from lab_service.spectral_core import (
    Grid,
    SpectralField,
    band_symbol,
    delta_j,
    from_physical,
    padded_values,
    product,
    product_from_values,
)
from lab_service.workers import parallel_map

logger = logging.getLogger(__name__)

ENSEMBLES = ("packet", "shell")


@dataclass(frozen=True)
class ProductSplit:
    """Δ_j(fg) as low-high + high-low + diagonal interactions."""

    j: int
    lowhigh: SpectralField
    highlow: SpectralField
    diagonal: SpectralField

    def total(self) -> SpectralField:
        return self.lowhigh + self.highlow + self.diagonal


def _check_product_band(grid: Grid, j: int) -> None:
    grid.check_band(j)
    if j > grid.j_max:
        raise AliasingError(f"band {j} of a product is not exactly resolved", ceiling=grid.j_max)


def _band_part(field: SpectralField, kind: str, k: int) -> SpectralField:
    return field.with_coef(field.coef * band_symbol(field.grid, kind, k), mean_zero=kind != "low" or field.mean_zero)


def bony_split(f: SpectralField, g: SpectralField, j: int) -> ProductSplit:
    f.require_same_grid(g)
    grid = f.grid
    _check_product_band(grid, j)
    lo, hi = grid.band_window
    near = [k for k in range(j - 2, j + 3) if lo <= k <= hi]

    def accumulate(pairs: Iterable[Tuple[SpectralField, SpectralField]]) -> np.ndarray:
        values = None
        for a, b in pairs:
            term = padded_values(a) * padded_values(b)
            values = term if values is None else values + term
        if values is None:
            return np.zeros(grid.shape, dtype=np.complex128)
        return product_from_values(grid, values)

    lowhigh = accumulate((_band_part(f, "delta", k), _band_part(g, "low", k - 2)) for k in near)
    highlow = accumulate((_band_part(f, "low", k - 2), _band_part(g, "delta", k)) for k in near)
    diagonal = accumulate(
        (_band_part(f, "delta", k), _band_part(g, "tilde", k)) for k in range(max(j - 4, lo), hi + 1)
    )
    window = band_symbol(grid, "delta", j)
    return ProductSplit(
        j=j,
        lowhigh=SpectralField(grid, lowhigh * window),
        highlow=SpectralField(grid, highlow * window),
        diagonal=SpectralField(grid, diagonal * window),
    )


def theory_rate(spec: SpaceSpec, dim: int, n: int) -> Optional[float]:
    """Decay of η_n known for the invariant spaces; None where no rate is tabulated."""
    if isinstance(spec, (Lebesgue, Lorentz)) and math.isclose(exponent(spec.p), dim):
        return 4.0 ** (-n)
    if isinstance(spec, Morrey) and spec.q >= 2:
        return 4.0 ** (-n)
    if isinstance(spec, BesovHom) and exponent(spec.p) >= 2:
        return 2.0 ** (-2.0 * dim * n / exponent(spec.p))
    if isinstance(spec, FourierFq):
        q = exponent(spec.q)
        inverse_conjugate = 1.0 - (0.0 if q == math.inf else 1.0 / q)
        return 2.0 ** (-dim * n * inverse_conjugate)
    return None


class EtaRow(BaseModel):
    n: int
    trials: int
    ratio_max: float
    ratio_median: float
    theory_rate: Optional[float] = None


class EtaMeasurement(BaseModel):
    space: str
    seed: int
    ensemble: str
    k: int
    rows: List[EtaRow] = []

    def slope(self) -> float:
        """Least-squares log2 slope of ratio_max against n."""
        if len(self.rows) < 2:
            raise ArgumentError("a slope needs at least two offsets")
        n = np.array([r.n for r in self.rows], dtype=float)
        y = np.log2([max(r.ratio_max, 1e-300) for r in self.rows])
        return float(np.polyfit(n, y, 1)[0])

    def to_csv(self, path) -> Path:
        path = Path(path)
        lines = ["n,trials,ratio_max,ratio_median,theory_rate"]
        for r in self.rows:
            rate = "" if r.theory_rate is None else f"{r.theory_rate:.17g}"
            lines.append(f"{r.n},{r.trials},{r.ratio_max:.17g},{r.ratio_median:.17g},{rate}")
        path.write_text("\n".join(lines) + "\n")
        return path


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _tilted(rng: np.random.Generator, omega: np.ndarray, cos_angle: float) -> np.ndarray:
    """Random unit vector making the given cosine with ``omega``."""
    r = rng.standard_normal(omega.size)
    r -= r.dot(omega) * omega
    r /= np.linalg.norm(r)
    return cos_angle * omega + math.sqrt(max(0.0, 1.0 - cos_angle ** 2)) * r


def _lattice(grid: Grid, xi: np.ndarray) -> np.ndarray:
    k = np.rint(xi * grid.box_l).astype(int)
    if np.any(np.abs(k) >= grid.n // 2):
        raise AliasingError("packet carrier falls off the lattice", ceiling=grid.j_max)
    return k


def wave_packet(grid: Grid, carrier: np.ndarray, center: np.ndarray, width: float) -> SpectralField:
    """e^{iξ·x}·exp(−|x − x₀|²/(2 width²)) with periodic |x − x₀| and lattice ξ."""
    half = 0.5 * grid.box_length
    phase = np.zeros(grid.shape)
    dist_sq = np.zeros(grid.shape)
    for axis, x in enumerate(grid.coordinates):
        offset = np.mod(x - center[axis] + half, grid.box_length) - half
        dist_sq = dist_sq + offset ** 2
        phase = phase + (carrier[axis] / grid.box_l) * x
    values = np.exp(1j * phase - dist_sq / (2.0 * width ** 2))
    return from_physical(grid, values, mean_zero=False)


def _normalized(field: SpectralField, spec: SpaceSpec) -> Optional[SpectralField]:
    size = norm(field, spec)
    if size == 0 or not math.isfinite(size):
        return None
    return field / size


def _packet_pair(grid: Grid, rng, k: int, j: int, envelope: float) -> Tuple[SpectralField, SpectralField]:
    n = k - j
    omega = _unit(rng, grid.dim)
    omega_g = _tilted(rng, omega, 2.0 ** (-n - 1))
    carrier_f = _lattice(grid, 2.0 ** k * omega)
    carrier_g = _lattice(grid, -(2.0 ** k) * omega + 2.0 ** j * omega_g)
    center = rng.uniform(0.0, grid.box_length, grid.dim)
    width = envelope * 2.0 ** (-j)
    f = delta_j(wave_packet(grid, carrier_f, center, width), k)
    g = delta_j(wave_packet(grid, carrier_g, center, width), k)
    return f, g


def _shell_field(grid: Grid, rng, k: int) -> SpectralField:
    phases = np.exp(2j * np.pi * rng.uniform(size=grid.shape))
    field = SpectralField(grid, phases * band_symbol(grid, "delta", k))
    return from_physical(grid, field.values.real)


def compatibility_ratio(spec: SpaceSpec, f: SpectralField, g: SpectralField, k: int, j: int) -> float:
    """‖Δ_j(fg)‖_E / (4^k 2^{−j} ‖f‖_E ‖g‖_E)."""
    _check_product_band(f.grid, j)
    denominator = 4.0 ** k * 2.0 ** (-j) * norm(f, spec) * norm(g, spec)
    if denominator == 0:
        return 0.0
    return norm(delta_j(product(f, g), j), spec) / denominator


def eta_estimate(
    spec: SpaceSpec,
    grid: Grid,
    offsets: Iterable[int] = range(0, 5),
    trials: int = 50,
    seed: int = 0,
    k: Optional[int] = None,
    ensemble: str = "packet",
    envelope: float = 4.0,
) -> EtaMeasurement:
    """Measure η_n as the sup of the normalized band-product ratio.

    ``packet`` pairs opposite carriers in Γ_k whose product lands in Γ_{k−n};
    ``shell`` draws independent random-phase fields on Γ_k.
    """
    if trials < 1:
        raise ArgumentError("eta_estimate needs at least one trial", trials=trials)
    if ensemble not in ENSEMBLES:
        raise ArgumentError(f"unknown ensemble '{ensemble}'", choices=", ".join(ENSEMBLES))
    k = grid.j_max if k is None else k
    _check_product_band(grid, k)
    offsets = list(offsets)
    for n in offsets:
        _check_product_band(grid, k - n)

    label = format_space(spec)
    logger.info(f"🔄 η scan for {label}: k={k}, offsets={offsets}, {trials} trials, {ensemble} ensemble")
    measurement = EtaMeasurement(space=label, seed=seed, ensemble=ensemble, k=k)
    for n in offsets:
        j = k - n

        def one(trial: int) -> Optional[float]:
            rng = np.random.default_rng((seed, n + 1000, trial))
            if ensemble == "packet":
                f, g = _packet_pair(grid, rng, k, j, envelope)
            else:
                f, g = _shell_field(grid, rng, k), _shell_field(grid, rng, k)
            f, g = _normalized(f, spec), _normalized(g, spec)
            if f is None or g is None:
                return None
            return norm(delta_j(product(f, g), j), spec) / (4.0 ** k * 2.0 ** (-j))

        ratios = [r for r in parallel_map(one, range(trials)) if r is not None]
        row = EtaRow(
            n=n,
            trials=len(ratios),
            ratio_max=float(np.max(ratios)) if ratios else 0.0,
            ratio_median=float(np.median(ratios)) if ratios else 0.0,
            theory_rate=theory_rate(spec, grid.dim, n),
        )
        logger.debug(f"📊 n={n}: max {row.ratio_max:.4g}, median {row.ratio_median:.4g}")
        measurement.rows.append(row)
    logger.info(f"✅ η scan done for {label}")
    return measurement


def separation_constant(
    spec: SpaceSpec,
    grid: Grid,
    k: int,
    l: int,
    trials: int = 50,
    seed: int = 0,
    envelope: float = 4.0,
) -> float:
    """max ‖fg‖_E / (2^l ‖f‖_E ‖g‖_E) for f in Γ_k, g in Γ_l, l ≤ k − 3."""
    if trials < 1:
        raise ArgumentError("separation_constant needs at least one trial", trials=trials)
    if l > k - 3:
        raise ArgumentError("spectral separation needs l <= k - 3", k=k, l=l)
    _check_product_band(grid, k)
    if k + 1 > grid.j_max:
        raise AliasingError("product of band k spills above the exact window", ceiling=grid.j_max - 1)
    width = envelope * 2.0 ** (-l)

    def one(trial: int) -> float:
        rng = np.random.default_rng((seed, trial))
        center = rng.uniform(0.0, grid.box_length, grid.dim)
        f = delta_j(wave_packet(grid, _lattice(grid, 2.0 ** k * _unit(rng, grid.dim)), center, width), k)
        g = delta_j(wave_packet(grid, _lattice(grid, 2.0 ** l * _unit(rng, grid.dim)), center, width), l)
        f, g = _normalized(f, spec), _normalized(g, spec)
        if f is None or g is None:
            return 0.0
        fg = product(f, g)
        return norm(fg.with_coef(fg.coef, mean_zero=True), spec) / 2.0 ** l

    ratios = parallel_map(one, range(trials))
    best = float(max(ratios))
    logger.info(f"✅ Separation constant for {format_space(spec)} (k={k}, l={l}): {best:.4g}")
    return best
