import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import ClassVar, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft as sfft

from lab_service.errors import (
    AliasingError,
    ArgumentError,
    BandRangeError,
    GridMismatchError,
    ShapeError,
)
from lab_service.workers import get_thread_cap

logger = logging.getLogger(__name__)

# slack when rounding log2 of the box size to band indices
LOG_TOL = 1e-12


def fft_forward(values: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    return sfft.fftn(values, axes=axes, norm="forward", workers=get_thread_cap())


def fft_inverse(coef: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    return sfft.ifftn(coef, axes=axes, norm="forward", workers=get_thread_cap())


@dataclass(frozen=True)
class Grid:
    """Periodic box [0, 2πL)^d sampled with N points per axis.

    Frequencies live on the lattice ξ = k/L with integer k in FFT order.
    """

    dim: int = 2
    n: int = 64
    box_l: float = 1.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ArgumentError("grid dimension must be 2 or 3", dim=self.dim)
        if self.n < 8 or self.n & (self.n - 1):
            raise ArgumentError("points per axis must be a power of two >= 8", n=self.n)
        if not (self.box_l > 0 and math.isfinite(self.box_l)):
            raise ArgumentError("box half-period L must be positive", box_l=self.box_l)
        object.__setattr__(self, "box_l", float(self.box_l))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def axes(self) -> Tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def box_length(self) -> float:
        return 2.0 * math.pi * self.box_l

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def j_min(self) -> int:
        return math.ceil(-math.log2(self.box_l) - LOG_TOL) + 1

    @property
    def j_max(self) -> int:
        return math.floor(math.log2(self.n / (2.0 * self.box_l)) + LOG_TOL) - 1

    @property
    def band_window(self) -> Tuple[int, int]:
        """Bands accepted by direct calls; every lattice mode but 0 lives in them."""
        return self.j_min - 2, self.j_max + 2

    @property
    def data_bands(self) -> range:
        lo, hi = self.band_window
        return range(lo, hi + 1)

    @property
    def resolved_bands(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def check_band(self, j: int) -> None:
        lo, hi = self.band_window
        if not lo <= j <= hi:
            raise BandRangeError(f"band {j} is outside the resolvable window", lo, hi)

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, ...]:
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        return tuple(k for _ in range(self.dim))

    @cached_property
    def xi(self) -> Tuple[np.ndarray, ...]:
        """Sparse, broadcastable frequency components k_i / L."""
        mesh = np.meshgrid(*self.wavenumbers, indexing="ij", sparse=True)
        return tuple(component / self.box_l for component in mesh)

    @cached_property
    def xi_sq(self) -> np.ndarray:
        total = np.zeros(self.shape)
        for component in self.xi:
            total = total + component ** 2
        total.setflags(write=False)
        return total

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij", sparse=True))

    def padded(self) -> "Grid":
        return Grid(self.dim, 2 * self.n, self.box_l)

    def describe(self) -> Dict[str, object]:
        return {
            "dim": self.dim,
            "n": self.n,
            "box_l": self.box_l,
            "j_min": self.j_min,
            "j_max": self.j_max,
        }


def _rho(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    positive = s > 0
    out[positive] = np.exp(-1.0 / s[positive])
    return out


@dataclass(frozen=True)
class CutoffProfile:
    """φ⁰ = 1 on [0, ¼], 0 on [1, ∞), smooth monotone gluing in between."""

    lower: ClassVar[float] = 0.25
    upper: ClassVar[float] = 1.0

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        out = np.where(flat <= self.lower, 1.0, 0.0)
        mid = (flat > self.lower) & (flat < self.upper)
        a = _rho(self.upper - flat[mid])
        b = _rho(flat[mid] - self.lower)
        out[mid] = a / (a + b)
        out = out.reshape(t.shape)
        return float(out) if out.ndim == 0 else out

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        return self.phi(t / 4.0) - self.phi(t)

    def partition_residual(self, t, j_lo: int, j_hi: int):
        """|Σ_{j_lo ≤ j ≤ j_hi} ψ⁰(4^{-j} t) − 1|."""
        t = np.asarray(t, dtype=float)
        total = sum(self.psi(t * 4.0 ** (-j)) for j in range(j_lo, j_hi + 1))
        return np.abs(total - 1.0)


CUTOFF = CutoffProfile()


@lru_cache(maxsize=1024)
def band_symbol(grid: Grid, kind: str, j: int) -> np.ndarray:
    """Multiplier of Δ_j ("delta"), S_j ("low") or Δ̃_j ("tilde") on the lattice."""
    if kind == "delta":
        sym = CUTOFF.psi(grid.xi_sq * 4.0 ** (-j))
    elif kind == "low":
        sym = CUTOFF.phi(grid.xi_sq * 4.0 ** (-j))
    elif kind == "tilde":
        sym = CUTOFF.phi(grid.xi_sq * 4.0 ** (-(j + 3))) - CUTOFF.phi(grid.xi_sq * 4.0 ** (-(j - 2)))
    else:
        raise ArgumentError(f"unknown band operator '{kind}'")
    sym = np.asarray(sym, dtype=float)
    sym.setflags(write=False)
    return sym


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier-series amplitudes: f(x) = Σ_ξ coef(ξ) e^{iξ·x}.

    Leading axes beyond the grid axes are components (vector or tensor
    fields). With ``mean_zero`` set, the zero mode is forced to 0.
    """

    grid: Grid
    coef: np.ndarray
    mean_zero: bool = True

    def __post_init__(self):
        coef = np.array(self.coef, dtype=np.complex128)
        dim = self.grid.dim
        if coef.shape[coef.ndim - dim:] != self.grid.shape or coef.ndim > dim + 2:
            raise ShapeError(
                "coefficient array does not match the grid",
                shape=coef.shape,
                grid=self.grid.shape,
            )
        if not np.all(np.isfinite(coef)):
            raise ArgumentError("coefficients must be finite")
        if self.mean_zero:
            coef[(Ellipsis,) + (0,) * dim] = 0.0
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @property
    def rank(self) -> int:
        return self.coef.ndim - self.grid.dim

    @property
    def zero_mode(self) -> np.ndarray:
        return self.coef[(Ellipsis,) + (0,) * self.grid.dim]

    @cached_property
    def values(self) -> np.ndarray:
        out = fft_inverse(self.coef, self.grid.axes)
        out.setflags(write=False)
        return out

    def with_coef(self, coef: np.ndarray, mean_zero: Optional[bool] = None) -> "SpectralField":
        return SpectralField(self.grid, coef, self.mean_zero if mean_zero is None else mean_zero)

    def require_same_grid(self, other: "SpectralField") -> None:
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids", left=self.grid, right=other.grid)
        if self.coef.shape != other.coef.shape:
            raise ShapeError("fields have different component shapes")

    def is_negligible_mean(self, rel_tol: float = 1e-10) -> bool:
        scale = float(np.max(np.abs(self.coef))) if self.coef.size else 0.0
        return bool(np.all(np.abs(self.zero_mode) <= rel_tol * scale + 1e-300))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self.require_same_grid(other)
        return SpectralField(self.grid, self.coef + other.coef, self.mean_zero and other.mean_zero)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self.require_same_grid(other)
        return SpectralField(self.grid, self.coef - other.coef, self.mean_zero and other.mean_zero)

    def __neg__(self) -> "SpectralField":
        return self.with_coef(-self.coef)

    def __mul__(self, scalar: Union[int, float, complex]) -> "SpectralField":
        if isinstance(scalar, SpectralField):
            raise TypeError("use product() for pointwise products of fields")
        return self.with_coef(self.coef * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Union[int, float, complex]) -> "SpectralField":
        return self.with_coef(self.coef / scalar)


def zeros(grid: Grid, components: Tuple[int, ...] = ()) -> SpectralField:
    return SpectralField(grid, np.zeros(components + grid.shape, dtype=np.complex128))


def from_physical(grid: Grid, values: np.ndarray, mean_zero: bool = True) -> SpectralField:
    values = np.asarray(values)
    return SpectralField(grid, fft_forward(values, grid.axes), mean_zero)


def plane_wave(grid: Grid, k: Sequence[int], amplitude: complex = 1.0, mean_zero: bool = True) -> SpectralField:
    """amplitude·e^{iξ·x} with ξ = k/L; k integer, |k_i| < N/2."""
    k = tuple(int(ki) for ki in k)
    if len(k) != grid.dim:
        raise ShapeError("wave vector has the wrong dimension", k=k, dim=grid.dim)
    if any(abs(ki) >= grid.n // 2 for ki in k):
        raise ArgumentError("wave vector is not on the resolved lattice", k=k, n=grid.n)
    coef = np.zeros(grid.shape, dtype=np.complex128)
    coef[tuple(ki % grid.n for ki in k)] = amplitude
    return SpectralField(grid, coef, mean_zero and any(k))


def random_bandlimited(
    grid: Grid,
    rng: np.random.Generator,
    j_lo: int,
    j_hi: int,
    real: bool = True,
) -> SpectralField:
    """Gaussian coefficients restricted to Δ_{j_lo} + ... + Δ_{j_hi}."""
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    window = band_symbol(grid, "low", j_hi + 1) - band_symbol(grid, "low", j_lo)
    field = SpectralField(grid, coef * window)
    if real:
        field = from_physical(grid, field.values.real)
    return field


def delta_j(f: SpectralField, j: int) -> SpectralField:
    f.grid.check_band(j)
    return f.with_coef(f.coef * band_symbol(f.grid, "delta", j), mean_zero=True)


def s_j(f: SpectralField, j: int) -> SpectralField:
    f.grid.check_band(j)
    return f.with_coef(f.coef * band_symbol(f.grid, "low", j))


def tilde_delta_j(f: SpectralField, j: int) -> SpectralField:
    f.grid.check_band(j)
    return f.with_coef(f.coef * band_symbol(f.grid, "tilde", j), mean_zero=True)


def band_decomposition(f: SpectralField, bands: Optional[Iterable[int]] = None) -> Dict[int, SpectralField]:
    bands = f.grid.data_bands if bands is None else bands
    return {j: f.with_coef(f.coef * band_symbol(f.grid, "delta", j), mean_zero=True) for j in bands}


def reconstruct(pieces: Dict[int, SpectralField]) -> SpectralField:
    fields = [pieces[j] for j in sorted(pieces)]
    total = fields[0]
    for piece in fields[1:]:
        total = total + piece
    return total


def heat(f: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise ArgumentError("heat time must be nonnegative", t=t)
    if t == 0:
        return f
    return f.with_coef(f.coef * np.exp(-t * f.grid.xi_sq))


@dataclass(frozen=True)
class Scalar1:
    """P(ξ) = iξ_axis."""

    name: ClassVar[str] = "scalar1"
    input_rank: ClassVar[int] = 0
    axis: int = 0

    def multiplier(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(1j * grid.xi[self.axis], grid.shape)

    def apply(self, f: SpectralField) -> SpectralField:
        _check_rank(f, self)
        return f.with_coef(f.coef * self.multiplier(f.grid), mean_zero=True)


@dataclass(frozen=True)
class ScalarCone:
    """P(ξ) = i|ξ| χ(ξ/|ξ|), χ a Gaussian of the angle to the cone axis."""

    name: ClassVar[str] = "cone"
    input_rank: ClassVar[int] = 0
    axis: int = -1
    width: float = 0.5

    def multiplier(self, grid: Grid) -> np.ndarray:
        xi_sq = grid.xi_sq
        magnitude = np.sqrt(xi_sq)
        along = np.broadcast_to(grid.xi[self.axis], grid.shape)
        with np.errstate(invalid="ignore", divide="ignore"):
            perp_sq = np.where(xi_sq > 0, 1.0 - along ** 2 / xi_sq, 0.0)
        chi = np.exp(-np.clip(perp_sq, 0.0, None) / (2.0 * self.width ** 2))
        return 1j * magnitude * chi

    def apply(self, f: SpectralField) -> SpectralField:
        _check_rank(f, self)
        return f.with_coef(f.coef * self.multiplier(f.grid), mean_zero=True)


@dataclass(frozen=True)
class LerayDiv:
    """T ↦ −ℙ∇·T on symmetric tensor fields; gives −½ℙ∇·(u⊗v + v⊗u)."""

    name: ClassVar[str] = "leray"
    input_rank: ClassVar[int] = 2

    def apply(self, f: SpectralField) -> SpectralField:
        _check_rank(f, self)
        grid = f.grid
        xi = [np.broadcast_to(c, grid.shape) for c in grid.xi]
        div = np.stack([sum(1j * xi[k] * f.coef[i, k] for k in range(grid.dim)) for i in range(grid.dim)])
        xi_sq = grid.xi_sq
        with np.errstate(invalid="ignore", divide="ignore"):
            along = np.where(xi_sq > 0, sum(xi[k] * div[k] for k in range(grid.dim)) / xi_sq, 0.0)
        projected = np.stack([div[i] - xi[i] * along for i in range(grid.dim)])
        return SpectralField(grid, -projected, True)


SymbolSpec = Union[Scalar1, ScalarCone, LerayDiv]


def _check_rank(f: SpectralField, sym) -> None:
    if f.rank != sym.input_rank:
        raise ShapeError(
            f"symbol '{sym.name}' expects rank-{sym.input_rank} input",
            got_rank=f.rank,
        )


def parse_symbol(text: str) -> SymbolSpec:
    """``scalar1``, ``scalar1:axis=1``, ``cone``, ``cone:width=0.3``, ``leray``."""
    name, _, params = text.strip().partition(":")
    kwargs = {}
    for item in filter(None, params.split(",")):
        key, _, value = item.partition("=")
        kwargs[key.strip()] = value.strip()
    try:
        if name == "scalar1":
            return Scalar1(axis=int(kwargs.get("axis", 0)))
        if name == "cone":
            return ScalarCone(axis=int(kwargs.get("axis", -1)), width=float(kwargs.get("width", 0.5)))
        if name == "leray":
            return LerayDiv()
    except ValueError as e:
        raise ArgumentError(f"bad symbol parameters in '{text}'") from e
    raise ArgumentError(f"unknown symbol '{name}'", choices="scalar1, cone, leray")


def apply_symbol(f: SpectralField, sym: SymbolSpec) -> SpectralField:
    return sym.apply(f)


def dyadic_rescale(f: SpectralField, m: int, same_box: bool = False) -> SpectralField:
    """Represent 2^m f(2^m x).

    The default shrinks the box (L ↦ L/2^m) and keeps the coefficient array,
    which maps band j to band j + m exactly. ``same_box`` instead moves each
    mode k to 2^m k inside the current box and needs spectral headroom.
    """
    if m == 0:
        return f
    factor = 2.0 ** m
    grid = f.grid
    if not same_box:
        return SpectralField(Grid(grid.dim, grid.n, grid.box_l / factor), f.coef * factor, f.mean_zero)

    lo, hi = grid.band_window
    support = np.nonzero(np.any(f.coef != 0, axis=tuple(range(f.rank))) if f.rank else f.coef != 0)
    k = [grid.wavenumbers[axis][idx].astype(np.int64) for axis, idx in enumerate(support)]
    if m > 0:
        moved = [ki * (1 << m) for ki in k]
        if any(np.any(np.abs(ki) >= grid.n // 2) for ki in moved):
            raise BandRangeError(f"not enough spectral headroom to rescale by 2^{m}", lo, hi)
    else:
        step = 1 << (-m)
        if any(np.any(ki % step) for ki in k):
            raise BandRangeError(f"field is not 2^{-m}-periodic; cannot rescale by 2^{m}", lo, hi)
        moved = [ki // step for ki in k]
    coef = np.zeros_like(f.coef)
    target = tuple(ki % grid.n for ki in moved)
    coef[(Ellipsis,) + target] = f.coef[(Ellipsis,) + support] * factor
    return f.with_coef(coef)


def translate(f: SpectralField, shift: Sequence[int]) -> SpectralField:
    """f(x − a) for the lattice shift a = shift·spacing."""
    grid = f.grid
    phase = np.zeros(grid.shape)
    mesh = np.meshgrid(*grid.wavenumbers, indexing="ij", sparse=True)
    for k, s in zip(mesh, shift):
        phase = phase + k * (s / grid.n)
    return f.with_coef(f.coef * np.exp(-2j * np.pi * phase))


def derivative(f: SpectralField, alpha: Sequence[int]) -> SpectralField:
    multiplier = np.ones(f.grid.shape, dtype=np.complex128)
    for component, order in zip(f.grid.xi, alpha):
        if order:
            multiplier = multiplier * (1j * component) ** order
    return f.with_coef(f.coef * multiplier, mean_zero=f.mean_zero or any(alpha))


def _pad(coef: np.ndarray, grid: Grid) -> np.ndarray:
    half = grid.n // 2
    shifted = np.fft.fftshift(coef, axes=grid.axes)
    widths = [(0, 0)] * (coef.ndim - grid.dim) + [(half, half)] * grid.dim
    return np.fft.ifftshift(np.pad(shifted, widths), axes=grid.axes)


def _truncate(coef: np.ndarray, grid: Grid) -> np.ndarray:
    half = grid.n // 2
    shifted = np.fft.fftshift(coef, axes=grid.axes)
    window = (Ellipsis,) + (slice(half, half + grid.n),) * grid.dim
    return np.fft.ifftshift(shifted[window], axes=grid.axes)


def padded_values(f: SpectralField) -> np.ndarray:
    return fft_inverse(_pad(f.coef, f.grid), f.grid.axes)


def product_from_values(grid: Grid, values: np.ndarray, strict: bool = False) -> np.ndarray:
    """Lattice coefficients of a product sampled on the ×2 padded grid."""
    big = fft_forward(values, grid.axes)
    coef = _truncate(big, grid)
    if strict:
        dropped = float(np.sum(np.abs(big) ** 2) - np.sum(np.abs(coef) ** 2))
        if dropped > 1e-24 + 1e-12 * float(np.sum(np.abs(big) ** 2)):
            raise AliasingError("product spectrum leaves the lattice", ceiling=grid.j_max)
    return coef


def product(f: SpectralField, g: SpectralField, strict: bool = False) -> SpectralField:
    """Dealiased pointwise product f·g projected back onto the lattice."""
    f.require_same_grid(g)
    if f.rank or g.rank:
        raise ShapeError("product() takes scalar fields; use the tensor form for vectors")
    coef = product_from_values(f.grid, padded_values(f) * padded_values(g), strict)
    return SpectralField(f.grid, coef, mean_zero=False)


def symbol_homogeneity_error(sym: SymbolSpec, grid: Grid, seed: int = 0) -> float:
    """max |P(D) rescale(f) − 2 rescale(P(D) f)| / max |P(D) f| on a random field."""
    rng = np.random.default_rng(seed)
    components = (grid.dim,) * sym.input_rank
    coef = rng.standard_normal(components + grid.shape) * band_symbol(grid, "low", grid.j_max)
    f = SpectralField(grid, coef)
    lhs = sym.apply(dyadic_rescale(f, 1))
    rhs = dyadic_rescale(sym.apply(f), 1) * 2.0
    scale = float(np.max(np.abs(rhs.coef))) or 1.0
    return float(np.max(np.abs(lhs.coef - rhs.coef))) / scale


def leray_project(f: SpectralField) -> SpectralField:
    """ℙf = f − ξ(ξ·f)/|ξ|² on vector fields."""
    if f.rank != 1:
        raise ShapeError("the Leray projection acts on vector fields", rank=f.rank)
    grid = f.grid
    xi = [np.broadcast_to(c, grid.shape) for c in grid.xi]
    with np.errstate(invalid="ignore", divide="ignore"):
        along = np.where(grid.xi_sq > 0, sum(xi[k] * f.coef[k] for k in range(grid.dim)) / grid.xi_sq, 0.0)
    return f.with_coef(np.stack([f.coef[i] - xi[i] * along for i in range(grid.dim)]), mean_zero=True)
