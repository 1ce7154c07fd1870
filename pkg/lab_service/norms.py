import logging
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Callable, Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import scipy.fft as sfft
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lab_service.errors import (
    ArgumentError,
    DegenerateSetError,
    PreconditionError,
    SpaceSpecError,
)
from lab_service.point_sets import PointSet, distance_field
from lab_service.spectral_core import Grid, SpectralField, band_symbol
from lab_service.workers import get_thread_cap, parallel_map

logger = logging.getLogger(__name__)

Exponent = Union[Literal["inf"], float]


def exponent(value: Exponent) -> float:
    return math.inf if value == "inf" else float(value)


def _fmt(value) -> str:
    if value == "inf" or value == math.inf:
        return "inf"
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


class EtaSequence(BaseModel):
    """Nonnegative η_n on the window [n_lo, n_lo + len(values) − 1].

    η_n = 0 for n ≤ −5; outside the window the end values are held.
    """

    model_config = ConfigDict(frozen=True)

    values: Tuple[float, ...]
    n_lo: int = 0
    regularity: float = 1.0

    @model_validator(mode="before")
    @classmethod
    def _measure_regularity(cls, data):
        if isinstance(data, dict) and "values" in data:
            values = [float(v) for v in data["values"]]
            worst = 1.0
            for a, b in zip(values, values[1:]):
                if a == 0 and b == 0:
                    continue
                if a == 0 or b == 0:
                    worst = math.inf
                    break
                worst = max(worst, a / b, b / a)
            data = dict(data, values=tuple(values), regularity=worst)
        return data

    @field_validator("values")
    @classmethod
    def _check_values(cls, values):
        if not values:
            raise ValueError("η needs at least one value")
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ValueError("η values must be finite and nonnegative")
        return values

    @property
    def n_hi(self) -> int:
        return self.n_lo + len(self.values) - 1

    def at(self, n: int) -> float:
        if n <= -5:
            return 0.0
        index = min(max(n - self.n_lo, 0), len(self.values) - 1)
        return self.values[index]

    def meta_at(self, n: int) -> float:
        """η_n with the M(η) convention η_n = η_0 for n ≤ 0."""
        return self.at(max(n, 0))

    def is_nonincreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.values, self.values[1:]))

    def is_regular(self) -> bool:
        return math.isfinite(self.regularity)

    def total(self) -> float:
        return float(sum(self.values))

    @classmethod
    def from_rule(cls, rule: Callable[[int], float], n_lo: int, n_hi: int) -> "EtaSequence":
        return cls(values=tuple(float(rule(n)) for n in range(n_lo, n_hi + 1)), n_lo=n_lo)

    @classmethod
    def from_csv(cls, path) -> "EtaSequence":
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#") or line[0].isalpha():
                continue
            rows.append([float(c) for c in line.split(",")])
        if not rows:
            raise ArgumentError("η file holds no values", path=str(path))
        if len(rows[0]) == 1:
            return cls(values=tuple(r[0] for r in rows))
        rows.sort()
        return cls(values=tuple(r[1] for r in rows), n_lo=int(rows[0][0]))

    def to_csv(self, path) -> Path:
        path = Path(path)
        lines = ["n,eta"] + [f"{self.n_lo + i},{v:.17g}" for i, v in enumerate(self.values)]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, text: str, n_lo: int = 0) -> "EtaSequence":
        """A CSV path, or inline values separated by ``;``."""
        if Path(text).exists():
            return cls.from_csv(text)
        try:
            return cls(values=tuple(float(v) for v in text.split(";") if v.strip()), n_lo=n_lo)
        except ValueError as e:
            raise SpaceSpecError(f"cannot read η from '{text}'") from e


class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True)

    # Every field except the ``kind`` discriminator (pydantic forbids
    # mode="before" validators on a discriminator field).
    @field_validator("p", "q", "r", "s", "sp", "eta", "points", "base", "N", mode="before", check_fields=False)
    @classmethod
    def _normalize_infinity(cls, value):
        if isinstance(value, float) and value == math.inf:
            return "inf"
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "∞"):
            return "inf"
        return value


class Lebesgue(_Spec):
    kind: Literal["lebesgue"] = "lebesgue"
    p: Exponent = 3.0

    @model_validator(mode="after")
    def _check(self):
        if exponent(self.p) < 1:
            raise ValueError("Lebesgue needs p >= 1")
        return self


class Lorentz(_Spec):
    kind: Literal["lorentz"] = "lorentz"
    p: float = 3.0
    q: Exponent = "inf"

    @model_validator(mode="after")
    def _check(self):
        if not 1 <= self.p < math.inf or exponent(self.q) < 1:
            raise ValueError("Lorentz needs 1 <= p < inf and q >= 1")
        return self


class BesovHom(_Spec):
    kind: Literal["besov"] = "besov"
    s: float
    p: Exponent
    q: Exponent

    @model_validator(mode="after")
    def _check(self):
        if exponent(self.p) < 1 or exponent(self.q) < 1:
            raise ValueError("Besov needs p, q >= 1")
        return self


class TriebelHom(_Spec):
    kind: Literal["triebel"] = "triebel"
    s: float
    p: float
    q: float

    @model_validator(mode="after")
    def _check(self):
        if not (1 <= self.p < math.inf and 1 <= self.q < math.inf):
            raise ValueError("Triebel-Lizorkin needs finite p, q >= 1")
        return self


class Morrey(_Spec):
    """Invariant Morrey space M^d_q; ``p`` defaults to the grid dimension."""

    kind: Literal["morrey"] = "morrey"
    p: Optional[float] = None
    q: float = 2.0

    @model_validator(mode="after")
    def _check(self):
        if self.q < 1 or (self.p is not None and self.q > self.p):
            raise ValueError("Morrey needs 1 <= q <= p")
        return self


class BesovOverMorrey(_Spec):
    kind: Literal["bom"] = "bom"
    p: float = 3.0
    q: float = 2.0
    r: Exponent = "inf"

    @model_validator(mode="after")
    def _check(self):
        if not 1 <= self.q <= self.p or exponent(self.r) < 1:
            raise ValueError("Besov-over-Morrey needs 1 <= q <= p and r >= 1")
        return self


class FourierFq(_Spec):
    kind: Literal["fq"] = "fq"
    q: Exponent = 2.0

    @model_validator(mode="after")
    def _check(self):
        if exponent(self.q) < 1:
            raise ValueError("F_q needs q >= 1")
        return self


class MetaEta(_Spec):
    kind: Literal["meta"] = "meta"
    eta: EtaSequence


class TwoMicrolocal(_Spec):
    kind: Literal["micro"] = "micro"
    sp: float
    points: PointSet = PointSet()

    @model_validator(mode="after")
    def _check(self):
        if self.sp <= 0:
            raise ValueError("2-microlocal weight needs s' > 0")
        return self


BaseSpace = Annotated[
    Union[
        Lebesgue,
        Lorentz,
        BesovHom,
        TriebelHom,
        Morrey,
        BesovOverMorrey,
        FourierFq,
        MetaEta,
        TwoMicrolocal,
    ],
    Field(discriminator="kind"),
]


class DerivedCN(_Spec):
    kind: Literal["cn"] = "cn"
    base: BaseSpace
    N: int = 4

    @model_validator(mode="after")
    def _check(self):
        if self.N < 4 or self.N % 2:
            raise ValueError("N must be an even integer >= 4")
        return self


class DerivedBN(_Spec):
    kind: Literal["bn"] = "bn"
    base: BaseSpace
    N: int = 4

    @model_validator(mode="after")
    def _check(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        return self


SpaceSpec = Annotated[
    Union[
        Lebesgue,
        Lorentz,
        BesovHom,
        TriebelHom,
        Morrey,
        BesovOverMorrey,
        FourierFq,
        MetaEta,
        TwoMicrolocal,
        DerivedCN,
        DerivedBN,
    ],
    Field(discriminator="kind"),
]

class SamplingConfig(BaseModel):
    """Ball family used by Morrey-type suprema."""

    center_stride: Optional[int] = None
    exhaustive: bool = False

    def stride(self, grid: Grid) -> int:
        if self.exhaustive:
            return 1
        if self.center_stride is not None:
            return max(1, self.center_stride)
        return max(1, grid.n // 32)


DEFAULT_SAMPLING = SamplingConfig()

_SIMPLE_KINDS = {
    "lebesgue": Lebesgue,
    "lorentz": Lorentz,
    "besov": BesovHom,
    "triebel": TriebelHom,
    "morrey": Morrey,
    "bom": BesovOverMorrey,
    "fq": FourierFq,
}


def _split_params(body: str) -> Dict[str, str]:
    params, depth, current = {}, 0, ""
    for char in body + ",":
        if char == "," and depth == 0:
            if current.strip():
                key, sep, value = current.partition("=")
                if not sep:
                    raise SpaceSpecError(f"parameter '{current.strip()}' has no value")
                params[key.strip()] = value.strip()
            current = ""
            continue
        depth += char == "("
        depth -= char == ")"
        current += char
    return params


def parse_space(text: str) -> SpaceSpec:
    """Read the ``kind:key=value,...`` grammar used on the command line."""
    kind, _, body = text.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind in ("cn", "bn"):
            match = re.fullmatch(r"base=(.*),N=(\d+)", body.strip())
            if not match:
                raise SpaceSpecError(f"'{text}' should read {kind}:base=<spec>,N=<int>")
            cls = DerivedCN if kind == "cn" else DerivedBN
            return cls(base=parse_space(match.group(1)), N=int(match.group(2)))
        params = _split_params(body)
        if kind == "meta":
            if "eta" not in params:
                raise SpaceSpecError("meta space needs eta=<csv-file or v0;v1;...>")
            return MetaEta(eta=EtaSequence.load(params["eta"], int(params.get("n0", 0))))
        if kind == "micro":
            return TwoMicrolocal(sp=params.get("sp"), points=PointSet.parse(params.get("set", "empty")))
        if kind not in _SIMPLE_KINDS:
            raise SpaceSpecError(f"unknown space '{kind}'", choices=", ".join(sorted(_SIMPLE_KINDS) + ["meta", "micro", "cn", "bn"]))
        return _SIMPLE_KINDS[kind](**params)
    except ValidationError as e:
        raise SpaceSpecError(f"invalid parameters for '{text}': {e.errors()[0]['msg']}") from e


def format_space(spec: SpaceSpec) -> str:
    if isinstance(spec, (DerivedCN, DerivedBN)):
        return f"{spec.kind}:base={format_space(spec.base)},N={spec.N}"
    if isinstance(spec, MetaEta):
        values = ";".join(_fmt(v) for v in spec.eta.values)
        return f"meta:eta={values},n0={spec.eta.n_lo}"
    if isinstance(spec, TwoMicrolocal):
        return f"micro:sp={_fmt(spec.sp)},set={spec.points.to_text()}"
    params = spec.model_dump(exclude={"kind"}, exclude_none=True)
    return f"{spec.kind}:" + ",".join(f"{k}={_fmt(v)}" for k, v in params.items())


def critical_index(spec: SpaceSpec, dim: int) -> Optional[float]:
    """The regularity s = d/p − 1 that makes Besov/Triebel scale invariant."""
    if isinstance(spec, (BesovHom, TriebelHom)):
        return dim / exponent(spec.p) - 1.0
    return None


def is_invariant(spec: SpaceSpec, dim: int) -> bool:
    if isinstance(spec, (Lebesgue, Lorentz)):
        return math.isclose(exponent(spec.p), dim)
    if isinstance(spec, Morrey):
        return spec.p is None or math.isclose(spec.p, dim)
    if isinstance(spec, (BesovHom, TriebelHom)):
        return math.isclose(spec.s, critical_index(spec, dim), abs_tol=1e-12)
    return isinstance(spec, (BesovOverMorrey, FourierFq, MetaEta))


def is_homogeneous(spec: SpaceSpec) -> bool:
    return not isinstance(spec, (Lebesgue, Lorentz, Morrey))


def magnitude(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise |f|, Euclidean over components for vector fields."""
    extra = values.ndim - grid.dim
    if extra == 0:
        return np.abs(values)
    return np.sqrt(np.sum(np.abs(values) ** 2, axis=tuple(range(extra))))


def lp_norm(mag: np.ndarray, grid: Grid, p: float) -> float:
    if p == math.inf:
        return float(np.max(mag)) if mag.size else 0.0
    return float(np.sum(mag ** p) * grid.cell_volume) ** (1.0 / p)


def lq_sum(terms: List[float], q: float) -> float:
    if not terms:
        return 0.0
    terms = np.asarray(terms, dtype=float)
    if q == math.inf:
        return float(np.max(terms))
    return float(np.sum(terms ** q)) ** (1.0 / q)


@dataclass(frozen=True)
class Rearrangement:
    """Decreasing rearrangement f* of grid data: step function on cells."""

    values: np.ndarray
    cell_measure: float

    @property
    def total_measure(self) -> float:
        return self.cell_measure * len(self.values)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        index = np.floor(t / self.cell_measure).astype(int)
        inside = index < len(self.values)
        out = np.zeros(t.shape)
        out[inside] = self.values[index[inside]]
        return out

    def measure_above(self, s: float) -> float:
        return float(np.count_nonzero(self.values > s)) * self.cell_measure

    def lorentz(self, p: float, q: float) -> float:
        """((q/p)∫(t^{1/p} f*(t))^q dt/t)^{1/q}, sup form when q = ∞."""
        edges = np.arange(len(self.values) + 1) * self.cell_measure
        if q == math.inf:
            return float(np.max(self.values * edges[1:] ** (1.0 / p))) if len(self.values) else 0.0
        weights = np.diff(edges ** (q / p))
        return float(np.sum(self.values ** q * weights)) ** (1.0 / q)


def rearrangement(f: SpectralField) -> Rearrangement:
    mag = magnitude(f.values, f.grid).reshape(-1)
    return Rearrangement(np.sort(mag)[::-1].copy(), f.grid.cell_volume)


def periodic_sq_distance(grid: Grid) -> np.ndarray:
    """Squared periodic distance of every node to the origin node."""
    index = np.arange(grid.n)
    axis_sq = (np.minimum(index, grid.n - index) * grid.spacing) ** 2
    mesh = np.meshgrid(*([axis_sq] * grid.dim), indexing="ij", sparse=True)
    total = np.zeros(grid.shape)
    for component in mesh:
        total = total + component
    return total


@lru_cache(maxsize=256)
def _ball_kernel(grid: Grid, radius: float) -> Tuple[np.ndarray, int]:
    mask = periodic_sq_distance(grid) <= radius ** 2 * (1 + 1e-12)
    spectrum = sfft.rfftn(mask.astype(float))
    spectrum.setflags(write=False)
    return spectrum, int(np.count_nonzero(mask))


def ball_means(values: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    """Average of nonnegative ``values`` over B(x, radius), for every node x at once."""
    if radius > math.pi * grid.box_l * (1 + 1e-12):
        raise ArgumentError("ball radius exceeds half the box", radius=radius, limit=math.pi * grid.box_l)
    spectrum, count = _ball_kernel(grid, float(radius))
    workers = get_thread_cap()
    conv = sfft.irfftn(sfft.rfftn(values, workers=workers) * spectrum, s=grid.shape, workers=workers)
    return np.clip(conv, 0.0, None) / count


def dyadic_radii(grid: Grid) -> List[float]:
    """πL, πL/2, ... down to one grid spacing."""
    radii, r = [], math.pi * grid.box_l
    while r >= grid.spacing * (1 - 1e-12):
        radii.append(r)
        r /= 2.0
    return radii


def _all_radii(grid: Grid) -> List[float]:
    distances = np.unique(np.round(np.sqrt(periodic_sq_distance(grid)), 12))
    return [float(r) for r in distances if 0 < r <= math.pi * grid.box_l * (1 + 1e-12)]


def _centers(grid: Grid, sampling: SamplingConfig) -> Tuple[slice, ...]:
    return (slice(None, None, sampling.stride(grid)),) * grid.dim


def morrey_value(
    mag: np.ndarray,
    grid: Grid,
    p: float,
    q: float,
    sampling: SamplingConfig = DEFAULT_SAMPLING,
) -> float:
    """sup over sampled balls of R^{d/p}(⨍_B |f|^q)^{1/q}."""
    power = mag ** q
    if not np.any(power):
        return 0.0
    radii = _all_radii(grid) if sampling.exhaustive else dyadic_radii(grid)
    centers = _centers(grid, sampling)
    best = 0.0
    for r in radii:
        mean = float(np.max(ball_means(power, grid, r)[centers]))
        best = max(best, r ** (grid.dim / p) * mean ** (1.0 / q))
    return best


def _band_magnitudes(f: SpectralField, kind: str = "delta") -> Dict[int, np.ndarray]:
    grid = f.grid
    bands = list(grid.data_bands)

    def one(j: int) -> np.ndarray:
        piece = f.with_coef(f.coef * band_symbol(grid, kind, j), mean_zero=True)
        return magnitude(piece.values, grid)

    return dict(zip(bands, parallel_map(one, bands)))


def _require_homogeneous(f: SpectralField, spec: SpaceSpec) -> None:
    grid = f.grid
    if len(grid.resolved_bands) < 4:
        raise PreconditionError(
            "grid resolves fewer than 4 dyadic bands",
            kind=spec.kind,
            j_min=grid.j_min,
            j_max=grid.j_max,
        )
    if not f.is_negligible_mean():
        raise PreconditionError("homogeneous norms need a mean-zero field", kind=spec.kind)


def _lebesgue(f, spec: Lebesgue, sampling):
    return lp_norm(magnitude(f.values, f.grid), f.grid, exponent(spec.p))


def _lorentz(f, spec: Lorentz, sampling):
    return rearrangement(f).lorentz(spec.p, exponent(spec.q))


def _besov(f, spec: BesovHom, sampling):
    p = exponent(spec.p)
    terms = [2.0 ** (j * spec.s) * lp_norm(m, f.grid, p) for j, m in _band_magnitudes(f).items()]
    return lq_sum(terms, exponent(spec.q))


def _triebel(f, spec: TriebelHom, sampling):
    total = np.zeros(f.grid.shape)
    for j, m in _band_magnitudes(f).items():
        total = total + (2.0 ** (j * spec.s) * m) ** spec.q
    return lp_norm(total ** (1.0 / spec.q), f.grid, spec.p)


def _morrey(f, spec: Morrey, sampling):
    p = float(f.grid.dim) if spec.p is None else spec.p
    if not math.isclose(p, f.grid.dim):
        raise SpaceSpecError("only the invariant Morrey space M^d_q is provided", p=p, dim=f.grid.dim)
    if spec.q > p:
        raise SpaceSpecError("Morrey needs q <= p", q=spec.q, p=p)
    return morrey_value(magnitude(f.values, f.grid), f.grid, p, spec.q, sampling)


def _besov_over_morrey(f, spec: BesovOverMorrey, sampling):
    weight = f.grid.dim / spec.p - 1.0
    terms = [
        2.0 ** (j * weight) * morrey_value(m, f.grid, spec.p, spec.q, sampling)
        for j, m in _band_magnitudes(f, "tilde").items()
    ]
    return lq_sum(terms, exponent(spec.r))


def _fourier_fq(f, spec: FourierFq, sampling):
    grid = f.grid
    q = exponent(spec.q)
    coef_mag = magnitude(f.coef, grid) * grid.volume
    cell = grid.box_l ** (-grid.dim)
    weight = grid.dim - 1 - (0.0 if q == math.inf else grid.dim / q)
    best = 0.0
    for j in grid.data_bands:
        piece = band_symbol(grid, "delta", j) * coef_mag
        if q == math.inf:
            value = float(np.max(piece))
        else:
            value = float(np.sum(piece ** q) * cell) ** (1.0 / q)
        best = max(best, 2.0 ** (j * weight) * value)
    return best


def meta_radius_window(grid: Grid) -> range:
    """j′ with 2^{−j′} between one grid spacing and half the box."""
    lo = math.ceil(math.log2(1.0 / (math.pi * grid.box_l)) - 1e-12)
    hi = math.floor(math.log2(grid.n / (2.0 * math.pi * grid.box_l)) + 1e-12)
    return range(lo, hi + 1)


def m_eta_norm(f: SpectralField, eta: EtaSequence, sampling: SamplingConfig = DEFAULT_SAMPLING) -> float:
    """Smallest C with ⨍_{B(x, 2^{−j′})} |Δ_j f|² ≤ C² η²_{j−j′} 4^j on the sampled family."""
    _require_homogeneous(f, MetaEta(eta=eta))
    grid = f.grid
    centers = _centers(grid, sampling)
    best = 0.0
    for j, m in _band_magnitudes(f).items():
        energy = m ** 2
        if not np.any(energy > 0):
            continue
        for jp in meta_radius_window(grid):
            mean = float(np.max(ball_means(energy, grid, 2.0 ** (-jp))[centers]))
            if mean <= 0:
                continue
            weight = eta.meta_at(j - jp)
            if weight == 0:
                logger.debug(f"⚠️ η_{j - jp} = 0 with a nonzero band average: not in M(η)")
                return math.inf
            best = max(best, math.sqrt(mean) / (weight * 2.0 ** j))
    return best


def _meta(f, spec: MetaEta, sampling):
    return m_eta_norm(f, spec.eta, sampling)


def _two_microlocal(f, spec: TwoMicrolocal, sampling):
    if spec.points.is_empty:
        raise DegenerateSetError("2-microlocal norm with an empty set S")
    grid = f.grid
    dist = distance_field(spec.points, grid)
    best = 0.0
    for j, m in _band_magnitudes(f).items():
        weight = (1.0 + 2.0 ** j * dist) ** spec.sp
        best = max(best, float(np.max(m * weight)) * 2.0 ** (-j))
    return best


def _band_base_norms(f: SpectralField, base: SpaceSpec, sampling) -> Dict[int, float]:
    grid = f.grid
    bands = list(grid.data_bands)

    def one(j: int) -> float:
        piece = f.with_coef(f.coef * band_symbol(grid, "delta", j), mean_zero=True)
        if not np.any(piece.coef):
            return 0.0
        return _evaluate(piece, base, sampling)

    return dict(zip(bands, parallel_map(one, bands)))


def _derived_cn(f, spec: DerivedCN, sampling):
    norms = _band_base_norms(f, spec.base, sampling)
    return max((1.0 + 2.0 ** j) ** spec.N * value for j, value in norms.items())


def split_index(t: float) -> int:
    """j(t) with 2^{−j(t)} ≤ √t < 2^{−j(t)+1}."""
    return math.ceil(-0.5 * math.log2(t) - 1e-12)


def _derived_bn_at(f: SpectralField, spec: DerivedBN, t: float, sampling) -> float:
    grid = f.grid
    lo, hi = grid.band_window
    jt = min(max(split_index(t), lo), hi)
    low = f.with_coef(f.coef * band_symbol(grid, "low", jt))
    low_norm = _evaluate(low, spec.base, sampling) if np.any(low.coef) else 0.0
    norms = _band_base_norms(f, spec.base, sampling)
    root = math.sqrt(t)
    tail = max(((2.0 ** j * root) ** spec.N * v for j, v in norms.items() if j >= jt), default=0.0)
    return low_norm + tail


def _derived_bn(f, spec: DerivedBN, sampling):
    return _derived_bn_at(f, spec, 1.0, sampling)


_EVALUATORS = {
    "lebesgue": _lebesgue,
    "lorentz": _lorentz,
    "besov": _besov,
    "triebel": _triebel,
    "morrey": _morrey,
    "bom": _besov_over_morrey,
    "fq": _fourier_fq,
    "meta": _meta,
    "micro": _two_microlocal,
    "cn": _derived_cn,
    "bn": _derived_bn,
}


def _evaluate(f: SpectralField, spec: SpaceSpec, sampling: SamplingConfig) -> float:
    return float(_EVALUATORS[spec.kind](f, spec, sampling))


def norm(f: SpectralField, spec: SpaceSpec, sampling: Optional[SamplingConfig] = None) -> float:
    """Discrete evaluation of ‖f‖_E for the space described by ``spec``."""
    if spec.kind not in _EVALUATORS:
        raise SpaceSpecError(f"no evaluator for '{spec.kind}'")
    if is_homogeneous(spec):
        _require_homogeneous(f, spec)
    return _evaluate(f, spec, sampling or DEFAULT_SAMPLING)


def time_weighted_norm(
    f: SpectralField,
    t: float,
    spec: Union[DerivedCN, DerivedBN],
    sampling: Optional[SamplingConfig] = None,
) -> float:
    """sup_j (1 + 2^j√t)^N ‖Δ_j f‖_E, or the split form for DerivedBN."""
    if t <= 0:
        raise ArgumentError("time-weighted norms need t > 0", t=t)
    if not isinstance(spec, (DerivedCN, DerivedBN)):
        raise SpaceSpecError("time-weighted norms need a cn or bn space", kind=spec.kind)
    _require_homogeneous(f, spec)
    sampling = sampling or DEFAULT_SAMPLING
    if isinstance(spec, DerivedBN):
        return _derived_bn_at(f, spec, t, sampling)
    root = math.sqrt(t)
    norms = _band_base_norms(f, spec.base, sampling)
    return max((1.0 + 2.0 ** j * root) ** spec.N * value for j, value in norms.items())


def band_norms(f: SpectralField, spec: SpaceSpec, sampling: Optional[SamplingConfig] = None) -> Dict[int, float]:
    """‖Δ_j f‖_E for every data band, as used by the decompose report."""
    return _band_base_norms(f, spec, sampling or DEFAULT_SAMPLING)


def iter_specs_for_dim(dim: int) -> Iterator[SpaceSpec]:
    """The invariant catalogue at the critical exponents of dimension ``dim``."""
    yield Lebesgue(p=float(dim))
    yield Lorentz(p=float(dim), q="inf")
    yield BesovHom(s=dim / 4.0 - 1.0, p=4.0, q="inf")
    yield BesovHom(s=-1.0, p="inf", q="inf")
    yield TriebelHom(s=dim / 4.0 - 1.0, p=4.0, q=2.0)
    yield Morrey(q=2.0)
    yield BesovOverMorrey(p=float(dim), q=2.0, r="inf")
    yield FourierFq(q=2.0)
