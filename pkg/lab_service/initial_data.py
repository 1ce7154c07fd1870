import logging
from typing import Callable, Dict, Optional

import numpy as np

from lab_service.errors import ArgumentError
from lab_service.spectral_core import (
    Grid,
    SpectralField,
    from_physical,
    leray_project,
    plane_wave,
    random_bandlimited,
)

logger = logging.getLogger(__name__)


def constant(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> SpectralField:
    return SpectralField(grid, np.full(grid.shape, amplitude, dtype=np.complex128), mean_zero=False)


def single_mode(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> SpectralField:
    """amplitude·e^{iξ·x}, ξ along x₁ with |ξ| = 2^{j_min + 1}."""
    k = int(round(2.0 ** (grid.j_min + 1) * grid.box_l))
    return plane_wave(grid, (k,) + (0,) * (grid.dim - 1), amplitude)


def small(grid: Grid, amplitude: float = 0.05, seed: int = 0) -> SpectralField:
    """Real random field on the resolved bands with sup norm ``amplitude``."""
    rng = np.random.default_rng(seed)
    field = random_bandlimited(grid, rng, grid.j_min, grid.j_max - 1)
    return field * (amplitude / float(np.max(np.abs(field.values))))


def lacunary(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> SpectralField:
    """amplitude·Σ_j 2^j cos(2^j x₁) over the resolved bands."""
    x1 = grid.coordinates[0]
    values = np.zeros(grid.shape)
    for j in grid.resolved_bands:
        values = values + 2.0 ** j * np.cos(2.0 ** j * x1)
    return from_physical(grid, amplitude * values)


def sawtooth(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> SpectralField:
    """Torus stand-in for v.p. 1/x₁: coefficients (−i/2) sign(ξ₁) e^{−t₀ξ₁²} on the ξ₁ axis."""
    t0 = 4.0 ** (-grid.j_max)
    k = grid.wavenumbers[0]
    line = np.where(np.abs(k) < grid.n // 2, -0.5j * np.sign(k) * np.exp(-t0 * (k / grid.box_l) ** 2), 0.0)
    coef = np.zeros(grid.shape, dtype=np.complex128)
    coef[(slice(None),) + (0,) * (grid.dim - 1)] = amplitude * line
    return SpectralField(grid, coef)


def large_low(grid: Grid, amplitude: float = 20.0, seed: int = 0) -> SpectralField:
    """Large data on the lowest resolved band: amplitude·Σ_i cos(2^{j_min} x_i)."""
    values = np.zeros(grid.shape)
    for x in grid.coordinates:
        values = values + np.cos(2.0 ** grid.j_min * x)
    return from_physical(grid, amplitude * values)


def random(grid: Grid, amplitude: float = 1.0, seed: int = 0) -> SpectralField:
    rng = np.random.default_rng(seed)
    return random_bandlimited(grid, rng, grid.j_min, grid.j_max) * amplitude


BUILTINS: Dict[str, Callable[..., SpectralField]] = {
    "constant": constant,
    "plane-wave": single_mode,
    "small": small,
    "lacunary": lacunary,
    "sawtooth": sawtooth,
    "large-low": large_low,
    "random": random,
}


def builtin_field(
    name: str,
    grid: Grid,
    amplitude: Optional[float] = None,
    seed: int = 0,
    vector: bool = False,
) -> SpectralField:
    """Named initial datum; ``vector`` lifts it to a divergence-free vector field."""
    if name not in BUILTINS:
        raise ArgumentError(f"unknown builtin datum '{name}'", choices=", ".join(sorted(BUILTINS)))
    maker = BUILTINS[name]
    field = maker(grid, seed=seed) if amplitude is None else maker(grid, amplitude=amplitude, seed=seed)
    if vector:
        stacked = SpectralField(grid, np.stack([np.moveaxis(field.coef, 0, (i + 1) % grid.dim) for i in range(grid.dim)]))
        field = leray_project(stacked)
    logger.debug(f"🧪 Built datum '{name}' on N={grid.n}, L={grid.box_l}")
    return field
