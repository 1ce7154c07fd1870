import math

import numpy as np
import pytest

from lab_service.errors import AliasingError, ArgumentError, BandRangeError, GridMismatchError, ShapeError
from lab_service.spectral_core import (
    CUTOFF,
    Grid,
    LerayDiv,
    Scalar1,
    ScalarCone,
    SpectralField,
    apply_symbol,
    band_decomposition,
    delta_j,
    derivative,
    dyadic_rescale,
    from_physical,
    heat,
    leray_project,
    parse_symbol,
    plane_wave,
    product,
    random_bandlimited,
    reconstruct,
    s_j,
    symbol_homogeneity_error,
    tilde_delta_j,
    translate,
)


def sup(field):
    return float(np.max(np.abs(field.values)))


def test_band_window_of_unit_box(grid2):
    assert grid2.j_min == 1
    assert grid2.j_max == 4
    assert grid2.band_window == (-1, 6)
    assert list(grid2.resolved_bands) == [1, 2, 3, 4]


def test_band_window_follows_box_size():
    grid = Grid(2, 256, 32 / (2 * math.pi))
    assert 2.0 ** (grid.j_min - 1) >= 1 / grid.box_l
    assert 2.0 ** (grid.j_max + 1) <= grid.n / (2 * grid.box_l)


@pytest.mark.parametrize("dim, n", [(4, 64), (2, 48), (3, 4)])
def test_grid_rejects_bad_shapes(dim, n):
    with pytest.raises(ArgumentError):
        Grid(dim, n, 1.0)


def test_band_outside_window_names_it(grid2):
    with pytest.raises(BandRangeError) as info:
        delta_j(plane_wave(grid2, (4, 0)), 9)
    assert info.value.j_lo == -1 and info.value.j_hi == 6


def test_cutoff_profile_shape():
    t = np.linspace(0, 5, 2001)
    phi = CUTOFF.phi(t)
    assert np.all((phi >= 0) & (phi <= 1))
    assert np.all(np.diff(phi) <= 1e-15)
    assert np.all(phi[t <= 0.25] == 1.0)
    assert np.all(phi[t >= 1.0] == 0.0)
    psi = CUTOFF.psi(t)
    assert np.all(psi[(t < 0.25) | (t > 4.0)] == 0.0)


def test_partition_of_unity_on_lattice(grid2):
    lo, hi = grid2.band_window
    t = grid2.xi_sq[grid2.xi_sq > 0]
    assert float(np.max(CUTOFF.partition_residual(t, lo, hi))) <= 1e-12


def test_wave_at_band_center_is_kept(grid2):
    wave = plane_wave(grid2, (4, 0))
    assert sup(delta_j(wave, 2) - wave) <= 1e-14


def test_far_wave_is_removed(grid2):
    wave = plane_wave(grid2, (16, 0))
    assert sup(delta_j(wave, 1)) == 0.0


def test_tilde_band_fixes_band(bandlimited):
    for j in (1, 2, 3, 4):
        piece = delta_j(bandlimited, j)
        assert sup(tilde_delta_j(piece, j) - piece) <= 1e-14 * max(sup(piece), 1.0)


def test_bands_telescope(bandlimited):
    rebuilt = reconstruct(band_decomposition(bandlimited))
    assert sup(rebuilt - bandlimited) <= 1e-10 * sup(bandlimited)


def test_low_pass_is_sum_of_lower_bands(bandlimited):
    grid = bandlimited.grid
    lo, _ = grid.band_window
    j = 3
    lower = reconstruct({i: delta_j(bandlimited, i) for i in range(lo, j)})
    assert sup(s_j(bandlimited, j) - lower) <= 1e-12 * sup(bandlimited)


def l2(field):
    return math.sqrt(float(np.sum(np.abs(field.values) ** 2)) * field.grid.cell_volume)


def test_band_energies_bracket_the_total(bandlimited):
    grid = bandlimited.grid
    energies = [l2(delta_j(bandlimited, j)) ** 2 for j in grid.data_bands]
    total = l2(bandlimited) ** 2
    assert 0.5 * total <= math.fsum(energies) <= total * (1 + 1e-12)


@pytest.mark.parametrize("j", [2, 3])
def test_bernstein_bounds_on_a_band(bandlimited, j):
    piece = delta_j(bandlimited, j)
    size = l2(piece)
    gradient = math.sqrt(l2(derivative(piece, (1, 0))) ** 2 + l2(derivative(piece, (0, 1))) ** 2)
    assert 2.0 ** (j - 1) * size * (1 - 1e-12) <= gradient <= 2.0 ** (j + 1) * size * (1 + 1e-12)
    assert sup(piece) <= 2.0 ** (j + 2) / math.sqrt(piece.grid.volume) * size * (1 + 1e-12)


def test_heat_on_plane_wave(grid2):
    wave = plane_wave(grid2, (3, 4))
    t = 0.02
    assert sup(heat(wave, t) - wave * math.exp(-25 * t)) <= 1e-15


def test_heat_semigroup(bandlimited):
    lhs = heat(heat(bandlimited, 0.01), 0.03)
    assert sup(lhs - heat(bandlimited, 0.04)) <= 1e-12 * sup(bandlimited)
    assert heat(bandlimited, 0.0) is bandlimited


def test_heat_rejects_negative_time(bandlimited):
    with pytest.raises(ArgumentError):
        heat(bandlimited, -1.0)


def test_scalar_symbol(grid2):
    wave = plane_wave(grid2, (1, 0))
    assert sup(Scalar1().apply(wave) - wave * 1j) <= 1e-15
    constant = from_physical(grid2, np.full(grid2.shape, 3.0), mean_zero=False)
    assert sup(Scalar1().apply(constant)) <= 1e-15


def test_parse_symbol():
    assert parse_symbol("scalar1:axis=1") == Scalar1(axis=1)
    assert parse_symbol("cone:width=0.3") == ScalarCone(width=0.3)
    assert isinstance(parse_symbol("leray"), LerayDiv)
    with pytest.raises(ArgumentError):
        parse_symbol("curl")


@pytest.mark.parametrize("text", ["scalar1", "cone"])
def test_symbols_are_degree_one(grid2, text):
    assert symbol_homogeneity_error(parse_symbol(text), grid2) <= 1e-12


def test_rescale_identity_and_same_box(grid2):
    wave = plane_wave(grid2, (2, 1))
    assert dyadic_rescale(wave, 0) is wave
    moved = dyadic_rescale(wave, 1, same_box=True)
    assert moved.coef[4, 2] == pytest.approx(2.0)
    assert np.count_nonzero(moved.coef) == 1


def test_rescale_without_headroom(grid2):
    with pytest.raises(BandRangeError):
        dyadic_rescale(plane_wave(grid2, (20, 0)), 1, same_box=True)


def test_rescale_moves_bands(bandlimited):
    moved = dyadic_rescale(bandlimited, 1)
    assert moved.grid.box_l == pytest.approx(0.5)
    for j in (2, 3):
        assert sup(delta_j(moved, j + 1)) == pytest.approx(2 * sup(delta_j(bandlimited, j)), rel=1e-12)


def test_translate_by_lattice_cells(grid2):
    values = np.random.default_rng(5).standard_normal(grid2.shape)
    field = from_physical(grid2, values, mean_zero=False)
    shifted = translate(field, (3, -2))
    assert np.allclose(shifted.values.real, np.roll(values, (3, -2), axis=(0, 1)), atol=1e-12)


def test_derivative_of_plane_wave(grid2):
    wave = plane_wave(grid2, (2, 3))
    assert sup(derivative(wave, (1, 1)) - wave * (2j * 3j)) <= 1e-13


def test_product_of_plane_waves_is_exact(grid2):
    f = plane_wave(grid2, (5, 1))
    g = plane_wave(grid2, (-2, 7))
    fg = product(f, g, strict=True)
    expected = plane_wave(grid2, (3, 8))
    assert np.max(np.abs(fg.coef - expected.coef)) <= 1e-13


def test_strict_product_flags_dropped_content(grid2):
    f = plane_wave(grid2, (20, 0))
    with pytest.raises(AliasingError):
        product(f, f, strict=True)


def test_binary_operations_need_one_grid(grid2):
    other = Grid(2, 32, 1.0)
    with pytest.raises(GridMismatchError):
        plane_wave(grid2, (1, 0)) + plane_wave(other, (1, 0))


def test_field_shape_is_checked(grid2):
    with pytest.raises(ShapeError):
        SpectralField(grid2, np.zeros((32, 32)))


def test_mean_zero_flag_clears_zero_mode(grid2):
    field = from_physical(grid2, np.ones(grid2.shape))
    assert field.coef[0, 0] == 0


def test_leray_projection_is_divergence_free(grid2):
    rng = np.random.default_rng(8)
    parts = [random_bandlimited(grid2, rng, 1, 3).coef for _ in range(2)]
    projected = leray_project(SpectralField(grid2, np.stack(parts)))
    divergence = sum(1j * np.broadcast_to(grid2.xi[k], grid2.shape) * projected.coef[k] for k in range(2))
    assert float(np.max(np.abs(divergence))) <= 1e-12 * float(np.max(np.abs(projected.coef)))


def test_leray_symbol_output_is_divergence_free(grid2, rng):
    parts = [random_bandlimited(grid2, rng, 1, 3).coef for _ in range(4)]
    tensor = SpectralField(grid2, np.stack(parts).reshape((2, 2) + grid2.shape))
    out = apply_symbol(tensor, parse_symbol("leray"))
    assert out.coef.shape == (2,) + grid2.shape
    divergence = sum(1j * np.broadcast_to(grid2.xi[k], grid2.shape) * out.coef[k] for k in range(2))
    assert float(np.max(np.abs(divergence))) <= 1e-12 * float(np.max(np.abs(out.coef)))
    with pytest.raises(ShapeError):
        apply_symbol(plane_wave(grid2, (1, 0)), parse_symbol("leray"))
