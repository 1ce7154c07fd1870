import math

import numpy as np
import pytest

from lab_service.counterexample_lab import (
    OrthonormalBump,
    ThetaProfile,
    ball_criterion,
    cone_sample,
    cone_shell,
    delta_sequence,
    gaussian_test_function,
    kernel_lower_bound,
    kernel_sweep,
    lacunary_field,
    pairing_demo,
    prop19_pair,
    prop19_ratio,
    prop19_sharpness,
    random_signs,
    segment_distance,
    tail_verdict,
)
from lab_service.errors import ArgumentError, PreconditionError
from lab_service.norms import EtaSequence
from lab_service.spectral_core import Grid, plane_wave


@pytest.fixture(scope="module")
def grid128():
    return Grid(2, 128, 1.0)


@pytest.fixture(scope="module")
def harmonic():
    return EtaSequence.from_rule(lambda n: (n + 1) ** -0.5, 0, 40)


def test_prop19_ratio_grows_like_four_to_the_k(grid128):
    ratios = [prop19_ratio(k, grid=grid128) for k in range(1, grid128.j_max)]
    for k, value in enumerate(ratios, start=1):
        assert value == pytest.approx(2.0 * 4.0 ** k, rel=1e-10)
    quotients = [b / a for a, b in zip(ratios, ratios[1:])]
    assert quotients == pytest.approx([4.0] * len(quotients), rel=1e-10)


def test_prop19_pair_stays_bounded(grid128):
    norms = [prop19_pair(k, grid=grid128).norms()[0] for k in range(1, grid128.j_max)]
    assert all(1.0 <= n <= 3.0 for n in norms)
    assert max(norms) / min(norms) <= 1.5


def test_prop19_pair_rejects(grid128):
    with pytest.raises(ArgumentError):
        prop19_pair(grid128.j_max, grid=grid128)
    with pytest.raises(ArgumentError):
        prop19_pair(2)
    with pytest.raises(PreconditionError):
        prop19_pair(2, phi=plane_wave(grid128, (3, 0)))


def test_prop19_sharpness_floor_holds_for_every_k(grid128):
    rows = [prop19_sharpness(k, grid=grid128) for k in range(1, grid128.j_max)]
    for row in rows:
        assert row.floor == pytest.approx(0.25, rel=1e-10)
        assert row.ratio >= row.floor
        assert row.f_norm == pytest.approx(row.g_norm, rel=1e-10)
    ratios = [row.ratio for row in rows]
    assert max(ratios) / min(ratios) <= 1.5


def test_harmonic_delta_sequence(harmonic):
    delta = delta_sequence(harmonic)
    assert delta.j0 == 4
    assert delta.delta_sq[4] == pytest.approx(1.0 / 5.0, rel=1e-12)
    for j in range(5, 41):
        assert delta.delta_sq[j] == pytest.approx(1.0 / (j + 1) - 1.0 / (8.0 * j), rel=1e-12)
    reference = math.fsum(1.0 / (j + 1) for j in range(4, 41))
    assert 0.5 <= delta.partial_sums[40] / reference <= 2.0
    assert delta.hypothesis_holds
    assert all(s >= -1e-15 for s in delta.slack.values())
    assert delta.coefficient(4) == pytest.approx(math.sqrt(0.2))


def test_abel_partial_sums(harmonic):
    delta = delta_sequence(harmonic)
    for J in (5, 12, 40):
        assert delta.abel_partial_sum(J) == pytest.approx(delta.partial_sums[J], abs=1e-12)


def test_geometric_eta_fails_hypothesis():
    eta = EtaSequence.from_rule(lambda n: 2.0 ** (-n), 0, 30)
    assert not delta_sequence(eta).hypothesis_holds


def test_delta_sequence_rejects(harmonic):
    with pytest.raises(PreconditionError):
        delta_sequence(EtaSequence(values=(0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.0)))
    with pytest.raises(ArgumentError):
        delta_sequence(harmonic, window=(10, 8))
    with pytest.raises(ArgumentError):
        delta_sequence(harmonic, window=(4, 10)).coefficient(11)


def test_tail_verdict():
    assert tail_verdict([4.0 ** -n for n in range(10)]) == (True, pytest.approx(0.25))
    summable, worst = tail_verdict([1.0 / (n + 1) for n in range(40)])
    assert not summable and worst > 0.9


def test_bump_partition_of_unity():
    assert OrthonormalBump(dim=2).partition_error() < 1e-8


def test_bump_translates_are_orthonormal():
    bump = OrthonormalBump(dim=2)
    grid = bump.grid_for(4, 64)
    assert grid.box_length == pytest.approx(4.0)
    sites = [(a, b) for a in range(4) for b in range(4)]
    gram = bump.gram(grid, sites)
    assert np.allclose(gram, np.eye(len(sites)), atol=1e-6)


def test_bump_grid_needs_room():
    with pytest.raises(ArgumentError):
        OrthonormalBump(dim=2).grid_for(32, 128)
    with pytest.raises(ArgumentError):
        OrthonormalBump(dim=2).grid_for(0, 64)


def test_cone_shell_sites():
    sites = cone_shell(3, 1.0, 0.5, 2)
    assert len(sites) == 25
    assert all(6 <= a <= 10 and -2 <= b <= 2 for a, b in sites)


def test_random_signs_are_reproducible():
    first, second = random_signs(3), random_signs(3)
    sites = [(i, j) for i in range(6) for j in range(6)]
    assert [first(s) for s in sites] == [second(s) for s in sites]
    assert set(first(s) for s in sites) == {-1.0, 1.0}


def test_lacunary_constants_ignore_signs(harmonic):
    bump = OrthonormalBump(dim=2)
    grid = bump.grid_for(16, 256)
    shells = (2, 3)
    delta = delta_sequence(harmonic, window=shells, j0=2)
    constants = []
    for seed in (1, 2):
        field = lacunary_field(delta, random_signs(seed), 1.0, bump, grid, shells)
        result = ball_criterion(field, harmonic, shells=shells)
        assert sorted(result.per_radius) == [0, 1, 2, 3]
        assert result.constant > 0
        constants.append(result.constant)
    assert 0.5 <= constants[0] / constants[1] <= 2.0


def test_gaussian_test_function_has_unit_mass():
    grid = Grid(2, 64, 1.0)
    psi = gaussian_test_function(grid)
    assert psi.coef[0, 0] * grid.volume == pytest.approx(1.0)
    assert np.min(psi.values.real) > 0


def test_pairing_demo_reports_finite_rows(harmonic):
    bump = OrthonormalBump(dim=2)
    grid = bump.grid_for(16, 256)
    shells = (2, 3)
    delta = delta_sequence(harmonic, window=shells, j0=2)
    demo = pairing_demo(delta, random_signs(1), 1.0, bump, grid, shells, points=(1.0, 2.0), order=8)
    assert demo.shells == [2, 3]
    assert demo.sites > 0
    assert demo.delta_energy == pytest.approx(delta.delta_sq[2] + delta.delta_sq[3])
    assert [row.x1 for row in demo.rows] == [1.0, 2.0]
    for row in demo.rows:
        assert math.isfinite(row.value) and math.isfinite(row.imag)
        assert row.b_sup > 0
        assert abs(complex(row.value, row.imag)) <= 1.01 * row.b_sup
        assert row.ratio == pytest.approx(abs(complex(row.value, row.imag)) / demo.delta_energy)


def test_lacunary_shells_must_fit(harmonic):
    bump = OrthonormalBump(dim=2)
    grid = bump.grid_for(4, 64)
    delta = delta_sequence(harmonic, window=(2, 3), j0=2)
    with pytest.raises(ArgumentError):
        lacunary_field(delta, random_signs(0), 1.0, bump, grid, (2, 3))


def test_segment_distance():
    assert segment_distance(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == 0.0
    assert segment_distance(np.array([3.0, 0.0]), np.array([2.0, 0.0])) == pytest.approx(1.0)
    assert segment_distance(np.array([1.0, 1.0]), np.array([2.0, 0.0])) == pytest.approx(1.0)


def test_kernel_sweep_is_positive():
    rows = kernel_sweep(cone_sample(20))
    assert len(rows) == 20
    assert all(r.in_hypothesis for r in rows)
    assert all(r.ratio > 0 for r in rows)


def test_kernel_scales_with_site_length():
    near = kernel_lower_bound(1.0, (8.0, 0.0, 0.0))
    far = kernel_lower_bound(1.0, (16.0, 0.0, 0.0))
    assert near.value / far.value == pytest.approx(8.0, abs=1.5)
    assert near.ratio == pytest.approx(1.0 + ThetaProfile().width ** 2, rel=1e-3)


def test_kernel_needs_positive_coordinates():
    with pytest.raises(ArgumentError):
        kernel_lower_bound(0.0, (8.0, 0.0, 0.0))
    with pytest.raises(ArgumentError):
        kernel_lower_bound(1.0, (-8.0, 0.0, 0.0))
