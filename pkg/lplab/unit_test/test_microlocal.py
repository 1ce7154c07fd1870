import math

import numpy as np
import pytest

from lab_service.duhamel import Trajectory
from lab_service.errors import ArgumentError, DegenerateSetError, PreconditionError
from lab_service.initial_data import sawtooth
from lab_service.microlocal import (
    DensityProfile,
    analytic_profile,
    convolution_stability,
    decay_check,
    default_deltas,
    density_function,
    dini_check,
    eta_from_density,
    eta_is_summable,
    lipschitz_defect,
    profile_from_function,
)
from lab_service.point_sets import PointSet, distance_field
from lab_service.spectral_core import Grid


@pytest.fixture(scope="module")
def grid3_32():
    return Grid(3, 32, 1.0)


def test_point_set_grammar():
    assert PointSet.parse("point(0,0)") == PointSet.point((0.0, 0.0))
    assert PointSet.parse("plane(1, 0.5)") == PointSet.plane(1, 0.5)
    assert PointSet.parse("line(2,0,1)") == PointSet.line(2, (0.0, 1.0))
    assert PointSet.parse("pts(0 0; 1 1)").points == ((0.0, 0.0), (1.0, 1.0))
    assert PointSet.parse("empty").is_empty
    for text in ("point(0,0)", "plane(1,0.5)", "pts(0 0;1 1)"):
        assert PointSet.parse(PointSet.parse(text).to_text()) == PointSet.parse(text)
    with pytest.raises(ArgumentError):
        PointSet.parse("circle(1)")
    with pytest.raises(ArgumentError):
        PointSet.parse("point(a,b)")


def test_point_set_from_file(tmp_path):
    path = tmp_path / "set.json"
    path.write_text("[[0, 0], [1.5, 2]]")
    assert PointSet.parse(f"file({path})").points == ((0.0, 0.0), (1.5, 2.0))


def test_distance_to_plane(grid2):
    dist = distance_field(PointSet.plane(0, 0.0), grid2)
    x1 = grid2.coordinates[0]
    expected = np.minimum(x1, grid2.box_length - x1)
    assert np.allclose(dist, expected, atol=1e-12)


def test_distance_field_is_lipschitz(grid2):
    dist = distance_field(PointSet.parse("pts(0 0; 2 1; 4 5)"), grid2)
    assert lipschitz_defect(dist, grid2) <= 1e-12


def test_point_of_the_wrong_dimension(grid2, grid3):
    with pytest.raises(ArgumentError):
        PointSet.point((0.0, 0.0, 0.0)).grid_mask(grid2)
    with pytest.raises(ArgumentError):
        PointSet.point((0.0, 0.0)).grid_mask(grid3)
    with pytest.raises(ArgumentError):
        PointSet.parse("pts(0 0 0)").grid_mask(grid2)
    assert PointSet.point((0.0, 0.0)).grid_mask(grid2).sum() == 1


def test_distance_to_empty_set(grid2):
    with pytest.raises(DegenerateSetError):
        distance_field(PointSet(), grid2)
    with pytest.raises(DegenerateSetError):
        density_function(PointSet(), grid2)


def test_default_deltas(grid2):
    deltas = default_deltas(grid2)
    assert deltas[0] == 1.0
    assert deltas[-1] == pytest.approx(4.0 / grid2.n)


@pytest.mark.parametrize("delta", [1.0, 0.5, 0.25])
def test_point_density_in_two_dimensions(grid2, delta):
    profile = density_function(PointSet.point((0.0, 0.0)), grid2, [delta])
    assert profile.values[0] == pytest.approx(delta ** 2, rel=0.2)


@pytest.mark.parametrize("delta", [0.5, 0.25])
def test_line_density_in_two_dimensions(grid2, delta):
    profile = density_function(PointSet.plane(0, 0.0), grid2, [delta])
    oracle = analytic_profile("plane", 2)
    expected = dict(zip(oracle.deltas, oracle.values))[delta]
    assert profile.values[0] == pytest.approx(expected, rel=0.2)


@pytest.mark.parametrize("delta", [1.0, 0.5])
def test_point_density_in_three_dimensions(grid3_32, delta):
    profile = density_function(PointSet.point((0.0, 0.0, 0.0)), grid3_32, [delta])
    assert profile.values[0] == pytest.approx(delta ** 3, rel=0.2)


def test_density_rejects_bad_deltas(grid2):
    with pytest.raises(ArgumentError):
        density_function(PointSet.point((0.0, 0.0)), grid2, [0.0])
    with pytest.raises(ArgumentError):
        density_function(PointSet.point((0.0, 0.0)), grid2, [1.5])


def test_oracles_at_full_scale():
    for kind, dim in (("point", 2), ("point", 3), ("plane", 2), ("plane", 3), ("line", 3)):
        assert analytic_profile(kind, dim).values[0] == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        analytic_profile("curve", 3)


def test_dyadic_run_stops_at_a_gap():
    profile = DensityProfile(deltas=[1.0, 0.5, 0.25, 0.1], values=[1.0, 0.5, 0.2, 0.1], provenance="test", dim=2)
    assert profile.dyadic() == [1.0, 0.5, 0.2]
    assert profile.is_monotone()


@pytest.mark.parametrize(
    "func, passes",
    [
        (lambda d: d ** 3, True),
        (lambda d: d, True),
        (lambda d: 1.0 / math.log(math.e / d), False),
    ],
    ids=["cube", "linear", "inverse-log"],
)
def test_dini_verdicts(func, passes):
    assert dini_check(profile_from_function(func, 3)).passes is passes


def test_dini_needs_monotone_profile():
    profile = DensityProfile(deltas=[1.0, 0.5, 0.25, 0.125], values=[0.1, 0.5, 0.2, 0.1], provenance="test", dim=2)
    with pytest.raises(PreconditionError):
        dini_check(profile)
    short = DensityProfile(deltas=[1.0, 0.5], values=[1.0, 0.5], provenance="test", dim=2)
    with pytest.raises(ArgumentError):
        dini_check(short)


def test_eta_from_point_density_decays():
    eta = eta_from_density(1.0, analytic_profile("point", 3))
    n = np.arange(len(eta.values))
    slope = np.polyfit(n, np.log2(eta.values), 1)[0]
    assert -2.3 <= slope <= -1.7
    assert eta_is_summable(eta)


def test_eta_from_full_density_is_not_summable():
    eta = eta_from_density(1.0, profile_from_function(lambda d: 1.0, 3))
    assert not eta_is_summable(eta)
    with pytest.raises(ArgumentError):
        eta_from_density(0.0, analytic_profile("point", 3))


def test_heat_flow_decay_near_a_plane():
    grid = Grid(2, 128, 1.0)
    u = Trajectory.heat_flow(sawtooth(grid))
    report = decay_check(u, PointSet.plane(0, 0.0), 2.0)
    assert report.case == "a"
    assert len(report.rows) == grid.j_max
    assert report.spread <= 2.0


@pytest.mark.parametrize("s_prime, case", [(2.0, "a"), (1.0, "b"), (0.5, "c")])
def test_decay_cases(grid2, s_prime, case):
    u = Trajectory.heat_flow(sawtooth(grid2))
    report = decay_check(u, PointSet.plane(0, 0.0), s_prime)
    assert report.case == case
    assert bool(report.notes) is (case == "b")
    with pytest.raises(ArgumentError):
        decay_check(u, PointSet.plane(0, 0.0), 0.0)


def test_convolution_stability_constants(grid2):
    report = convolution_stability(PointSet.plane(0, 0.0), grid2, 1.0)
    assert sorted(report.constants) == list(grid2.resolved_bands)
    assert report.kernel_exponent == pytest.approx(4.0)
    assert all(0 < c < math.inf for c in report.constants.values())
    assert 1.0 <= report.spread < math.inf


def test_convolution_stability_needs_fast_kernel(grid2):
    with pytest.raises(ArgumentError):
        convolution_stability(PointSet.plane(0, 0.0), grid2, 1.0, kernel_exponent=3.0)
