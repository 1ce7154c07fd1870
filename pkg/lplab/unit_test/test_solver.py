import math

import numpy as np
import pytest

from lab_service.duhamel import Trajectory
from lab_service.errors import ArgumentError, MarginError
from lab_service.solver import (
    MildSolver,
    SolverConfig,
    catalan,
    catalan_by_recursion,
    get_solver_service,
    quarter_sum,
    series_bound,
    truncated_series,
)
from lab_service.spectral_core import plane_wave, zeros

FAST = SolverConfig(probe_pairs=2, quad_nodes=8, K=5, max_iter=40, tol=1e-10)


@pytest.fixture
def solver(grid2):
    return MildSolver(grid2, FAST)


@pytest.fixture
def small_datum(solver, bandlimited):
    return solver.scale_to_margin(bandlimited, 0.1)


def test_catalan_numbers():
    assert [catalan(k) for k in range(1, 8)] == [1, 1, 2, 5, 14, 42, 132]
    assert catalan_by_recursion(30) == [catalan(k) for k in range(1, 31)]
    with pytest.raises(ArgumentError):
        catalan(0)


@pytest.mark.parametrize("K", [100, 400, 1600])
def test_quarter_sum_gap(K):
    gap = 0.25 - quarter_sum(K)
    assert 0.25 * K ** -0.5 <= gap <= 0.3 * K ** -0.5


def test_quarter_sum_increases():
    sums = [quarter_sum(K) for K in (2, 3, 10, 50)]
    assert sums[0] == pytest.approx(1.0 / 16.0)
    assert all(b > a for a, b in zip(sums, sums[1:]))


def test_series_bound_closed_form():
    assert series_bound(1.0, 0.25) == pytest.approx(0.5)
    assert series_bound(2.0, 0.0) == 0.0
    assert series_bound(1.0, 0.125) == pytest.approx(truncated_series(1.0, 0.125, 40), rel=1e-10)


def test_series_bound_rejects():
    with pytest.raises(MarginError):
        series_bound(1.0, 0.3)
    with pytest.raises(ArgumentError):
        series_bound(0.0, 0.1)
    with pytest.raises(ArgumentError):
        series_bound(1.0, -0.1)


def test_zero_datum_converges_at_once(solver, grid2):
    u, report = solver.picard_solve(zeros(grid2))
    assert report.converged
    assert report.iterations == 1
    assert report.norm_a == 0.0
    assert report.margin == 0.0
    assert solver.f_norm(u) == 0.0


def test_large_datum_is_refused(solver, bandlimited):
    with pytest.raises(MarginError) as info:
        solver.picard_solve(solver.scale_to_margin(bandlimited, 8.0))
    assert info.value.report.status == "refused"


def test_over_margin_is_report_only(grid2, bandlimited):
    solver = MildSolver(grid2, FAST.model_copy(update={"allow_over_margin": True, "max_iter": 2}))
    _, report = solver.picard_solve(solver.scale_to_margin(bandlimited, 2.0))
    assert report.margin > 1.0
    assert any("report-only" in note for note in report.notes)


def test_small_datum_converges(solver, small_datum):
    u, report = solver.picard_solve(small_datum)
    assert report.margin == pytest.approx(0.1, rel=1e-9)
    assert report.converged
    assert report.final_residual <= 1e-6 * report.solution_norm
    assert report.in_uniqueness_ball
    assert all(b < a for a, b in zip(report.residuals[:4], report.residuals[1:4]))


def test_picard_matches_series(solver, small_datum):
    u, _ = solver.picard_solve(small_datum)
    terms, report = solver.tk_series(small_datum)
    assert len(terms) == FAST.K
    assert report.term_norms == [t.norm for t in terms]
    assert all(n <= b * (1 + 1e-9) for n, b in zip(report.term_norms[:2], report.catalan_bounds[:2]))
    total = solver.series_sum(terms)
    assert solver.f_norm(u - total) <= 1e-3 * solver.f_norm(u)


def test_initial_iterate_does_not_matter(solver, small_datum):
    from_heat, _ = solver.picard_solve(small_datum, init="heat")
    from_zero, report = solver.picard_solve(small_datum, init="zero")
    assert report.converged
    assert solver.f_norm(from_heat - from_zero) <= 1e-8


def test_local_times(solver):
    times = solver.local_times(0.01)
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(0.01)
    assert times == sorted(times)
    with pytest.raises(ArgumentError):
        solver.local_times(0.0)


def test_local_solve_small_datum(solver, small_datum):
    u, report = solver.local_solve(small_datum, 0.01)
    assert report.horizon == 0.01
    assert set(report.operator_norms) == {"T/1", "T/4", "T/16"}
    assert report.converged
    assert 0.0 <= report.tail_ratio <= 1.0
    assert u.t_max == pytest.approx(0.01)


def test_tail_ratio_uses_the_base_space(solver, grid2):
    # two top-band waves meet at the origin: sup 1, L² norm 2π/√2
    low = plane_wave(grid2, (4, 0))
    top = plane_wave(grid2, (16, 0), amplitude=0.5) + plane_wave(grid2, (0, 16), amplitude=0.5)
    assert solver.spec.base.p == 2.0
    assert solver.tail_ratio(low + top) == pytest.approx(math.sqrt(0.5), rel=1e-10)
    assert solver.tail_ratio(low) == 0.0


def test_smoothing_rows(solver, small_datum):
    rows = solver.smoothing_check(Trajectory.heat_flow(small_datum), [(0,), (1, 0)])
    assert [r.theory for r in rows] == [-0.5, -1.0]
    assert rows[1].order == (1, 0)
    assert all(math.isfinite(r.slope) for r in rows)
    assert len(rows[0].sup_values) == len(rows[0].times)


def test_scale_to_margin_leaves_zero_alone(solver, grid2):
    zero = zeros(grid2)
    assert solver.scale_to_margin(zero) is zero


def test_solver_service_is_reused(grid2):
    first = get_solver_service(grid2, FAST)
    assert get_solver_service(grid2, FAST) is first
    assert get_solver_service(grid2, FAST.model_copy(update={"K": 3})) is not first


def test_datum_on_another_grid(solver, grid3):
    with pytest.raises(ArgumentError):
        solver.picard_solve(zeros(grid3))


def test_default_space_is_critical_lebesgue(grid2):
    spec = SolverConfig().space(2)
    assert spec.N == 4
    assert np.isclose(spec.base.p, 2.0)


def test_solution_returns_to_datum_weakly(solver, grid2):
    wave = plane_wave(grid2, (2, 0)) + plane_wave(grid2, (-2, 0))
    datum = solver.scale_to_margin(wave, 0.1)
    u, _ = solver.picard_solve(datum)
    rows = solver.weak_limit_check(u, datum, times=[1.0, 1e-2, 1e-6])
    assert [t for t, _ in rows] == [1.0, 1e-2, 1e-6]
    assert rows[0][1] > 0
    assert rows[2][1] <= 1e-2 * rows[0][1]
