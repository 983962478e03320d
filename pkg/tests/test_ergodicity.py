import math

import numpy as np
import pytest

from bohm_ergo.dynamics import IntegratorConfig, Trajectory, integrate_trajectory
from bohm_ergo.ergodicity import (
    CoverageGrid,
    DegenerateFrequencies,
    ErgodicReport,
    coverage_fraction,
    cross_term_residual,
    find_unvisited_accessible_cell,
    recurrence_metric,
    time_averaged_density,
    trajectory_time_average,
)
from bohm_ergo.wavemodels import OscillatorSuperposition2D

AMP = 1.0 / math.sqrt(2.0)
SUP = OscillatorSuperposition2D.default_pair(1.0, 1.61)
PENDULUM = OscillatorSuperposition2D.default_pair(1.0, 2.0)
PERIOD = 2.0 * math.pi


class TestTimeAveragedDensity:
    def test_single_term_is_stationary(self):
        sup = OscillatorSuperposition2D(omega1=1.0, omega2=2.0, terms=((0, 1, 1.0),))
        pts = np.array([[0.4, 0.3], [-1.0, 0.2]])
        for horizon in (0.3, 2.0, 50.0):
            np.testing.assert_allclose(time_averaged_density(sup, pts, horizon),
                                       sup.stationary_density_many(pts), rtol=1e-14)

    def test_large_horizon_reaches_stationary_part(self):
        gap = min(abs(g) for g in SUP.level_gaps())
        horizon = 1e4 / gap
        rng = np.random.default_rng(0)
        pts = rng.uniform(-2, 2, (64, 2))
        dev = np.abs(time_averaged_density(SUP, pts, horizon)
                     - SUP.stationary_density_many(pts))
        assert np.max(dev) < 1e-3

    def test_cross_term_vanishes_on_sinc_zeros(self):
        gap = abs(SUP.level_gaps()[0])
        horizon = 2.0 * math.pi * 9 / gap
        pts = np.array([[0.5, 0.2]])
        np.testing.assert_allclose(time_averaged_density(SUP, pts, horizon),
                                   SUP.stationary_density_many(pts), atol=1e-15)

    def test_degenerate_terms_are_reported(self):
        degenerate = OscillatorSuperposition2D(omega1=1.0, omega2=1.0,
                                               terms=((0, 1, AMP), (1, 0, AMP)))
        with pytest.raises(DegenerateFrequencies):
            time_averaged_density(degenerate, np.array([[0.1, 0.1]]), 1.0)
        with pytest.raises(DegenerateFrequencies):
            cross_term_residual(degenerate, 1.0)

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            time_averaged_density(SUP, np.array([[0.0, 0.1]]), 0.0)


class TestCrossTermResidual:
    def test_single_term_residual_is_zero(self):
        sup = OscillatorSuperposition2D(omega1=1.0, omega2=2.0, terms=((1, 0, 1.0),))
        assert cross_term_residual(sup, 5.0) == pytest.approx(0.0, abs=1e-15)

    def test_sinc_envelope_decay(self):
        horizon = 20 * PERIOD
        ratio = cross_term_residual(SUP, 4 * horizon) / cross_term_residual(SUP, horizon)
        assert 1.0 / 6.0 <= ratio <= 3.0 / 8.0

    @pytest.mark.parametrize("periods", [17.3, 23.9, 31.1])
    def test_generic_horizons_decay_like_one_over_t(self, periods):
        horizon = periods * PERIOD
        ratio = cross_term_residual(SUP, 4 * horizon) / cross_term_residual(SUP, horizon)
        assert ratio < 1.0  # envelope decays; the precise value rides the sine

    def test_global_phase_invariance(self):
        phase = complex(math.cos(0.9), math.sin(0.9))
        rotated = OscillatorSuperposition2D(
            omega1=SUP.omega1, omega2=SUP.omega2,
            terms=tuple((n1, n2, phase * c) for n1, n2, c in SUP.terms))
        horizon = 13.7 * PERIOD
        assert cross_term_residual(rotated, horizon) == pytest.approx(
            cross_term_residual(SUP, horizon), rel=1e-12)


class TestCoverage:
    def test_stationary_eigenstate_covers_one_cell(self):
        sup = OscillatorSuperposition2D(omega1=1.0, omega2=2.0, terms=((1, 0, 1.0),))
        cfg = IntegratorConfig(t0=0.0, t_end=10.0, output_stride=0.5)
        tr = integrate_trajectory(sup, np.array([0.8, 0.4]), cfg)
        grid = CoverageGrid.for_superposition(sup)
        frac = coverage_fraction(tr, grid)
        assert int(grid.visited.sum()) == 1
        assert frac == pytest.approx(1.0 / grid.accessible.sum())

    def test_coverage_is_monotone_in_horizon(self):
        cfg = IntegratorConfig(t0=0.0, t_end=20 * PERIOD, rel_tol=1e-6,
                               abs_tol=1e-9, output_stride=0.05)
        tr = integrate_trajectory(PENDULUM, np.array([0.9, 0.35]), cfg)
        fractions = []
        for cut in (0.25, 0.5, 0.75, 1.0):
            grid = CoverageGrid.for_superposition(PENDULUM)
            grid.mark(tr.coords[: int(len(tr.times) * cut)])
            fractions.append(grid.fraction)
        assert all(b >= a for a, b in zip(fractions, fractions[1:]))

    def test_polyline_marks_intermediate_cells(self):
        grid = CoverageGrid.for_superposition(PENDULUM, resolution=32)
        grid.mark(np.array([[-1.5, -0.5], [1.5, 0.7]]))
        # the sloped sweep enters every column it crosses, not just the endpoints
        assert int(grid.visited.sum()) >= 23
        cols = np.unique(np.argwhere(grid.visited)[:, 0])
        assert np.array_equal(cols, np.arange(cols[0], cols[-1] + 1))

    def test_outside_points_are_counted(self):
        grid = CoverageGrid.for_superposition(PENDULUM)
        outside = grid.mark(np.array([[99.0, 99.0], [0.5, 0.5]]))
        assert outside == 1

    def test_witness_cell_search(self):
        grid = CoverageGrid.for_superposition(PENDULUM)
        cell = find_unvisited_accessible_cell(grid, PENDULUM)
        assert cell is not None
        grid.visited[:] = True
        assert find_unvisited_accessible_cell(grid, PENDULUM) is None

    def test_merge_requires_same_geometry(self):
        a = CoverageGrid.for_superposition(PENDULUM)
        b = CoverageGrid.for_superposition(PENDULUM)
        b.visited[3, 4] = True
        a.merge(b)
        assert a.visited[3, 4]
        with pytest.raises(ValueError):
            a.merge(CoverageGrid.for_superposition(PENDULUM, resolution=32))


class TestRecurrence:
    def test_exact_circle_recurs(self):
        t = np.linspace(0.0, 6 * PERIOD, 2401)
        circle = np.column_stack([np.cos(t), np.sin(t)])
        tr = Trajectory(times=t, coords=circle)
        assert recurrence_metric(tr, PERIOD) < 1e-4

    def test_off_period_candidate_is_penalized(self):
        t = np.linspace(0.0, 6 * PERIOD, 2401)
        circle = np.column_stack([np.cos(t), np.sin(t)])
        tr = Trajectory(times=t, coords=circle)
        assert recurrence_metric(tr, 0.61 * PERIOD) > 0.5

    def test_requires_two_periods(self):
        t = np.linspace(0.0, 1.0, 11)
        tr = Trajectory(times=t, coords=np.zeros((11, 2)))
        with pytest.raises(ValueError):
            recurrence_metric(tr, 0.9)


def test_trajectory_time_average_of_indicator():
    t = np.linspace(0.0, 1.0, 101)
    coords = np.column_stack([t, np.zeros_like(t)])
    tr = Trajectory(times=t, coords=coords)
    mean = trajectory_time_average(tr, lambda q: (q[:, 0] > 0.5).astype(float))
    assert mean == pytest.approx(0.5, abs=0.02)


def test_ergodic_report_consistency():
    rep = ErgodicReport(time_avg=1.0, space_avg=0.25, coverage_fraction=0.5,
                        cross_term_residual=0.01, horizon=10.0)
    assert rep.discrepancy == pytest.approx(0.75)
    with pytest.raises(ValueError):
        ErgodicReport(time_avg=float("nan"), space_avg=0.0,
                      coverage_fraction=0.0, cross_term_residual=0.0,
                      horizon=1.0)
