import numpy as np
import pytest

from bohm_ergo.dynamics import (
    EnsembleResult,
    IntegratorConfig,
    StepCollapseError,
    Trajectory,
    flow_ensemble,
    integrate_trajectory,
)
from bohm_ergo.wavemodels import (
    DoubleSlitState,
    GaussianPacket1D,
    NodeProximityError,
    OscillatorSuperposition2D,
    TwoParticleEntangledState,
)

PAIR = TwoParticleEntangledState(half_separation=1.0, sigma0=0.2)


def _cfg(**kw):
    base = dict(t0=0.0, t_end=1.0, output_stride=0.1)
    base.update(kw)
    return IntegratorConfig(**base)


class TestSingleTrajectory:
    def test_drifting_center_rides_the_drift(self):
        model = GaussianPacket1D(drift=0.7)
        tr = integrate_trajectory(model, np.array([0.0]), _cfg(t_end=3.0))
        assert np.max(np.abs(tr.coords[:, 0] - 0.7 * tr.times)) < 1e-8

    def test_coordinates_scale_with_width(self):
        model = GaussianPacket1D(sigma0=1.0)
        tr = integrate_trajectory(model, np.array([1.0]), _cfg(t_end=3.0))
        np.testing.assert_allclose(tr.coords[:, 0], model.width(tr.times),
                                   rtol=1e-6)

    def test_richardson_self_oracle(self):
        cfg = _cfg(t_end=2.0)
        tight = _cfg(t_end=2.0, rel_tol=cfg.rel_tol / 100,
                     abs_tol=cfg.abs_tol / 100)
        for model, q0 in [(GaussianPacket1D(), np.array([0.8])),
                          (PAIR, np.array([1.2, -0.9])),
                          (OscillatorSuperposition2D.default_pair(), np.array([1.0, 0.5]))]:
            end = integrate_trajectory(model, q0, cfg).coords[-1]
            ref = integrate_trajectory(model, q0, tight).coords[-1]
            scale = np.maximum(1.0, np.abs(ref))
            assert np.max(np.abs(end - ref) / scale) < 10 * cfg.rel_tol

    def test_record_grid_hits_t_end(self):
        tr = integrate_trajectory(GaussianPacket1D(), np.array([0.3]),
                                  _cfg(t_end=0.95, output_stride=0.2))
        assert tr.times[-1] == 0.95
        assert np.all(np.diff(tr.times) > 0)

    def test_node_start_raises(self):
        osc = OscillatorSuperposition2D.default_pair()
        with pytest.raises(NodeProximityError):
            integrate_trajectory(osc, np.array([0.0, 0.0]), _cfg())

    def test_step_collapse_on_uncappable_speed(self):
        # a velocity cap below the field's actual speed forces endless halving
        model = GaussianPacket1D(drift=0.7)
        with pytest.raises(StepCollapseError):
            integrate_trajectory(model, np.array([0.0]), _cfg(v_cap=1e-3))


class TestInvariants:
    def test_mirror_pairing(self):
        cfg = _cfg()
        q0 = np.array([1.3, -0.8])
        fwd = integrate_trajectory(PAIR, q0, cfg)
        bwd = integrate_trajectory(PAIR, -q0, cfg)
        assert np.max(np.abs(fwd.coords + bwd.coords)) <= 10 * cfg.rel_tol

    def test_sum_coordinate_spreading_law(self):
        model = TwoParticleEntangledState(half_separation=1.0, sigma0=1.0)
        cfg = _cfg(t_end=5.0, rel_tol=1e-9, abs_tol=1e-12, output_stride=0.05)
        tr = integrate_trajectory(model, np.array([1.15, -0.85]), cfg)
        predicted = 0.3 * np.sqrt(1.0 + (tr.times / 2.0) ** 2)
        rel = np.abs(tr.coords.sum(axis=1) - predicted) / predicted
        assert np.max(rel) < 1e-6

    def test_point_slit_constraint_is_preserved(self):
        cfg = _cfg(t_end=3.0)
        tr = integrate_trajectory(PAIR, np.array([1.1, -1.1]), cfg)
        assert np.max(np.abs(tr.coords.sum(axis=1))) <= 10 * cfg.abs_tol

    def test_double_slit_non_crossing(self):
        model = DoubleSlitState(half_separation=1.0, sigma0=0.2)
        cfg = _cfg(t_end=2.0, output_stride=0.02)
        for y0 in (0.6, 1.0, 1.4):
            tr = integrate_trajectory(model, np.array([y0]), cfg)
            assert np.all(tr.coords[:, 0] > 0)
            mirror = integrate_trajectory(model, np.array([-y0]), cfg)
            assert np.all(mirror.coords[:, 0] < 0)


class TestEnsembles:
    def test_empty_sample_set(self):
        res = flow_ensemble(PAIR, np.empty((0, 2)), _cfg())
        assert res.coords.shape[0] == 0
        assert res.failures == {}

    def test_rerun_is_bit_identical(self):
        rng = np.random.default_rng(5)
        q0 = np.column_stack([rng.normal(1, 0.2, 300), rng.normal(-1, 0.2, 300)])
        a = flow_ensemble(PAIR, q0, _cfg())
        b = flow_ensemble(PAIR, q0, _cfg())
        assert np.array_equal(a.coords, b.coords)

    def test_worker_count_does_not_change_bytes(self):
        rng = np.random.default_rng(6)
        q0 = np.column_stack([rng.normal(1, 0.2, 200), rng.normal(-1, 0.2, 200)])
        one = flow_ensemble(PAIR, q0, _cfg(), workers=1)
        four = flow_ensemble(PAIR, q0, _cfg(), workers=4)
        assert np.array_equal(one.coords, four.coords)

    def test_batch_row_equals_single_integration(self):
        rng = np.random.default_rng(7)
        q0 = np.column_stack([rng.normal(1, 0.2, 50), rng.normal(-1, 0.2, 50)])
        res = flow_ensemble(PAIR, q0, _cfg())
        single = integrate_trajectory(PAIR, q0[31], _cfg())
        assert np.array_equal(single.coords, res.coords[31])

    def test_failures_are_collected_not_fatal(self):
        osc = OscillatorSuperposition2D.default_pair()
        q0 = np.array([[1.0, 0.5], [0.0, 0.0], [0.8, -0.6]])
        res = flow_ensemble(osc, q0, _cfg())
        assert set(res.failures) == {1}
        assert isinstance(res.failures[1], NodeProximityError)
        assert res.ok_mask.tolist() == [True, False, True]
        assert np.all(np.isfinite(res.final_coords()))
        with pytest.raises(NodeProximityError):
            res.trajectory(1)


class TestValidation:
    def test_config_rejects_bad_spans(self):
        with pytest.raises(ValueError):
            IntegratorConfig(t0=1.0, t_end=1.0, output_stride=0.1)
        with pytest.raises(ValueError):
            IntegratorConfig(t0=0.0, t_end=1.0, output_stride=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(t0=0.0, t_end=1.0, rel_tol=-1e-8, output_stride=0.1)

    def test_trajectory_rejects_disorder(self):
        with pytest.raises(ValueError):
            Trajectory(times=np.array([0.0, 0.0]), coords=np.zeros((2, 1)))
        with pytest.raises(ValueError):
            Trajectory(times=np.array([0.0, 1.0]),
                       coords=np.array([[0.0], [np.nan]]))

    def test_trajectory_interpolation(self):
        tr = Trajectory(times=np.array([0.0, 1.0, 2.0]),
                        coords=np.array([[0.0], [2.0], [6.0]]))
        assert tr.at(0.5)[0] == pytest.approx(1.0)
        with pytest.raises(ValueError):
            tr.at(3.0)
