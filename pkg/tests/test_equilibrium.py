import numpy as np
import pytest

import bohm_ergo.equilibrium as eq
from bohm_ergo.dynamics import IntegratorConfig
from bohm_ergo.equilibrium import (
    EnvelopeFailure,
    distribution_distance,
    equivariance_distance,
    sample_initial,
    sample_initial_constrained_sum,
)
from bohm_ergo.quadrature import ks_critical_value
from bohm_ergo.wavemodels import (
    DoubleSlitState,
    GaussianPacket1D,
    OscillatorSuperposition2D,
    TwoParticleEntangledState,
)

CFG = IntegratorConfig(t0=0.0, t_end=1.0, rel_tol=1e-6, abs_tol=1e-9,
                       output_stride=1.0)


class TestSampling:
    def test_empty(self):
        s = sample_initial(GaussianPacket1D(), 0.0, 0, 1)
        assert len(s) == 0

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            sample_initial(GaussianPacket1D(), 0.0, -1, 1)

    def test_gaussian_mean(self):
        model = GaussianPacket1D(center0=2.0, sigma0=1.0)
        s = sample_initial(model, 0.0, 100_000, 1234)
        assert abs(s.coords.mean() - 2.0) < 3.0 / np.sqrt(1e5) * 3.0

    def test_seed_determinism(self):
        model = DoubleSlitState(half_separation=1.0, sigma0=0.2)
        a = sample_initial(model, 0.0, 5000, 99)
        b = sample_initial(model, 0.0, 5000, 99)
        assert np.array_equal(a.coords, b.coords)
        c = sample_initial(model, 0.0, 5000, 100)
        assert not np.array_equal(a.coords, c.coords)

    def test_double_slit_against_quadrature_cdf(self):
        model = DoubleSlitState(half_separation=1.0, sigma0=0.2)
        s = sample_initial(model, 0.0, 100_000, 77)
        stat = distribution_distance(model, s.coords, 0.0)["c0"]
        assert stat < 1.95 / np.sqrt(1e5) * 1.5

    @pytest.mark.parametrize("model", [
        TwoParticleEntangledState(half_separation=1.0, sigma0=0.2),
        OscillatorSuperposition2D.default_pair(1.0, 2.0),
    ], ids=lambda m: type(m).__name__)
    def test_two_coordinate_sampling(self, model):
        s = sample_initial(model, 0.0, 30_000, 11)
        stats = distribution_distance(model, s.coords, 0.0)
        assert max(stats.values()) < 1.5 * ks_critical_value(30_000)

    def test_samples_stay_in_support(self):
        model = DoubleSlitState(half_separation=1.0, sigma0=0.2)
        s = sample_initial(model, 0.0, 20_000, 3)
        assert model.density_many(s.coords, 0.0).min() > 1e-300

    def test_sampling_at_late_time_uses_evolved_density(self):
        model = TwoParticleEntangledState(half_separation=1.0, sigma0=0.2)
        s = sample_initial(model, 1.5, 30_000, 8)
        stats = distribution_distance(model, s.coords, 1.5)
        assert max(stats.values()) < 1.5 * ks_critical_value(30_000)

    def test_envelope_failure_guard(self, monkeypatch):
        model = OscillatorSuperposition2D.default_pair(1.0, 2.0)
        good = eq._envelope_for(model, 0.0)
        # an envelope parked far away from the density accepts ~nothing
        bad = eq._MixtureEnvelope(means=good.means + 40.0, sigmas=good.sigmas,
                                  weights=good.weights, bound=good.bound)
        monkeypatch.setattr(eq, "_envelope_for", lambda m, t: bad)
        with pytest.raises(EnvelopeFailure):
            sample_initial(model, 0.0, 256, 5)


class TestConstrainedSampling:
    def test_sum_is_pinned_exactly(self):
        model = TwoParticleEntangledState(half_separation=1.0, sigma0=0.01)
        s = sample_initial_constrained_sum(model, 0.0, 2000, 7, total=0.0)
        assert np.max(np.abs(s.coords.sum(axis=1))) == 0.0

    def test_nonzero_total(self):
        model = TwoParticleEntangledState(half_separation=1.0, sigma0=1.0)
        s = sample_initial_constrained_sum(model, 0.0, 2000, 7, total=0.3)
        assert np.max(np.abs(s.coords.sum(axis=1) - 0.3)) < 1e-12

    def test_difference_mode_matches_relative_state(self):
        # the y1 - y2 marginal of the constrained draw is the wide-slit state
        model = TwoParticleEntangledState(half_separation=1.0, sigma0=0.2)
        s = sample_initial_constrained_sum(model, 0.0, 50_000, 21, total=0.0)
        rel = DoubleSlitState(half_separation=np.sqrt(2.0), sigma0=0.2)
        v = (s.coords[:, 0] - s.coords[:, 1]) / np.sqrt(2.0)
        stat = distribution_distance(rel, v[:, None], 0.0)["c0"]
        assert stat < 1.5 * ks_critical_value(50_000)

    def test_requires_pair_state(self):
        with pytest.raises(TypeError):
            sample_initial_constrained_sum(GaussianPacket1D(), 0.0, 10, 1, 0.0)


class _DoubledFlow(GaussianPacket1D):
    """Corrupted guidance: velocities scaled by two (equivariance must fail).

    With sigma0 = 0.5 the packet has spread by sqrt(5) at t = 1, so the
    corrupted flow overshoots the true width by more than a factor two.
    """

    def guidance_many(self, coords, t):
        v, a = super().guidance_many(coords, t)
        return 2.0 * v, a


class TestEquivariance:
    def test_identity_flow_matches_sampling_statistic(self):
        model = GaussianPacket1D()
        s = sample_initial(model, 0.0, 20_000, 2024)
        r = equivariance_distance(model, s, 0.0, CFG)
        direct = distribution_distance(model, s.coords, 0.0)
        assert r.statistic == direct["c0"]
        assert r.n_failed == 0

    def test_packet_flow_stays_equilibrated(self):
        model = GaussianPacket1D()
        s = sample_initial(model, 0.0, 50_000, 2024)
        r = equivariance_distance(model, s, 1.0, CFG)
        assert r.statistic < 0.012

    def test_corrupted_flow_is_detected(self):
        model = _DoubledFlow(sigma0=0.5)
        s = sample_initial(model, 0.0, 20_000, 555)
        r = equivariance_distance(model, s, 1.0, CFG)
        assert r.statistic > 0.05

    def test_t1_before_t0_rejected(self):
        model = GaussianPacket1D()
        s = sample_initial(model, 1.0, 100, 1)
        with pytest.raises(ValueError):
            equivariance_distance(model, s, 0.5, CFG)
