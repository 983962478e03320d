import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bohm_ergo.wavemodels import (
    Configuration,
    DoubleSlitState,
    GaussianPacket1D,
    NodeProximityError,
    OscillatorSuperposition2D,
    PhysicalConstants,
    TwoParticleEntangledState,
    amplitude,
    density,
    velocity,
    width,
)
from oracles import (
    _packet_value,
    crank_nicolson_free_packet,
    fd_phase_velocity,
    schrodinger_residual,
)

PACKET = GaussianPacket1D(center0=0.0, drift=0.0, sigma0=1.0)
SLIT = DoubleSlitState(half_separation=1.0, sigma0=0.2)
PAIR = TwoParticleEntangledState(half_separation=1.0, sigma0=0.2)
OSC = OscillatorSuperposition2D.default_pair(1.0, 2.0)

ALL_MODELS = [PACKET, SLIT, PAIR, OSC]


def _random_points(model, rng, n):
    box = model.support_box(0.0, nsigma=2.0)
    return np.column_stack([rng.uniform(lo, hi, n) for lo, hi in box])


def _support_points(model, n, seed):
    # density-weighted draws: the residual check probes where the state lives
    from bohm_ergo.equilibrium import sample_initial
    return sample_initial(model, 0.0, n, seed).coords


def _norm_by_quadrature(model, t):
    from bohm_ergo.quadrature import integrate_1d, integrate_2d
    box = model.support_box(t)
    if model.n_coords == 1:
        return integrate_1d(lambda y: model.density_many(y[:, None], t),
                            *box[0], abs_tol=1e-10)
    return integrate_2d(lambda pts: model.density_many(pts, t), box,
                        abs_tol=1e-10)


class TestAmplitude:
    def test_center_modulus(self):
        val = amplitude(PACKET, Configuration((0.0,), 1, 1), 0.0)
        assert abs(val) == pytest.approx((2.0 * math.pi) ** -0.25, abs=1e-15)
        assert val.imag == pytest.approx(0.0, abs=1e-15)

    def test_double_slit_parity(self):
        ys = np.linspace(-2.5, 2.5, 17)
        left = np.abs(SLIT.amplitude_many(-ys[:, None], 0.8))
        right = np.abs(SLIT.amplitude_many(ys[:, None], 0.8))
        np.testing.assert_allclose(left, right, rtol=0, atol=1e-15)

    def test_against_crank_nicolson(self):
        # independent PDE solution of the same initial packet
        exact = amplitude(PACKET, Configuration((0.5,), 1, 1), 1.0)
        cn = crank_nicolson_free_packet(0.5, 1.0)
        assert abs(exact - cn) < 1e-6

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            amplitude(PAIR, Configuration((0.1,), 1, 1), 0.0)
        with pytest.raises(ValueError):
            PACKET.amplitude_many(np.zeros((3, 2)), 0.0)


class TestDensity:
    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: type(m).__name__)
    def test_is_modulus_squared(self, model):
        rng = np.random.default_rng(1)
        pts = _random_points(model, rng, 10)
        np.testing.assert_allclose(model.density_many(pts, 0.7),
                                   np.abs(model.amplitude_many(pts, 0.7)) ** 2,
                                   rtol=1e-14)

    @pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
    @pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: type(m).__name__)
    def test_normalized(self, model, t):
        assert _norm_by_quadrature(model, t) == pytest.approx(1.0, abs=1e-8)

    def test_pair_density_matches_direct_formula(self):
        # written out from the packet definition, bypassing the model classes
        d, s0 = 1.0, 0.2
        y1, y2, t = 0.9, -1.1, 0.0
        overlap = math.exp(-(d**2) / (2.0 * s0**2))
        plus = _packet_value(np.array([y1]), t, +d, s0)[0] \
            * _packet_value(np.array([y2]), t, -d, s0)[0]
        minus = _packet_value(np.array([y1]), t, -d, s0)[0] \
            * _packet_value(np.array([y2]), t, +d, s0)[0]
        expected = abs(plus + minus) ** 2 / (2.0 * (1.0 + overlap**2))
        got = density(PAIR, Configuration((y1, y2), 2, 1), t)
        assert got == pytest.approx(expected, rel=1e-12)


class TestVelocity:
    def test_drift_at_instantaneous_center(self):
        model = GaussianPacket1D(drift=0.7)
        v = velocity(model, np.array([0.7 * 1.3]), 1.3)
        assert v[0] == pytest.approx(0.7, abs=1e-12)

    def test_real_wavefunction_is_static_at_t0(self):
        rng = np.random.default_rng(2)
        ys = rng.uniform(-3, 3, 8)
        v, _ = PACKET.guidance_many(ys[:, None], 0.0)
        np.testing.assert_allclose(v, 0.0, atol=1e-14)

    def test_matches_phase_gradient(self):
        v = velocity(PAIR, np.array([0.3, -0.3]), 0.5)
        ref = fd_phase_velocity(PAIR, np.array([0.3, -0.3]), 0.5)
        assert np.max(np.abs(v - ref)) / np.max(np.abs(ref)) < 1e-6

    def test_node_raises(self):
        # both product terms vanish at the origin of the two-term oscillator
        with pytest.raises(NodeProximityError):
            velocity(OSC, np.array([0.0, 0.0]), 0.0)

    @pytest.mark.parametrize("model", [SLIT, PAIR], ids=lambda m: type(m).__name__)
    def test_parity_antisymmetry(self, model):
        rng = np.random.default_rng(3)
        pts = _random_points(model, rng, 12)
        t = 0.9
        v_plus, _ = model.guidance_many(pts, t)
        v_minus, _ = model.guidance_many(-pts, t)
        np.testing.assert_allclose(v_minus, -v_plus, atol=1e-12)

    def test_exchange_symmetry(self):
        rng = np.random.default_rng(4)
        pts = _random_points(PAIR, rng, 12)
        v, _ = PAIR.guidance_many(pts, 0.6)
        v_swapped, _ = PAIR.guidance_many(pts[:, ::-1], 0.6)
        np.testing.assert_allclose(v, v_swapped[:, ::-1], atol=1e-12)


class TestWidth:
    def test_identity_at_t0(self):
        assert width(PACKET, 0.0) == PACKET.sigma0

    def test_root_two_point(self):
        # (hbar / 2 m sigma0^2) t = 1 doubles the variance
        pkt = GaussianPacket1D(sigma0=0.5)
        t_star = 2.0 * pkt.constants.mass * pkt.sigma0**2 / pkt.constants.hbar
        assert width(pkt, t_star) == pytest.approx(0.5 * math.sqrt(2.0), rel=1e-15)

    def test_direct_substitution(self):
        assert width(PACKET, 4.0) == pytest.approx(math.sqrt(5.0), rel=1e-15)

    @given(center=st.floats(-5, 5), drift=st.floats(-3, 3),
           t=st.floats(0.0, 10.0))
    @settings(max_examples=25, deadline=None)
    def test_ratio_independent_of_center_and_drift(self, center, drift, t):
        base = GaussianPacket1D(sigma0=0.7)
        moved = GaussianPacket1D(center0=center, drift=drift, sigma0=0.7)
        assert moved.width(t) / moved.sigma0 == base.width(t) / base.sigma0


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: type(m).__name__)
def test_schrodinger_residual(model):
    rng = np.random.default_rng(42)
    pts = _support_points(model, 100, seed=42)
    worst = 0.0
    for row in pts:
        t = rng.uniform(0.05, 3.0)
        resid, scale = schrodinger_residual(model, row, t)
        worst = max(worst, resid / (scale + 1e-12))
    assert worst < 1e-5


def test_constants_validation():
    with pytest.raises(ValueError):
        PhysicalConstants(hbar=0.0)
    with pytest.raises(ValueError):
        GaussianPacket1D(sigma0=-1.0)
    with pytest.raises(ValueError):
        TwoParticleEntangledState(symmetrization_sign=-1)
    with pytest.raises(ValueError):
        OscillatorSuperposition2D(omega1=1.0, omega2=2.0,
                                  terms=((0, 1, 1.0), (0, 1, 0.0)))
    with pytest.raises(ValueError):
        OscillatorSuperposition2D(omega1=1.0, omega2=2.0,
                                  terms=((0, 1, 0.5), (1, 0, 0.5)))


def test_configuration_validation():
    with pytest.raises(ValueError):
        Configuration((1.0, 2.0), 1, 1)
    with pytest.raises(ValueError):
        Configuration((float("nan"),), 1, 1)
