"""Collective spin state: preparation statistics, rotations, populations."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qndspin.errors import InvalidParameterError
from qndspin.state import (
    CollectiveSpinState,
    Rotation,
    jz,
    populations,
    prepare_css,
    rotate,
    set_jz,
)

X = np.array([1.0, 0.0, 0.0])
SOUTH = np.array([0.0, 0.0, -1.0])


def sample_states(n_eff, trials, seed=0, contrast=1.0, direction=X):
    rng = np.random.default_rng(seed)
    return [prepare_css(n_eff, direction, contrast, rng) for _ in range(trials)]


class TestPrepare:
    def test_fresh_css_variances(self):
        s = prepare_css(1e5, X, 1.0, None)
        assert s.var_theta == pytest.approx(1e-5)
        assert s.var_phi == pytest.approx(1e-5)
        assert s.fluct_theta == 0.0 and s.fluct_phi == 0.0

    def test_small_ensemble_variance(self):
        # n_eff = 4: var_theta = 0.25, i.e. DeltaJz = sqrt(N)/2 = 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = prepare_css(4, X, 1.0, None)
        assert s.var_theta == pytest.approx(0.25)
        assert jz(replace(s, fluct_theta=math.sqrt(s.var_theta))) == pytest.approx(1.0, rel=0.05)

    def test_sampled_phase_uncertainty(self):
        # rms of delta-theta at N = 7e5 is 1/sqrt(N) = 1.195e-3 rad within 2%
        states = sample_states(7e5, 10000, seed=3)
        dt = np.array([s.fluct_theta for s in states])
        assert dt.std() == pytest.approx(1.0 / math.sqrt(7e5), rel=0.02)

    def test_jz_population_scale(self):
        # DeltaJz = sqrt(N)/2 = 418.3 at N = 7e5
        states = sample_states(7e5, 10000, seed=4)
        vals = np.array([jz(s) for s in states])
        assert vals.std() == pytest.approx(418.33, rel=0.05)

    def test_projection_noise_scaling(self):
        # Var(Jz) = N/4 within 5% across a decade and a half of N
        for n_eff, seed in [(1e4, 10), (1e5, 11), (7e5, 12)]:
            vals = np.array([jz(s) for s in sample_states(n_eff, 10000, seed=seed)])
            assert np.var(vals, ddof=1) == pytest.approx(n_eff / 4.0, rel=0.05)

    def test_projection_noise_contrast_independent(self):
        # the quadrature scale absorbs the preparation contrast
        vals = np.array([jz(s) for s in sample_states(1e5, 10000, seed=5, contrast=0.9)])
        assert np.var(vals, ddof=1) == pytest.approx(2.5e4, rel=0.05)

    def test_css_isotropy(self):
        states = sample_states(1e5, 10000, seed=6)
        dt = np.array([s.fluct_theta for s in states])
        dp = np.array([s.fluct_phi for s in states])
        # variance-ratio fluctuation is ~ sqrt(2/T); 3 sigma band
        assert abs(dt.var() / dp.var() - 1.0) < 3.0 * math.sqrt(4.0 / len(states))

    def test_invalid_parameters(self):
        with pytest.raises(InvalidParameterError):
            prepare_css(-5, X, 1.0, None)
        with pytest.raises(InvalidParameterError):
            prepare_css(0, X, 1.0, None)
        with pytest.raises(InvalidParameterError):
            prepare_css(100, [1.0, 1.0, 0.0], 1.0, None)

    def test_small_n_warns(self):
        with pytest.warns(UserWarning):
            prepare_css(4, X, 1.0, None)

    def test_uncertainty_product_at_prep(self):
        for contrast in (1.0, 0.97, 0.8):
            s = prepare_css(1e5, X, contrast, None)
            assert s.uncertainty_product() >= s.heisenberg_bound_sq() * (1 - 1e-6)


class TestRotation:
    def test_south_pole_to_equator(self):
        s = prepare_css(1e5, SOUTH, 1.0, None)
        s2 = rotate(s, Rotation(math.pi / 2, 0.0, 0.0))
        assert np.allclose(s2.mean_dir, X, atol=1e-12)

    def test_pi_pair_identity(self):
        # R[pi, pi/2, 0] then R[pi, -pi/2, 0] returns the Bloch vector
        s = prepare_css(1e5, X, 1.0, np.random.default_rng(0))
        s2 = rotate(rotate(s, Rotation(math.pi, math.pi / 2)), Rotation(math.pi, -math.pi / 2))
        assert np.allclose(s2.mean_dir, s.mean_dir, atol=1e-12)

    def test_two_pi_identity_on_mean(self):
        s = prepare_css(1e5, X, 1.0, None)
        for phi, theta in [(0.0, 0.0), (1.1, 0.3), (-2.0, -0.7)]:
            s2 = rotate(s, Rotation(2 * math.pi, phi, theta))
            assert np.allclose(s2.mean_dir, s.mean_dir, atol=1e-12)

    def test_inverse_rotation_identity(self):
        rng = np.random.default_rng(2)
        s = prepare_css(1e5, X, 1.0, rng)
        r = Rotation(0.7, 1.3, -0.4)
        s2 = rotate(rotate(s, r), r.inverse())
        assert np.allclose(s2.mean_dir, s.mean_dir, atol=1e-12)
        assert s2.fluct_theta == pytest.approx(s.fluct_theta, abs=1e-12)
        assert s2.fluct_phi == pytest.approx(s.fluct_phi, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        psi1=st.floats(-6.0, 6.0),
        psi2=st.floats(-6.0, 6.0),
        phi=st.floats(-3.0, 3.0),
        theta=st.floats(-1.4, 1.4),
    )
    def test_composition_same_axis(self, psi1, psi2, phi, theta):
        rng = np.random.default_rng(7)
        s = prepare_css(1e5, X, 1.0, rng)
        a = rotate(rotate(s, Rotation(psi1, phi, theta)), Rotation(psi2, phi, theta))
        b = rotate(s, Rotation(psi1 + psi2, phi, theta))
        assert np.allclose(a.mean_dir, b.mean_dir, atol=1e-10)
        assert a.fluct_theta == pytest.approx(b.fluct_theta, abs=1e-10)
        assert a.fluct_phi == pytest.approx(b.fluct_phi, abs=1e-10)

    def test_quadrature_mixing_about_mean(self):
        # rotating about the mean mixes the variances as cos^2/sin^2
        s = prepare_css(1e5, X, 1.0, None)
        s = replace(s, var_theta=4e-5, var_phi=1e-5)
        for psi in (0.3, 1.0, math.pi / 2):
            s2 = rotate(s, Rotation(psi, math.pi / 2, 0.0))  # axis along +x
            expect = math.cos(psi) ** 2 * 4e-5 + math.sin(psi) ** 2 * 1e-5
            assert s2.var_theta == pytest.approx(expect, rel=1e-9)
            assert np.allclose(s2.mean_dir, X, atol=1e-12)

    def test_mean_stays_unit_under_many_rotations(self):
        rng = np.random.default_rng(8)
        s = prepare_css(1e5, X, 1.0, rng)
        for _ in range(200):
            s = rotate(s, Rotation(rng.uniform(-3, 3), rng.uniform(0, 6.3), rng.uniform(-1, 1)))
        assert abs(np.linalg.norm(s.mean_dir) - 1.0) < 1e-12

    def test_uncertainty_product_preserved_by_rotations(self):
        # rotations are symplectic on the quadrature pair
        rng = np.random.default_rng(9)
        s = prepare_css(1e5, X, 0.97, rng)
        bound = s.heisenberg_bound_sq()
        for _ in range(50):
            s = rotate(s, Rotation(rng.uniform(-3, 3), rng.uniform(0, 6.3), rng.uniform(-1, 1)))
            cov = s.var_theta * s.var_phi - s.cov_tp**2
            assert cov >= bound * (1 - 1e-6)


class TestPopulations:
    def test_south_pole(self):
        s = prepare_css(1e5, SOUTH, 1.0, None)
        n_up, n_down = populations(s)
        assert n_up == pytest.approx(0.0, abs=1e-6)
        assert n_down == pytest.approx(1e5)

    def test_equator_half_half(self):
        s = prepare_css(1e5, X, 1.0, None)
        n_up, n_down = populations(s)
        assert n_up == pytest.approx(5e4)
        assert n_down == pytest.approx(5e4)

    def test_fluctuation_to_population(self):
        # delta-theta = +1.195e-3 at N = 7e5: n_up - n_down = 2 Jz = 836.7
        s = prepare_css(7e5, X, 1.0, None)
        s = replace(s, fluct_theta=1.195e-3)
        n_up, n_down = populations(s)
        assert n_up - n_down == pytest.approx(836.7, rel=1e-3)

    def test_contrast_scales_mean_population(self):
        s = prepare_css(1e5, SOUTH, 0.8, None)
        n_up, n_down = populations(s)
        assert n_up == pytest.approx(1e5 * 0.1)
        assert n_down == pytest.approx(1e5 * 0.9)

    def test_set_jz_round_trip(self):
        rng = np.random.default_rng(1)
        s = prepare_css(1e5, X, 0.97, rng)
        s2 = set_jz(s, 1234.5)
        assert jz(s2) == pytest.approx(1234.5, abs=1e-6)
