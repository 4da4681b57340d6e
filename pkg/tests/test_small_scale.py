import numpy as np
import pytest
from scipy.stats import rice

from dmimochan.geometry import Deployment, place_interacting_objects
from dmimochan.small_scale import (DEFAULT_RICE_LOS, DEFAULT_RICE_OLOS, IOSet,
                                   K_MAX, RiceModel, SmallScaleError,
                                   extract_ssf, filter_k_factor, fit_rice,
                                   synth_frequency_response)

from oracles import profile_rms_spread_oracle


@pytest.fixture
def dep():
    return Deployment(np.array([[2.0, 2.0, 4.0]]), num_tones=449)


@pytest.fixture
def ios(dep):
    rng = np.random.default_rng(100)
    return IOSet.from_objects(
        place_interacting_objects(rng, dep, 0, 200, 47e-9))


def ks_distance(samples, dist):
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    cdf = dist.cdf(x)
    return max(np.abs(np.arange(1, n + 1) / n - cdf).max(),
               np.abs(np.arange(n) / n - cdf).max())


class TestRiceModel:
    def test_k_factor_consistency(self):
        assert abs(DEFAULT_RICE_LOS.k_factor - 1.44) < 0.05
        assert abs(DEFAULT_RICE_OLOS.k_factor - 0.74) < 0.01

    def test_validation(self):
        with pytest.raises(SmallScaleError):
            RiceModel(-0.1, 0.5)
        with pytest.raises(SmallScaleError):
            RiceModel(0.5, 0.0)


class TestSynthFrequencyResponse:
    def test_infinite_k_gives_flat_unit_magnitude(self, dep, ios):
        h = synth_frequency_response([10.0, 5.0, 1.0], 0, ios, np.inf, dep)
        assert h.shape == (449,)
        assert np.allclose(np.abs(h), 1.0, atol=1e-9)

    def test_rayleigh_when_k_zero(self, dep, ios):
        rng = np.random.default_rng(3)
        powers = []
        samples = []
        for _ in range(300):
            pos = rng.uniform([0, 0, 0.5], [30, 12, 2.5])
            h = synth_frequency_response(pos, 0, ios, 0.0, dep)
            powers.append(np.mean(np.abs(h) ** 2))
            samples.append(np.abs(h[::16]))
        assert abs(np.mean(powers) - 1.0) < 0.02
        a = np.concatenate(samples)
        # Rayleigh = Rice with nu = 0; scale to unit mean power
        a = a / np.sqrt(np.mean(a ** 2))
        d = ks_distance(a, rice(1e-9, scale=np.sqrt(0.5)))
        assert d < 0.02

    def test_amplitude_matches_rice_fit(self, dep, ios):
        rng = np.random.default_rng(4)
        samples = []
        for _ in range(250):
            pos = rng.uniform([0, 0, 0.5], [30, 12, 2.5])
            h = synth_frequency_response(pos, 0, ios, 1.44, dep)
            samples.append(np.abs(h))
        a = np.concatenate(samples)
        assert a.size >= 100_000
        target = DEFAULT_RICE_LOS
        a = a * np.sqrt(target.mean_power / np.mean(a ** 2))
        d = ks_distance(a, target.frozen())
        assert d < 0.02

    def test_unit_mean_power_analytic(self, ios):
        # expectation over phases: K/(K+1) + sum(w^2)/(K+1)
        w2 = float((ios.weights ** 2).sum())
        for k in (0.0, 0.74, 1.44, 10.0):
            expected = k / (k + 1) + w2 / (k + 1)
            assert abs(expected - 1.0) < 1e-6

    def test_unit_mean_power_monte_carlo(self, dep, ios):
        rng = np.random.default_rng(9)
        total = 0.0
        n = 10_000
        pos = np.array([11.0, 7.0, 1.0])
        for _ in range(n // 100):
            redrawn = IOSet(ios.positions, ios.excess_delays, ios.weights,
                            rng.uniform(0, 2 * np.pi, len(ios)))
            h = synth_frequency_response(pos, 0, redrawn, 1.44, dep,
                                         anchor_phase=rng.uniform(0, 2 * np.pi))
            total += np.mean(np.abs(h) ** 2)
        assert abs(total / (n // 100) - 1.0) < 0.02

    def test_spatial_consistency_bit_identical(self, dep, ios):
        pos = [7.0, 3.0, 1.2]
        h1 = synth_frequency_response(pos, 0, ios, 0.9, dep, anchor_phase=0.3)
        # move away and come back; no hidden state
        synth_frequency_response([1.0, 1.0, 1.0], 0, ios, 0.9, dep)
        h2 = synth_frequency_response(pos, 0, ios, 0.9, dep, anchor_phase=0.3)
        assert np.array_equal(h1, h2)

    def test_matches_direct_dft_oracle(self, dep, ios):
        from dmimochan.geometry import SPEED_OF_LIGHT
        pos = np.array([9.0, 4.0, 1.0])
        k_inst = 0.8
        phase0 = 0.7
        h = synth_frequency_response(pos, 0, ios, k_inst, dep,
                                     anchor_phase=phase0)
        anchor = dep.anchors[0]
        lam = dep.wavelength
        f = dep.tone_frequencies
        d_dir = np.linalg.norm(pos - anchor)
        tau_dir = d_dir / SPEED_OF_LIGHT
        direct = np.sqrt(k_inst / (k_inst + 1)) * np.exp(
            -2j * np.pi * f * tau_dir) * np.exp(
            1j * (-2 * np.pi * d_dir / lam + phase0))
        diffuse = np.zeros_like(direct)
        for i in range(len(ios)):
            dpath = (np.linalg.norm(pos - ios.positions[i])
                     + np.linalg.norm(ios.positions[i] - anchor))
            tau = dpath / SPEED_OF_LIGHT + ios.excess_delays[i]
            phase = -2 * np.pi * dpath / lam + ios.phases[i]
            diffuse += ios.weights[i] * np.exp(-2j * np.pi * f * tau) \
                * np.exp(1j * phase)
        expected = direct + np.sqrt(1 / (k_inst + 1)) * diffuse
        assert np.allclose(h, expected, atol=1e-9)

    def test_profile_spread_near_target(self, ios):
        spread = profile_rms_spread_oracle(ios.excess_delays, ios.weights ** 2)
        assert abs(spread - 47e-9) / 47e-9 < 0.10

    def test_rejects_bad_inputs(self, dep, ios):
        with pytest.raises(SmallScaleError):
            synth_frequency_response([1, 1, 1], 0, ios, -0.5, dep)
        tiny = IOSet(ios.positions[:1], ios.excess_delays[:1],
                     ios.weights[:1], ios.phases[:1])
        with pytest.raises(SmallScaleError):
            synth_frequency_response([1, 1, 1], 0, tiny, 1.0, dep)


class TestFilterKFactor:
    def test_no_movement(self):
        assert filter_k_factor(1.44, 0.74, 0.0, 0.82) == 1.44

    def test_large_movement(self):
        assert abs(filter_k_factor(1.44, 0.74, 1e6, 0.82) - 0.74) < 1e-12

    def test_one_decorrelation_distance(self):
        out = filter_k_factor(1.44, 0.74, 1.0 / 0.82, 0.82)
        assert abs(out - (0.74 + (1.44 - 0.74) / np.e)) < 1e-12
        assert abs(out - 0.997) < 1e-3


class TestExtractSsf:
    def test_constant_gives_ones(self):
        A = np.full((5, 400), 3.3)
        out = extract_ssf(A, 300)
        assert out.shape == (5, 101)
        assert np.allclose(out, 1.0)

    def test_recovers_fast_factor(self):
        # factorized field: slow s(k) times fast unit-mean r(f, k)
        T, F, w = 4000, 8, 300
        k = np.arange(T)
        phases = np.linspace(0, 2 * np.pi, F, endpoint=False)
        r = 1.0 + 0.3 * np.cos(2 * np.pi * k[None, :] / 50 + phases[:, None])
        s = 1.0 + 0.5 * np.sin(2 * np.pi * k / 5000)
        out = extract_ssf(s[None, :] * r, w)
        centers = np.arange(T - w + 1) + (w - 1) // 2
        rel = (out - r[:, centers]) / r[:, centers]
        assert np.sqrt(np.mean(rel ** 2)) < 0.01

    def test_averaging_length_at_paper_speed(self):
        # 300 snapshots at 200 snapshots/s and <= 0.8 m/s stays within 1.6 m
        assert 300 / 200.0 * 0.8 <= 1.6

    def test_zero_average_errors(self):
        A = np.zeros((2, 400))
        with pytest.raises(SmallScaleError):
            extract_ssf(A, 300)

    def test_window_bounds(self):
        with pytest.raises(SmallScaleError):
            extract_ssf(np.ones((2, 100)), 101)


class TestFitRice:
    def test_constant_amplitude_sentinel(self):
        model = fit_rice(np.full(200, 3.0))
        assert model.k_factor >= K_MAX
        assert abs(model.nu - 3.0) < 1e-6

    def test_olos_monte_carlo(self):
        samples = rice.rvs(0.72 / 0.59, scale=0.59, size=1_000_000,
                           random_state=np.random.default_rng(7))
        model = fit_rice(samples)
        assert abs(model.k_factor - 0.74) < 0.05

    def test_los_monte_carlo(self):
        samples = rice.rvs(0.84 / 0.49, scale=0.49, size=1_000_000,
                           random_state=np.random.default_rng(8))
        model = fit_rice(samples)
        assert abs(model.k_factor - DEFAULT_RICE_LOS.k_factor) < 0.05

    def test_rayleigh_gives_zero_k(self):
        rng = np.random.default_rng(9)
        samples = np.abs(rng.normal(size=1_000_000)
                         + 1j * rng.normal(size=1_000_000)) / np.sqrt(2)
        model = fit_rice(samples)
        assert model.k_factor < 0.02

    def test_consistency_error_shrinks(self):
        errs = {n: [] for n in (10_000, 1_000_000)}
        for seed in range(5):
            for n in errs:
                samples = rice.rvs(0.72 / 0.59, scale=0.59, size=n,
                                   random_state=np.random.default_rng(seed + 50))
                errs[n].append(abs(fit_rice(samples).k_factor - 0.7446))
        assert np.mean(errs[1_000_000]) < np.mean(errs[10_000])

    def test_input_validation(self):
        with pytest.raises(SmallScaleError):
            fit_rice(np.ones(50))
        with pytest.raises(SmallScaleError):
            fit_rice(np.concatenate([np.ones(200), [-1.0]]))
