import math

import numpy as np
import pytest

from dpsynth import exponential_mechanism, gaussian_noise, laplace_mechanism
from dpsynth.mechanisms import mechanism_calls, reset_mechanism_calls


class TestLaplace:
    def test_infinite_epsilon_is_exact_passthrough(self, rng):
        x = np.array([100.0, -3.25, 0.125])
        out = laplace_mechanism(x, 1.0, math.inf, rng)
        assert np.array_equal(out, x)

    def test_scale_is_sensitivity_over_epsilon(self):
        # b = 2 / 0.5 = 4; empirical variance of 1e6 draws ~ 2 b^2 = 32
        rng = np.random.default_rng(11)
        out = laplace_mechanism(np.zeros(1_000_000), 2.0, 0.5, rng)
        assert np.var(out) == pytest.approx(32.0, rel=0.02)

    def test_variance_matches_analytic(self):
        rng = np.random.default_rng(13)
        out = laplace_mechanism(np.zeros(1_000_000), 1.0, 1.0, rng)
        assert np.var(out) == pytest.approx(2.0, rel=0.02)

    def test_rejects_bad_parameters(self, rng):
        with pytest.raises(ValueError):
            laplace_mechanism(np.zeros(3), 0.0, 1.0, rng)
        with pytest.raises(ValueError):
            laplace_mechanism(np.zeros(3), 1.0, -1.0, rng)

    def test_same_seed_same_noise(self):
        a = laplace_mechanism(np.zeros(32), 1.0, 1.0, np.random.default_rng(5))
        b = laplace_mechanism(np.zeros(32), 1.0, 1.0, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestGaussian:
    def test_mean_within_clt_bound(self):
        n, sigma = 1_000_000, 3.0
        out = gaussian_noise(n, sigma, np.random.default_rng(17))
        assert abs(out.mean()) < 4 * sigma / math.sqrt(n)

    def test_variance_matches_analytic(self):
        out = gaussian_noise(1_000_000, 0.7, np.random.default_rng(19))
        assert np.var(out) == pytest.approx(0.49, rel=0.02)

    def test_same_seed_identical_streams(self):
        a = gaussian_noise((4, 4), 1.1, np.random.default_rng(3))
        b = gaussian_noise((4, 4), 1.1, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_rejects_nonpositive_sigma(self, rng):
        with pytest.raises(ValueError):
            gaussian_noise(3, 0.0, rng)


class TestExponential:
    def test_equal_utilities_select_uniformly(self):
        rng = np.random.default_rng(23)
        counts = np.zeros(4)
        for _ in range(100_000):
            counts[exponential_mechanism(range(4), [1.0] * 4, 1.0, 2.0, rng)] += 1
        assert np.all(np.abs(counts / 100_000 - 0.25) < 0.01)

    def test_two_candidate_probability(self):
        # P(a) = e^1 / (e^1 + 1) with eps=2, du=1, utilities (1, 0)
        expected = math.e / (math.e + 1.0)
        rng = np.random.default_rng(29)
        n, hits = 200_000, 0
        for _ in range(n):
            hits += exponential_mechanism(["a", "b"], [1.0, 0.0], 1.0, 2.0, rng) == "a"
        assert hits / n == pytest.approx(expected, abs=0.01)

    def test_infinite_epsilon_is_argmax(self, rng):
        for _ in range(50):
            assert exponential_mechanism("abc", [3.0, 1.0, 2.0], 1.0, math.inf, rng) == "a"

    def test_empty_candidates_rejected(self, rng):
        with pytest.raises(ValueError):
            exponential_mechanism([], [], 1.0, 1.0, rng)

    def test_frequency_ratio_within_privacy_bounds(self):
        # for candidates i, j: p_i / p_j must lie within exp(+-eps) of the
        # analytic exp-weight ratio at the 1% level
        eps, du = 1.5, 2.0
        utilities = [0.0, 1.0, 3.0]
        analytic = np.exp(eps * np.asarray(utilities) / (2 * du))
        analytic /= analytic.sum()
        rng = np.random.default_rng(31)
        counts = np.zeros(3)
        n = 300_000
        for _ in range(n):
            counts[exponential_mechanism(range(3), utilities, du, eps, rng)] += 1
        freq = counts / n
        for i in range(3):
            for j in range(3):
                ratio = freq[i] / freq[j]
                target = analytic[i] / analytic[j]
                assert math.exp(-eps) * target * 0.99 <= ratio <= math.exp(eps) * target * 1.01


def test_counters_track_noisy_calls_only(rng):
    reset_mechanism_calls()
    laplace_mechanism(np.zeros(2), 1.0, math.inf, rng)
    exponential_mechanism([0, 1], [0.0, 1.0], 1.0, math.inf, rng)
    assert mechanism_calls() == {"laplace": 0, "gaussian": 0, "exponential": 0}
    laplace_mechanism(np.zeros(2), 1.0, 1.0, rng)
    gaussian_noise(2, 1.0, rng)
    exponential_mechanism([0, 1], [0.0, 1.0], 1.0, 1.0, rng)
    assert mechanism_calls() == {"laplace": 1, "gaussian": 1, "exponential": 1}
    reset_mechanism_calls()
