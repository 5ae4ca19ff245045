import math

import numpy as np
import pytest

from meml_bandits.environments import (
    ActionSetSpec,
    EnvironmentSpec,
    MixtureSpec,
    NoiseFamily,
    Regeneration,
    action_set_sequence,
    assumption_diagnostics,
    generate_action_set,
    noise_sequence,
    sample_noise,
    sample_task,
)
from meml_bandits.estimation import ConfigurationError


def _two_env_mixture():
    envs = tuple(EnvironmentSpec(np.array(m), NoiseFamily.GAUSSIAN, math.sqrt(0.5))
                 for m in ([1.0, 1.0], [3.0, 3.0]))
    return MixtureSpec(envs, (0.5, 0.5))


class TestEnvironmentSpec:
    @pytest.mark.parametrize("family,scale,var", [
        (NoiseFamily.GAUSSIAN, 0.5, 3 * 0.25),
        (NoiseFamily.UNIFORM_BOX, 0.6, 3 * 0.36 / 3),
    ])
    def test_analytic_variance(self, family, scale, var):
        env = EnvironmentSpec(np.zeros(3), family, scale)
        assert env.variance_about_mean() == pytest.approx(var)

    @pytest.mark.parametrize("family", list(NoiseFamily))
    def test_sampled_variance_matches(self, family, rng):
        env = EnvironmentSpec(np.array([1.0, -1.0]), family, 0.7)
        z = env.sample_offset(rng, size=200_000)
        emp = float(np.mean(np.sum(z ** 2, axis=1)))
        assert emp == pytest.approx(env.variance_about_mean(), rel=0.02)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=0.01)

    def test_truncated_support(self, rng):
        env = EnvironmentSpec(np.zeros(2), NoiseFamily.TRUNCATED_GAUSSIAN, 1.0, trunc_radius=0.5)
        z = env.sample_offset(rng, size=5000)
        assert np.max(np.abs(z)) <= 0.5
        assert env.support_bound == 0.5

    def test_defaults(self):
        env = EnvironmentSpec(np.zeros(2), NoiseFamily.TRUNCATED_GAUSSIAN, 0.5)
        assert env.trunc_radius == 2.0
        assert env.sub_gaussian_K == 0.5
        assert EnvironmentSpec(np.zeros(2), NoiseFamily.GAUSSIAN, 1.0).support_bound == math.inf

    def test_zero_variance_is_point_mass(self, rng):
        env = EnvironmentSpec(np.array([2.0, 2.0]), NoiseFamily.GAUSSIAN, 0.0)
        np.testing.assert_array_equal(env.sample_offset(rng, size=4), np.zeros((4, 2)))

    def test_negative_scale_rejected(self):
        with pytest.raises(ConfigurationError):
            EnvironmentSpec(np.zeros(2), NoiseFamily.GAUSSIAN, -1.0)


class TestMixture:
    def test_two_env_quantities(self):
        mix = _two_env_mixture()
        assert mix.gamma == pytest.approx(2 * math.sqrt(2))
        np.testing.assert_allclose(mix.mixture_mean, [2.0, 2.0])
        # 1 + ||mu_i - [2,2]||^2 = 1 + 2
        assert mix.pooled_variance() == pytest.approx(3.0)
        assert mix.m == 2 and mix.dim == 2

    def test_probabilities_must_sum_to_one(self):
        envs = _two_env_mixture().environments
        with pytest.raises(ConfigurationError, match="probabilities must sum to 1"):
            MixtureSpec(envs, (0.6, 0.6))

    def test_mismatched_lengths(self):
        envs = _two_env_mixture().environments
        with pytest.raises(ConfigurationError):
            MixtureSpec(envs, (1.0,))
        with pytest.raises(ConfigurationError):
            MixtureSpec((envs[0], EnvironmentSpec(np.zeros(3))), (0.5, 0.5))

    def test_single_environment_gamma(self):
        assert MixtureSpec((EnvironmentSpec(np.zeros(2)),), (1.0,)).gamma == math.inf

    def test_label_frequencies(self):
        envs = _two_env_mixture().environments
        mix = MixtureSpec(envs, (0.2, 0.8))
        rng = np.random.default_rng(5)
        labels = np.array([sample_task(mix, rng).environment_label for _ in range(4000)])
        assert set(np.unique(labels)) == {1, 2}
        assert np.mean(labels == 2) == pytest.approx(0.8, abs=0.03)


class TestActions:
    def test_norms_and_shape(self, rng):
        seq = action_set_sequence(ActionSetSpec(7, 2.0), 3, 11, rng)
        assert seq.shape == (11, 7, 3)
        np.testing.assert_allclose(np.linalg.norm(seq, axis=2), 2.0)

    def test_fixed_regeneration(self, rng):
        seq = action_set_sequence(ActionSetSpec(4, 1.0, Regeneration.FIXED_ACROSS_ROUNDS), 2, 5, rng)
        for t in range(1, 5):
            np.testing.assert_array_equal(seq[t], seq[0])

    def test_single_round_set(self, rng):
        assert generate_action_set(ActionSetSpec(1), 2, rng).shape == (1, 2)

    @pytest.mark.parametrize("kwargs", [{"arms_per_round": 0}, {"norm_bound": 0.0}])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ConfigurationError):
            ActionSetSpec(**kwargs)

    def test_noise(self, rng):
        n = noise_sequence(0.1, 50_000, rng)
        assert n.std() == pytest.approx(0.1, rel=0.02)
        assert np.all(noise_sequence(0.0, 5, rng) == 0)
        with pytest.raises(ConfigurationError):
            sample_noise(-1.0, rng)


class TestDiagnostics:
    def test_report(self, rng):
        rep = assumption_diagnostics(_two_env_mixture(), 20_000, rng)
        assert rep.gamma == pytest.approx(2 * math.sqrt(2))
        assert [e.label for e in rep.environments] == [1, 2]
        assert rep.environments[0].variance_about_mean == pytest.approx(1.0, rel=0.05)
        assert rep.environments[0].second_moment == pytest.approx(3.0, rel=0.05)
        assert rep.pooled_variance == pytest.approx(3.0, rel=0.05)
        assert any("gamma" in line for line in rep.lines())

    def test_needs_enough_samples(self, rng):
        with pytest.raises(ConfigurationError):
            assumption_diagnostics(_two_env_mixture(), 999, rng)


class TestSamplingInvariants:
    def test_empirical_mean_within_four_se(self, rng):
        env = EnvironmentSpec(np.array([1.0, 3.0]), NoiseFamily.GAUSSIAN, 0.8)
        n = 10_000
        theta = env.mean + env.sample_offset(rng, size=n)
        assert np.all(np.abs(theta.mean(axis=0) - env.mean) <= 4 * 0.8 / math.sqrt(n))

    @pytest.mark.parametrize("family", [NoiseFamily.TRUNCATED_GAUSSIAN, NoiseFamily.UNIFORM_BOX])
    def test_support_never_violated(self, family, rng):
        env = EnvironmentSpec(np.zeros(1), family, 0.5)
        z = env.sample_offset(rng, size=1_000_000)
        assert np.max(np.abs(z)) <= env.support_bound
