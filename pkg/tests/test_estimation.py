import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from meml_bandits.estimation import (
    REFRESH_EVERY,
    BiasOracleConfig,
    BiasOracleMode,
    ConfigurationError,
    OnlineRLSState,
    biased_radius,
    biased_rls_estimate,
    confidence_ellipsoid,
    ellipsoid_ucb,
    oful_radius,
    rls_estimate,
    rls_update,
)


def _fill(state, xs, ys):
    for x, y in zip(xs, ys):
        rls_update(state, x, y)
    return state


class TestOnlineRLS:
    def test_fresh_state(self):
        s = OnlineRLSState.fresh(3, 2.0)
        np.testing.assert_array_equal(s.gram_reg_inverse, np.eye(3) / 2.0)
        np.testing.assert_array_equal(rls_estimate(s), np.zeros(3))
        assert s.round_count == 0

    def test_two_by_two_adjugate_oracle(self):
        # hand inverse of [[a, b], [b, c]] = [[c, -b], [-b, a]] / (ac - b^2)
        s = _fill(OnlineRLSState.fresh(2, 1.0), [[1.0, 0.0], [1.0, 1.0]], [2.0, 3.0])
        a, b, c = 1 + 2.0, 1.0, 1 + 1.0
        inv = np.array([[c, -b], [-b, a]]) / (a * c - b * b)
        np.testing.assert_allclose(s.gram_reg_inverse, inv, atol=1e-15)
        np.testing.assert_allclose(rls_estimate(s), inv @ np.array([5.0, 3.0]), atol=1e-15)

    def test_one_dimensional_closed_form(self):
        s = _fill(OnlineRLSState.fresh(1, 0.5), [[2.0], [1.0]], [4.0, 1.0])
        # (lam + sum x^2)^-1 sum x y = 9 / 5.5
        assert rls_estimate(s)[0] == pytest.approx(9 / 5.5, abs=1e-15)

    def test_refresh_keeps_inverse(self, rng):
        s = OnlineRLSState.fresh(4, 1.0)
        _fill(s, rng.normal(size=(REFRESH_EVERY + 3, 4)), rng.normal(size=REFRESH_EVERY + 3))
        np.testing.assert_allclose(s.gram_reg_inverse, np.linalg.inv(s.regularized_gram()),
                                   atol=1e-10)

    def test_copy_is_independent(self, rng):
        s = _fill(OnlineRLSState.fresh(2, 1.0), rng.normal(size=(3, 2)), rng.normal(size=3))
        c = s.copy()
        rls_update(c, [1.0, 0.0], 1.0)
        assert s.round_count == 3 and c.round_count == 4
        assert not np.array_equal(s.gram, c.gram)

    def test_rejects_bad_shapes(self):
        s = OnlineRLSState.fresh(2, 1.0)
        with pytest.raises(ConfigurationError):
            rls_update(s, [1.0, 2.0, 3.0], 1.0)
        with pytest.raises(ConfigurationError):
            biased_rls_estimate(s, [1.0])

    @pytest.mark.parametrize("dim,lam", [(0, 1.0), (2, 0.0), (2, -1.0)])
    def test_rejects_bad_parameters(self, dim, lam):
        with pytest.raises(ConfigurationError):
            OnlineRLSState.fresh(dim, lam)


class TestBiasedEstimate:
    def test_no_data_returns_bias(self):
        s = OnlineRLSState.fresh(3, 1.0)
        h = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(biased_rls_estimate(s, h), h)

    def test_matches_residual_fit(self, rng):
        xs, h = rng.normal(size=(20, 3)), rng.normal(size=3)
        ys = rng.normal(size=20)
        s = _fill(OnlineRLSState.fresh(3, 2.0), xs, ys)
        resid = _fill(OnlineRLSState.fresh(3, 2.0), xs, ys - xs @ h)
        np.testing.assert_allclose(biased_rls_estimate(s, h), rls_estimate(resid) + h, atol=1e-12)

    def test_large_lambda_shrinks_to_bias(self, rng):
        h = np.array([3.0, 3.0])
        s = _fill(OnlineRLSState.fresh(2, 1e9), rng.normal(size=(10, 2)), rng.normal(size=10))
        np.testing.assert_allclose(biased_rls_estimate(s, h), h, atol=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (12, 3), elements=st.floats(-5, 5)),
           arrays(np.float64, 12, elements=st.floats(-5, 5)),
           st.floats(0.1, 10))
    def test_zero_bias_is_plain_ridge(self, xs, ys, lam):
        s = _fill(OnlineRLSState.fresh(3, lam), xs, ys)
        np.testing.assert_allclose(biased_rls_estimate(s, np.zeros(3)), rls_estimate(s), atol=1e-12)


class TestRadius:
    def test_scalar_oracle(self):
        # R sqrt(d log((1 + t L^2 / lam) / delta)) + sqrt(lam) S with t=1, L=1, lam=1, delta=0.1
        expected = 0.1 * math.sqrt(2 * math.log(20.0)) + 1.0
        assert oful_radius(1, 2, 1.0, 1.0, 0.1, 1.0, 0.1) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(1.2448, abs=1e-4)

    def test_delta_one_zeroes_data_term_at_start(self):
        assert oful_radius(0, 3, 4.0, 1.0, 0.1, 2.0, 1.0) == pytest.approx(4.0)

    def test_biased_radius_with_exact_bias(self):
        assert biased_radius(0, 2, 1.0, 1.0, 0.1, 1.0, 0.0) == 0.0

    def test_radius_grows_with_t(self):
        r = [oful_radius(t, 2, 1.0, 1.0, 0.1, 1.0, 0.05) for t in range(0, 200, 10)]
        assert all(b > a for a, b in zip(r, r[1:]))

    @pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
    def test_rejects_delta(self, delta):
        with pytest.raises(ConfigurationError):
            oful_radius(1, 2, 1.0, 1.0, 0.1, 1.0, delta)

    def test_rejects_negative_distance(self):
        with pytest.raises(ConfigurationError):
            biased_radius(1, 2, 1.0, 1.0, 0.1, 0.5, -1.0)


class TestEllipsoid:
    def test_center_is_inside(self, rng):
        s = _fill(OnlineRLSState.fresh(2, 1.0), rng.normal(size=(5, 2)), rng.normal(size=5))
        ell = confidence_ellipsoid(s, 0.5)
        assert ell.contains(ell.center)
        assert not ell.contains(ell.center + 100.0)

    def test_ucb_spherical_case(self):
        s = OnlineRLSState.fresh(2, 4.0)
        ell = confidence_ellipsoid(s, 2.0, bias=[1.0, 0.0])
        # shape 4 I, radius 2: ball of radius 1 around (1, 0); x = (0, 1)
        assert ellipsoid_ucb([0.0, 1.0], ell, s.gram_reg_inverse) == pytest.approx(1.0)
        assert ellipsoid_ucb([1.0, 0.0], ell, s.gram_reg_inverse) == pytest.approx(2.0)

    def test_ucb_attained_on_boundary(self, rng):
        s = _fill(OnlineRLSState.fresh(3, 1.0), rng.normal(size=(8, 3)), rng.normal(size=8))
        ell = confidence_ellipsoid(s, 1.3)
        x = rng.normal(size=3)
        inv = s.gram_reg_inverse
        v = ell.center + ell.radius * inv @ x / math.sqrt(x @ inv @ x)
        assert ell.contains(v, tol=1e-9)
        assert x @ v == pytest.approx(ellipsoid_ucb(x, ell, inv), rel=1e-12)


class TestBiasOracle:
    def test_true_parameter(self):
        cfg = BiasOracleConfig(BiasOracleMode.TRUE_PARAMETER)
        assert cfg.distance([0.0, 0.0], [3.0, 4.0], S=10.0) == pytest.approx(5.0)

    def test_constant_bound_defaults_to_2S_capped(self):
        cfg = BiasOracleConfig(BiasOracleMode.CONSTANT_UPPER_BOUND)
        assert cfg.distance([0.0, 0.0], None, S=2.0) == pytest.approx(2.0)
        assert cfg.distance([2.0, 0.0], None, S=2.0) == pytest.approx(4.0)
        assert cfg.distance([5.0, 0.0], None, S=2.0) == pytest.approx(4.0)

    def test_constant_bound_above_2S_rejected(self):
        cfg = BiasOracleConfig(BiasOracleMode.CONSTANT_UPPER_BOUND, constant_bound=5.0)
        with pytest.raises(ConfigurationError):
            cfg.distance([0.0], None, S=2.0)

    def test_empirical_spread(self):
        cfg = BiasOracleConfig()
        assert cfg.mode is BiasOracleMode.EMPIRICAL_SPREAD
        assert cfg.distance([1.0], None, S=3.0, spread=0.25) == 0.25
        # no spread available: constant fallback
        assert cfg.distance([1.0], None, S=3.0) == pytest.approx(4.0)


class TestInvariants:
    def test_degenerate_ucb(self, rng):
        s = OnlineRLSState.fresh(2, 1.0)
        ell = confidence_ellipsoid(s, 0.0, bias=[1.0, 2.0])
        assert ellipsoid_ucb([3.0, -1.0], ell, s.gram_reg_inverse) == pytest.approx(1.0)
        ell = confidence_ellipsoid(s, 5.0, bias=[1.0, 2.0])
        assert ellipsoid_ucb([0.0, 0.0], ell, s.gram_reg_inverse) == 0.0

    def test_unit_ball_example(self):
        s = OnlineRLSState.fresh(2, 1.0)
        ell = confidence_ellipsoid(s, 1.0, bias=[1.0, 0.0])
        assert ellipsoid_ucb([0.0, 1.0], ell, s.gram_reg_inverse) == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_exploration_norm_nonincreasing(self, seed, d):
        r = np.random.default_rng(seed)
        s = OnlineRLSState.fresh(d, float(r.uniform(0.1, 5)))
        x = r.normal(size=d)
        prev = x @ s.gram_reg_inverse @ x
        for z in r.normal(size=(30, d)):
            rls_update(s, z, 0.0)
            cur = x @ s.gram_reg_inverse @ x
            assert cur <= prev + 1e-12
            prev = cur
