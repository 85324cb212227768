import math

import numpy as np
import pytest

from ncbsts.forecast import (
    PredictiveDraws,
    ar2_baseline,
    ar2_posterior,
    crps_sample,
    predictive_draws,
    rt_crps,
    rt_lpds,
    rt_rmsfe,
)
from ncbsts.gibbs import PosteriorDraws


def standard_normal_predictive(rng, n=100_000):
    return PredictiveDraws(rng.normal(size=n), np.zeros(n), np.ones(n))


def test_crps_standard_normal(rng):
    # closed form sigma * (2 phi(0) - 1 / sqrt(pi)) at the centre
    exact = 2 / math.sqrt(2 * math.pi) - 1 / math.sqrt(math.pi)
    assert crps_sample(rng.normal(size=100_000), 0.0, rng) == pytest.approx(exact, abs=0.01)


def test_crps_is_zero_for_point_mass():
    assert crps_sample(np.full(10, 2.0), 2.0) == 0.0
    assert crps_sample(np.full(10, 2.0), 5.0) == 3.0


def test_crps_variant_halves_first_term(rng):
    d = rng.normal(size=1000)
    full = crps_sample(d, 1.0, np.random.default_rng(1))
    half = crps_sample(d, 1.0, np.random.default_rng(1), halve_first_term=True)
    assert half == pytest.approx(full - 0.5 * np.mean(np.abs(d - 1.0)))


def test_lpds_standard_normal(rng):
    p = standard_normal_predictive(rng, 1000)
    assert rt_lpds([p], [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-6)
    assert rt_lpds([p], [10.0]) == pytest.approx(-0.5 * math.log(2 * math.pi) - 50, abs=1e-6)


def test_lpds_mixture_far_tail_is_finite():
    p = PredictiveDraws(np.zeros(3), np.array([0.0, 1.0, 2.0]), np.full(3, 0.01))
    val = p.log_density(100.0)
    assert np.isfinite(val) and val < -4e5


def test_rmsfe():
    assert rt_rmsfe([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355339, abs=1e-7)
    with pytest.raises(ValueError):
        rt_rmsfe([], [])


def test_rt_scores_average_over_quarters(rng):
    preds = [standard_normal_predictive(rng, 2000) for _ in range(3)]
    y = [0.0, 1.0, -1.0]
    each = [crps_sample(p.draws, v, np.random.default_rng(0)) for p, v in zip(preds, y)]
    assert rt_crps(preds, y) == pytest.approx(np.mean(each), abs=0.02)
    with pytest.raises(ValueError):
        rt_lpds(preds, y[:2])


def test_ar2_recovers_coefficients(rng):
    T = 500
    y = np.zeros(T + 50)
    for t in range(2, len(y)):
        y[t] = 0.2 + 0.5 * y[t - 1] + 0.3 * y[t - 2] + rng.normal()
    post = ar2_posterior(y[50:])
    se = np.sqrt(np.diag(post.coef_cov))
    assert np.all(np.abs(post.coef_mean - [0.2, 0.5, 0.3]) < 3 * se)


def test_ar2_white_noise(rng):
    post = ar2_posterior(rng.normal(size=300))
    se = np.sqrt(np.diag(post.coef_cov))
    assert np.all(np.abs(post.coef_mean[1:]) < 3 * se[1:])
    p = ar2_baseline(rng.normal(size=300), rng, n_draws=4000)
    assert abs(p.mean) < 0.3 and p.sd == pytest.approx(1.0, abs=0.15)


def test_ar2_needs_ten_observations(rng):
    with pytest.raises(ValueError):
        ar2_posterior(rng.normal(size=9))


def fake_draws(M=2000, T=12, theta=(1.0, 0.1, 0.0, 0.0), beta=(2.0, -1.0), sigma2=0.25, seed=0):
    r = np.random.default_rng(seed)
    tau = r.normal(size=(1, M, T)).cumsum(axis=2)
    a = r.normal(size=(1, M, T)).cumsum(axis=2).cumsum(axis=2)
    b = np.broadcast_to(np.asarray(beta, float), (1, M, len(beta))).copy()
    return PosteriorDraws(
        "horseshoe",
        tau,
        a,
        np.broadcast_to(np.asarray(theta, float), (1, M, 4)).copy(),
        b,
        None,
        np.full((1, M), sigma2),
        {},
        np.ones(len(beta)),
    )


def test_predictive_without_state_noise():
    d = fake_draws()
    p = predictive_draws(d, [0.5, 0.5], rng=np.random.default_rng(1))
    assert np.allclose(p.cond_means, 1.0 + 13 * 0.1 + 0.5)
    assert p.sd == pytest.approx(0.5, rel=0.05)


def test_masked_regressors_give_trend_only_forecast():
    d = fake_draws()
    p = predictive_draws(d, [0.0, 0.0], rng=np.random.default_rng(1))
    assert np.allclose(p.cond_means, 1.0 + 13 * 0.1)


def test_state_noise_widens_longer_horizons():
    d = fake_draws(theta=(0.0, 0.0, 0.5, 0.0))
    sd1 = predictive_draws(d, [0, 0], rng=np.random.default_rng(1)).sd
    sd4 = predictive_draws(d, [0, 0], rng=np.random.default_rng(1), horizon=4).sd
    assert sd4 > sd1


def test_predictive_shape_checks():
    d = fake_draws()
    with pytest.raises(ValueError):
        predictive_draws(d, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        predictive_draws(d, [1.0, 2.0], T=5)
