import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from ncbsts.linalg import precision_mean
from ncbsts.statespace import (
    DenominatorUnderflowWarning,
    NcssStates,
    StatePriorConfig,
    ThetaParams,
    _gig,
    centred_states,
    interweave_scales,
    log_likelihood,
    permute_signs,
    sample_states,
    sample_theta,
    savage_dickey,
    state_design,
    state_posterior,
    trend,
)


def dense_state_system(y_hat, theta, sigma_y2):
    """Posterior precision and shift of (tau~, A~) built with dense algebra,
    then interleaved as (tau~_1, A~_1, tau~_2, ...)."""
    T = len(y_hat)
    H = np.eye(T) - np.eye(T, k=-1)
    H2 = H @ H
    Z = np.hstack([theta.sigma_tau * np.eye(T), theta.sigma_alpha * np.eye(T)])
    K = np.zeros((2 * T, 2 * T))
    K[:T, :T] = H.T @ H
    K[T:, T:] = H2.T @ H2
    K += Z.T @ Z / sigma_y2
    r = y_hat - theta.tau0 - theta.alpha0 * np.arange(1, T + 1)
    b = Z.T @ r / sigma_y2
    perm = np.ravel(np.column_stack([np.arange(T), T + np.arange(T)]))
    return K[np.ix_(perm, perm)], b[perm]


@given(T=st.integers(3, 25), seed=st.integers(0, 2**31))
def test_state_posterior_matches_dense_construction(T, seed):
    r = np.random.default_rng(seed)
    theta = ThetaParams(*r.normal(size=4))
    y = r.normal(size=T)
    s2 = float(r.uniform(0.2, 3.0))
    g = state_posterior(y, theta, s2)
    K, b = dense_state_system(y, theta, s2)
    assert np.allclose(g.precision.to_dense(), K)
    assert np.allclose(g.shift, b)
    assert np.allclose(precision_mean(g), np.linalg.solve(K, b))


def test_theta_conjugate_recovery(rng):
    T = 50
    states = NcssStates(np.cumsum(rng.normal(size=T)), np.cumsum(np.cumsum(rng.normal(size=T))))
    truth = ThetaParams(1.0, 0.2, 0.7, 0.05)
    y = trend(truth, states) + 0.5 * rng.normal(size=T)
    prior = StatePriorConfig(np.zeros(4), np.full(4, 1e6))
    draws = np.array([sample_theta(y, 0.0, states, 0.25, prior, rng).to_array() for _ in range(4000)])
    z = (draws.mean(0) - truth.to_array()) / draws.std(0)
    assert np.all(np.abs(z) < 3)


def test_sign_permutation_frequency(rng):
    theta = ThetaParams(0.0, 0.0, 0.8, 0.3)
    states = NcssStates(np.ones(5), np.ones(5))
    signs = np.array([permute_signs(theta, states, rng)[0].sigma_tau > 0 for _ in range(10_000)])
    assert abs(signs.mean() - 0.5) < 0.02


@given(T=st.integers(3, 40), seed=st.integers(0, 2**31))
def test_sign_permutation_keeps_likelihood(T, seed):
    r = np.random.default_rng(seed)
    theta = ThetaParams(*r.normal(size=4))
    states = NcssStates(r.normal(size=T).cumsum(), r.normal(size=T).cumsum().cumsum())
    y, xb = r.normal(size=T), r.normal(size=T)
    ll = log_likelihood(y, xb, theta, states, 0.7)
    th2, st2 = permute_signs(theta, states, r)
    assert abs(log_likelihood(y, xb, th2, st2, 0.7) - ll) <= 1e-10 * max(1.0, abs(ll))


@given(T=st.integers(2, 30), seed=st.integers(0, 2**31))
def test_centred_states_follow_local_linear_trend(T, seed):
    r = np.random.default_rng(seed)
    theta = ThetaParams(*r.normal(size=4))
    u, v = r.normal(size=T), r.normal(size=T)
    states = NcssStates(np.cumsum(u), np.cumsum(np.cumsum(v)))
    level, drift = centred_states(theta, states)
    lev_prev = np.concatenate([[theta.tau0], level[:-1]])
    drift_prev = np.concatenate([[theta.alpha0], drift[:-1]])
    assert np.allclose(level, lev_prev + drift + theta.sigma_tau * u)
    assert np.allclose(drift, drift_prev + theta.sigma_alpha * v)


def test_state_design_columns():
    states = NcssStates(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
    W = state_design(3, states)
    assert np.array_equal(W, [[1, 1, 1, 4], [1, 2, 2, 5], [1, 3, 3, 6]])


def test_state_sampler_rejects_short_series(rng):
    with pytest.raises(ValueError):
        sample_states(np.zeros(2), ThetaParams(0, 0, 1, 1), 1.0, rng)


# --- interweaving ------------------------------------------------------------


@pytest.mark.parametrize("lam, chi, psi", [(-74.5, 30.0, 1.0), (-1.0, 0.5, 2.0), (-5.0, 1e-3, 1.0), (-20.0, 1e4, 0.1)])
def test_gig_sampler_matches_scipy(lam, chi, psi):
    r = np.random.default_rng(3)
    x = np.array([_gig(lam, chi, psi, r) for _ in range(20_000)])
    ref = stats.geninvgauss(lam, math.sqrt(chi * psi), scale=math.sqrt(chi / psi))
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


def test_interweaving_keeps_centred_paths(rng):
    T = 30
    theta = ThetaParams(0.3, 0.1, -0.8, 0.2)
    states = NcssStates(rng.normal(size=T).cumsum(), rng.normal(size=T).cumsum().cumsum())
    th2, st2 = interweave_scales(theta, states, StatePriorConfig(), rng)
    assert np.allclose(th2.sigma_tau * st2.tau_tilde, theta.sigma_tau * states.tau_tilde)
    assert np.allclose(th2.sigma_alpha * st2.a_tilde, theta.sigma_alpha * states.a_tilde)
    assert np.sign(th2.sigma_tau) == np.sign(theta.sigma_tau)
    assert (th2.tau0, th2.alpha0) == (theta.tau0, theta.alpha0)


@pytest.mark.parametrize("mean", [0.0, 0.4])
def test_interweaving_draws_centred_conditional(mean):
    # with the centred path fixed, |sigma| has density
    # N(sigma; m, V) |sigma|^-T exp(-S / (2 sigma^2)) on sigma > 0 (sign kept positive)
    r = np.random.default_rng(11)
    T, V = 12, 1.0
    path = r.normal(size=T).cumsum()
    S = float(np.diff(path, prepend=0.0) @ np.diff(path, prepend=0.0))
    prior = StatePriorConfig(np.array([0, 0, mean, 0.0]), np.array([1, 1, V, 1.0]))

    def dens(s):
        return math.exp(-0.5 * (s - mean) ** 2 / V - T * math.log(s) - 0.5 * S / s**2)

    norm = integrate.quad(dens, 1e-6, 50, limit=200)[0]
    m1 = integrate.quad(lambda s: s * dens(s), 1e-6, 50, limit=200)[0] / norm
    m2 = integrate.quad(lambda s: s * s * dens(s), 1e-6, 50, limit=200)[0] / norm
    theta = ThetaParams(0.0, 0.0, 1.0, 0.0)
    states = NcssStates(path, np.zeros(T))
    draws = []
    for _ in range(20_000):
        theta, states = interweave_scales(theta, states, prior, r)
        draws.append(theta.sigma_tau)
    draws = np.array(draws)
    sd = math.sqrt(m2 - m1 * m1)
    assert abs(draws.mean() - m1) < 0.05 * sd + 4 * sd / math.sqrt(len(draws) / 20)
    assert abs(draws.std() - sd) < 0.05 * sd


# --- Savage-Dickey -----------------------------------------------------------


def test_savage_dickey_tight_posterior(rng):
    draws = rng.normal(0.0, 0.1, size=20_000)
    assert savage_dickey(1.0, draws) == pytest.approx(0.39894 / 3.9894, rel=0.05)


def test_savage_dickey_bimodal_away_from_zero(rng):
    draws = np.concatenate([rng.normal(0.5, 0.05, 5000), rng.normal(-0.5, 0.05, 5000)])
    assert savage_dickey(1.0, draws) > 100


def test_savage_dickey_needs_draws(rng):
    with pytest.raises(ValueError):
        savage_dickey(1.0, rng.normal(size=999))


def test_savage_dickey_underflow(rng):
    draws = rng.normal(100.0, 0.01, size=2000)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert savage_dickey(1.0, draws, bandwidth=0.01) == math.inf
    assert any(issubclass(x.category, DenominatorUnderflowWarning) for x in w)
