"""Posterior-predictive nowcasts, real-time scores and the AR(2) benchmark."""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


@dataclass
class PredictiveDraws:
    """Predictive sample for one target plus the Gaussian mixture it came from."""

    draws: np.ndarray
    cond_means: np.ndarray
    cond_vars: np.ndarray

    def __post_init__(self):
        self.draws = np.atleast_1d(np.asarray(self.draws, dtype=float))
        self.cond_means = np.atleast_1d(np.asarray(self.cond_means, dtype=float))
        self.cond_vars = np.atleast_1d(np.asarray(self.cond_vars, dtype=float))
        if not (len(self.draws) == len(self.cond_means) == len(self.cond_vars)):
            raise ValueError("predictive arrays must have equal length")
        if np.any(self.cond_vars <= 0):
            raise ValueError("component variances must be positive")

    @property
    def mean(self):
        return float(self.draws.mean())

    @property
    def sd(self):
        return float(self.draws.std(ddof=1)) if len(self.draws) > 1 else 0.0

    def quantiles(self, probs=(0.05, 0.25, 0.5, 0.75, 0.95)):
        return np.quantile(self.draws, probs)

    def log_density(self, y):
        """Log of the equal-weight Gaussian mixture density at ``y``."""
        lp = -0.5 * (np.log(2 * np.pi * self.cond_vars) + (y - self.cond_means) ** 2 / self.cond_vars)
        return float(logsumexp(lp) - math.log(len(lp)))


def predictive_draws(draws, x_next, T=None, rng=None, horizon=1, use_sparse=None):
    """Simulate ``y_{T+h}`` once per stored posterior draw.

    The standardised states are pushed ``horizon`` steps forward with unit
    innovations, the trend is rebuilt from the intercepts and state scales, and
    ``y = x_next' beta + trend + sigma_y * u``.  ``x_next`` must already be
    standardised and masked.  Under ``horseshoe-savs`` the sparsified
    coefficients are used unless ``use_sparse`` says otherwise.
    """
    rng = np.random.default_rng() if rng is None else rng
    tau_t = draws.flat("tau_tilde")
    a_t = draws.flat("a_tilde")
    theta = draws.flat("theta")
    sigma2 = draws.flat("sigma2")
    M, n_obs = tau_t.shape
    T = n_obs if T is None else T
    if T != n_obs:
        raise ValueError(f"forecast origin T={T} does not match the stored states ({n_obs})")
    if use_sparse is None:
        use_sparse = draws.prior_kind == "horseshoe-savs"
    beta = draws.flat("beta_sparse" if use_sparse else "beta")
    x_next = np.asarray(x_next, dtype=float).ravel()
    if x_next.shape[0] != beta.shape[1]:
        raise ValueError(f"x_next has {x_next.shape[0]} entries, model has {beta.shape[1]} coefficients")

    tau = tau_t[:, -1].copy()
    alpha = a_t[:, -1] - (a_t[:, -2] if n_obs > 1 else 0.0)
    cum = a_t[:, -1].copy()
    for _ in range(horizon):
        tau += rng.standard_normal(M)
        alpha = alpha + rng.standard_normal(M)
        cum += alpha
    t_next = T + horizon
    level = theta[:, 0] + theta[:, 2] * tau + t_next * theta[:, 1] + theta[:, 3] * cum
    means = beta @ x_next + level
    y = means + np.sqrt(sigma2) * rng.standard_normal(M)
    return PredictiveDraws(y, means, sigma2.copy())


def rt_rmsfe(point_forecasts, realised):
    """Root mean squared error over evaluation quarters."""
    f = np.atleast_1d(np.asarray(point_forecasts, dtype=float))
    r = np.atleast_1d(np.asarray(realised, dtype=float))
    if f.size == 0 or f.shape != r.shape:
        raise ValueError("need equal-length, non-empty forecast and outcome vectors")
    return float(np.sqrt(np.mean((r - f) ** 2)))


def rt_lpds(preds, realised):
    """Mean log predictive density score, mixture density evaluated analytically."""
    realised = np.atleast_1d(np.asarray(realised, dtype=float))
    if len(preds) != len(realised) or len(preds) == 0:
        raise ValueError("need one predictive per realised value")
    return float(np.mean([p.log_density(y) for p, y in zip(preds, realised)]))


def crps_sample(draws, y, rng=None, halve_first_term=False):
    """Energy-form CRPS ``E|Y - y| - E|Y - Y'| / 2`` from a predictive sample.

    ``Y`` and ``Y'`` are paired through two independent permutations of the
    sample.  ``halve_first_term=True`` halves the first term as well.
    """
    draws = np.asarray(draws, dtype=float)
    if len(draws) < 2:
        raise ValueError("CRPS needs at least two predictive draws")
    rng = np.random.default_rng(0) if rng is None else rng
    first = np.mean(np.abs(draws - y))
    spread = np.mean(np.abs(draws[rng.permutation(len(draws))] - draws[rng.permutation(len(draws))]))
    if halve_first_term:
        return float(0.5 * first - 0.5 * spread)
    return float(first - 0.5 * spread)


def rt_crps(preds, realised, rng=None, halve_first_term=False):
    """Mean CRPS over evaluation quarters."""
    realised = np.atleast_1d(np.asarray(realised, dtype=float))
    if len(preds) != len(realised) or len(preds) == 0:
        raise ValueError("need one predictive per realised value")
    rng = np.random.default_rng(0) if rng is None else rng
    return float(np.mean([crps_sample(p.draws, y, rng, halve_first_term) for p, y in zip(preds, realised)]))


# --- AR(2) benchmark ---------------------------------------------------------


@dataclass
class Ar2Posterior:
    """Normal-inverse-gamma posterior of ``y_t = c + a1 y_{t-1} + a2 y_{t-2} + e_t``."""

    coef_mean: np.ndarray
    coef_scale: np.ndarray  # Var(coef | sigma^2) = sigma^2 * coef_scale
    shape: float
    scale: float
    last: np.ndarray  # (y_T, y_{T-1})

    @property
    def coef_cov(self):
        return self.scale / (self.shape - 1.0) * self.coef_scale


def ar2_posterior(y, prior_precision=1e-6, sigma_shape=1e-3, sigma_scale=1e-3, cond_limit=1e10):
    """Conjugate AR(2) fit under a diffuse prior; ridge-stabilised if ill conditioned."""
    y = np.asarray(y, dtype=float)
    if len(y) < 10:
        raise ValueError("AR(2) benchmark needs at least 10 observations")
    Z = np.column_stack([np.ones(len(y) - 2), y[1:-1], y[:-2]])
    target = y[2:]
    ztz = Z.T @ Z
    prec0 = prior_precision
    if np.linalg.cond(ztz) > cond_limit:
        prec0 = max(prior_precision, 1e-6 * np.trace(ztz) / 3.0)
        warnings.warn("AR(2) design is near singular; ridge-stabilising", RuntimeWarning, stacklevel=2)
    prec = ztz + prec0 * np.eye(3)
    V = np.linalg.inv(prec)
    m = V @ (Z.T @ target)
    resid = target - Z @ m
    shape = sigma_shape + 0.5 * len(target)
    scale = sigma_scale + 0.5 * (resid @ resid + prec0 * m @ m)
    return Ar2Posterior(m, V, shape, scale, np.array([y[-1], y[-2]]))


def ar2_baseline(y, rng, n_draws=2000, **kwargs):
    """Predictive draws for the next observation from the AR(2) benchmark."""
    post = ar2_posterior(y, **kwargs)
    sigma2 = post.scale / rng.gamma(post.shape, 1.0, size=n_draws)
    C = np.linalg.cholesky(post.coef_scale)
    coefs = post.coef_mean + np.sqrt(sigma2)[:, None] * (rng.standard_normal((n_draws, 3)) @ C.T)
    z = np.array([1.0, post.last[0], post.last[1]])
    means = coefs @ z
    return PredictiveDraws(means + np.sqrt(sigma2) * rng.standard_normal(n_draws), means, sigma2)
