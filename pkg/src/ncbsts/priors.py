"""Regression-coefficient updates under SSVS and horseshoe priors, plus SAVS."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import PrecisionGaussian, sample_precision_gaussian

SCALE_MIN = 1e-12
SCALE_MAX = 1e12


def _inv_gamma(rng, shape, scale):
    """Inverse-gamma draw(s) with density proportional to ``x^(-shape-1) exp(-scale/x)``."""
    return scale / rng.gamma(shape, 1.0, size=np.shape(scale) or None)


@dataclass
class RegressionDraw:
    beta: np.ndarray
    beta_sparse: np.ndarray
    sigma_y2: float


# --- horseshoe ---------------------------------------------------------------


@dataclass
class HorseshoeState:
    """Local scales ``lambda_j^2``, global scale ``nu^2`` and their auxiliaries."""

    lambda2: np.ndarray
    nu2: float
    aux_local: np.ndarray
    aux_global: float
    n_clamped: int = 0

    @classmethod
    def initial(cls, K):
        return cls(np.ones(K), 1.0, np.ones(K), 1.0)


@dataclass(frozen=True)
class HorseshoeHyper:
    """Inverse-gamma prior on the observation variance."""

    sigma_shape: float = 0.01
    sigma_scale: float = 0.01


def sample_beta_horseshoe(y_star, X, hs, sigma_y2, rng, method="fast"):
    """Draw from ``N(A^-1 X'y*, sigma^2 A^-1)``, ``A = X'X + diag(nu^2 lambda^2)^-1``.

    ``method="fast"`` uses the data-augmentation sampler that only solves a
    ``T x T`` system (cost O(T^2 K)); ``"direct"`` factors the ``K x K``
    precision instead, which is cheaper when ``K < T``.
    """
    X = np.asarray(X, dtype=float)
    T, K = X.shape
    if K == 0:
        return np.zeros(0)
    prior_var = hs.nu2 * hs.lambda2
    if method == "direct":
        prec = X.T @ X + np.diag(1.0 / prior_var)
        g = PrecisionGaussian(prec / sigma_y2, X.T @ y_star / sigma_y2)
        return sample_precision_gaussian(g, rng)
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")
    sigma = np.sqrt(sigma_y2)
    phi = X / sigma
    d = sigma_y2 * prior_var
    u = np.sqrt(d) * rng.standard_normal(K)
    delta = rng.standard_normal(T)
    v = phi @ u + delta
    M = (phi * d) @ phi.T
    M[np.diag_indices(T)] += 1.0
    try:
        w = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M, lower=True), y_star / sigma - v)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("fast horseshoe solve failed; check the scales are finite") from exc
    return u + d * (phi.T @ w)


def sample_horseshoe_scales(beta, sigma_y2, hs, rng):
    """Gibbs update of the half-Cauchy scales via inverse-gamma auxiliaries.

    ``lambda_j ~ C+(0, 1)`` and ``nu ~ C+(0, 1)`` are written as
    ``lambda_j^2 | a_j ~ IG(1/2, 1/a_j)``, ``a_j ~ IG(1/2, 1)`` (same for ``nu``),
    which makes every conditional inverse gamma.
    """
    beta = np.asarray(beta, dtype=float)
    K = len(beta)
    if K == 0:
        return hs
    b2 = beta * beta / (2.0 * sigma_y2)
    lam2 = _inv_gamma(rng, 1.0, 1.0 / hs.aux_local + b2 / hs.nu2)
    lam2, c1 = _clamp(lam2)
    aux_local = _inv_gamma(rng, 1.0, 1.0 + 1.0 / lam2)
    nu2 = float(_inv_gamma(rng, 0.5 * (K + 1), 1.0 / hs.aux_global + np.sum(b2 / lam2)))
    nu2, c2 = _clamp(np.array([nu2]))
    aux_global = float(_inv_gamma(rng, 1.0, 1.0 + 1.0 / nu2[0]))
    return HorseshoeState(lam2, float(nu2[0]), aux_local, aux_global, hs.n_clamped + c1 + c2)


def _clamp(x):
    bad = (x < SCALE_MIN) | (x > SCALE_MAX) | ~np.isfinite(x)
    if bad.any():
        x = np.clip(np.nan_to_num(x, nan=SCALE_MAX, posinf=SCALE_MAX), SCALE_MIN, SCALE_MAX)
    return x, int(bad.sum())


def sample_sigma2_horseshoe(resid, beta, hs, hyper, rng):
    """Observation variance; the coefficient prior scales with ``sigma^2``."""
    K = len(beta)
    shape = hyper.sigma_shape + 0.5 * (len(resid) + K)
    scale = hyper.sigma_scale + 0.5 * resid @ resid
    if K:
        scale += 0.5 * np.sum(beta * beta / (hs.nu2 * hs.lambda2))
    return float(_inv_gamma(rng, shape, scale))


# --- SSVS --------------------------------------------------------------------


@dataclass
class SsvsState:
    gamma: np.ndarray
    delta2: np.ndarray
    pi0: float
    spike_factor: float

    def __post_init__(self):
        if not 0 < self.pi0 < 1:
            raise ValueError("pi0 must lie in (0, 1)")
        if not 0 < self.spike_factor < 1:
            raise ValueError("spike factor must lie in (0, 1)")

    @classmethod
    def initial(cls, K, spike_factor=1e-4):
        return cls(np.ones(K, dtype=bool), np.ones(K), 0.5, spike_factor)


@dataclass(frozen=True)
class SsvsHyper:
    """Slab variance ``delta_j^2 ~ IG(a1, a2)``; ``pi0 ~ Beta(b1, b2)``; spike factor ``c``;
    ``sigma^2 ~ IG(sigma_shape, sigma_scale)``."""

    a1: float = 5.0
    a2: float = 4.0
    b1: float = 1.0
    b2: float = 1.0
    c: float = 1e-4
    sigma_shape: float = 0.01
    sigma_scale: float = 0.01


def _prior_var_ssvs(state):
    return state.delta2 * np.where(state.gamma, 1.0, state.spike_factor)


def sample_ssvs_gamma(beta, state, rng):
    """Inclusion indicators from the slab and spike ordinates, in log space."""
    b2 = beta * beta
    c = state.spike_factor
    log_slab = np.log(state.pi0) - 0.5 * np.log(state.delta2) - 0.5 * b2 / state.delta2
    log_spike = np.log1p(-state.pi0) - 0.5 * np.log(c * state.delta2) - 0.5 * b2 / (c * state.delta2)
    # P(gamma=1) = 1 / (1 + exp(log_spike - log_slab))
    p1 = 0.5 * (1.0 + np.tanh(0.5 * (log_slab - log_spike)))
    return rng.random(len(beta)) < p1


def sample_ssvs_pi0(gamma, hyper, rng):
    n1 = int(np.sum(gamma))
    pi0 = rng.beta(hyper.b1 + n1, hyper.b2 + len(gamma) - n1)
    return float(np.clip(pi0, 1e-12, 1 - 1e-12))


def sample_ssvs_delta2(beta, state, hyper, rng):
    scale = np.where(state.gamma, 1.0, state.spike_factor)
    return _inv_gamma(rng, hyper.a1 + 0.5, hyper.a2 + 0.5 * beta * beta / scale)


def sample_beta_normal(y_star, X, prior_var, sigma_y2, rng, xtx=None):
    """Draw from the normal posterior with independent ``N(0, prior_var)`` priors.

    Precision ``X'X / sigma^2 + diag(1/prior_var)``, shift ``X'y* / sigma^2``,
    sampled through its Cholesky factor.
    """
    if xtx is None:
        xtx = X.T @ X
    prec = xtx / sigma_y2 + np.diag(1.0 / prior_var)
    return sample_precision_gaussian(PrecisionGaussian(prec, X.T @ y_star / sigma_y2), rng)


def sample_sigma2_ssvs(resid, hyper, rng):
    shape = hyper.sigma_shape + 0.5 * len(resid)
    scale = hyper.sigma_scale + 0.5 * resid @ resid
    return float(_inv_gamma(rng, shape, scale))


def sample_ssvs_step(y_star, X, ssvs, sigma_y2, hyper, rng, beta, xtx=None, fixed=()):
    """One SSVS sweep: indicators, inclusion probability, coefficients, slab
    variances and the observation variance.

    ``beta`` is the current coefficient draw (needed by the indicator update).
    Names listed in ``fixed`` (``"pi0"``, ``"delta2"``, ``"sigma2"``) are held at
    their current values.  Returns ``(beta, state, sigma_y2)``.
    """
    X = np.asarray(X, dtype=float)
    K = X.shape[1]
    if K == 0:
        resid = np.asarray(y_star, dtype=float)
        s2 = sigma_y2 if "sigma2" in fixed else sample_sigma2_ssvs(resid, hyper, rng)
        return np.zeros(0), ssvs, s2
    gamma = sample_ssvs_gamma(beta, ssvs, rng)
    pi0 = ssvs.pi0 if "pi0" in fixed else sample_ssvs_pi0(gamma, hyper, rng)
    state = SsvsState(gamma, ssvs.delta2, pi0, ssvs.spike_factor)
    beta = sample_beta_normal(y_star, X, _prior_var_ssvs(state), sigma_y2, rng, xtx)
    if "delta2" not in fixed:
        state.delta2 = sample_ssvs_delta2(beta, state, hyper, rng)
    if "sigma2" not in fixed:
        sigma_y2 = sample_sigma2_ssvs(y_star - X @ beta, hyper, rng)
    return beta, state, sigma_y2


# --- SAVS and summaries ------------------------------------------------------


def savs_sparsify(beta, col_norms2):
    """Soft-threshold a coefficient draw with penalty ``1 / beta_j^2``.

    ``phi_j = sign(b_j) * max(|b_j| * n_j - 1/b_j^2, 0) / n_j`` with
    ``n_j = ||X_j||^2``.  Works row-wise on a ``(draws, K)`` array too.
    """
    beta = np.asarray(beta, dtype=float)
    n2 = np.asarray(col_norms2, dtype=float)
    absb = np.abs(beta)
    out = np.zeros_like(beta)
    nz = absb > 0
    kappa = np.zeros_like(beta)
    with np.errstate(divide="ignore", over="ignore"):
        # subnormal draws give an infinite penalty, i.e. zero
        kappa[nz] = 1.0 / absb[nz] ** 2
    n2b = np.broadcast_to(n2, beta.shape)
    out[nz] = np.sign(beta[nz]) * np.maximum(absb[nz] * n2b[nz] - kappa[nz], 0.0) / n2b[nz]
    return out


@dataclass
class InclusionSummary:
    probability: np.ndarray
    sign_weight: np.ndarray
    model_size: np.ndarray = field(default=None)

    def ranked(self, names=None, top=None):
        order = np.argsort(-self.probability, kind="stable")
        if top is not None:
            order = order[:top]
        names = names if names is not None else [f"x{j}" for j in range(len(self.probability))]
        return [(names[j], float(self.probability[j]), float(self.sign_weight[j])) for j in order]


def inclusion_probabilities(beta_draws, mode, gamma_draws=None):
    """Per-variable inclusion frequency across stored draws.

    ``mode="ssvs-gamma"`` counts the indicator draws (``gamma_draws`` required);
    ``mode="savs-nonzero"`` counts non-zero entries of the sparsified draws in
    ``beta_draws``.  ``sign_weight`` is the mean sign of the coefficient over the
    draws in which it is included (0 if never included).
    """
    beta_draws = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    if beta_draws.shape[0] == 0:
        raise ValueError("no stored draws")
    if mode == "ssvs-gamma":
        if gamma_draws is None:
            raise ValueError("ssvs-gamma mode needs indicator draws")
        inc = np.atleast_2d(np.asarray(gamma_draws)).astype(bool)
    elif mode == "savs-nonzero":
        inc = beta_draws != 0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    prob = inc.mean(axis=0)
    counts = inc.sum(axis=0)
    signed = np.where(inc, np.sign(beta_draws), 0.0).sum(axis=0)
    weight = np.divide(signed, counts, out=np.zeros_like(prob), where=counts > 0)
    return InclusionSummary(prob, weight, model_size_distribution(inc))


def model_size_distribution(indicators):
    """Posterior distribution of the number of included variables, on ``0..K``."""
    inc = np.atleast_2d(np.asarray(indicators)).astype(bool)
    K = inc.shape[1]
    sizes = inc.sum(axis=1)
    return np.bincount(sizes, minlength=K + 1) / len(sizes)
