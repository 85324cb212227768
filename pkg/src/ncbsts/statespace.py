"""Non-centred local linear trend: state draws, intercept/scale draws, sign
switching and Savage-Dickey tests for the state standard deviations.

Observation equation, given the regression part ``x_beta``::

    y_t - x_beta_t = tau0 + sigma_tau * tau~_t + t * alpha0 + sigma_alpha * A~_t + eps_t

with ``tau~`` and ``alpha~`` standard Gaussian random walks started at zero and
``A~_t = sum_{s<=t} alpha~_s``.
"""
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import (
    BandedMatrix,
    PrecisionGaussian,
    build_first_difference,
    build_second_difference,
    sample_precision_gaussian,
)

BANDWIDTH = 4


class DenominatorUnderflowWarning(RuntimeWarning):
    pass


@dataclass
class NcssStates:
    tau_tilde: np.ndarray
    a_tilde: np.ndarray

    def __post_init__(self):
        self.tau_tilde = np.asarray(self.tau_tilde, dtype=float)
        self.a_tilde = np.asarray(self.a_tilde, dtype=float)
        if self.tau_tilde.shape != self.a_tilde.shape:
            raise ValueError("state paths must have equal length")

    @property
    def alpha_tilde(self):
        """Drift increments recovered from the cumulated path (``A~_0 = 0``)."""
        return np.diff(self.a_tilde, prepend=0.0)

    @classmethod
    def zeros(cls, T):
        return cls(np.zeros(T), np.zeros(T))


@dataclass
class ThetaParams:
    tau0: float
    alpha0: float
    sigma_tau: float
    sigma_alpha: float

    def to_array(self):
        return np.array([self.tau0, self.alpha0, self.sigma_tau, self.sigma_alpha])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))


@dataclass
class StatePriorConfig:
    """Independent normal prior on ``(tau0, alpha0, sigma_tau, sigma_alpha)``."""

    theta_mean: np.ndarray = None
    theta_var: np.ndarray = None

    def __post_init__(self):
        self.theta_mean = np.zeros(4) if self.theta_mean is None else np.asarray(self.theta_mean, float)
        self.theta_var = (
            np.array([10.0, 10.0, 1.0, 1.0]) if self.theta_var is None else np.asarray(self.theta_var, float)
        )
        if self.theta_mean.shape != (4,) or self.theta_var.shape != (4,):
            raise ValueError("theta prior needs 4 means and 4 variances")
        if np.any(self.theta_var <= 0):
            raise ValueError("theta prior variances must be strictly positive")

    @classmethod
    def preset(cls, name):
        if name == "default":
            return cls()
        if name == "tight-intercepts":
            # intercept block diag(0.1, 0.1); unit variance on the state scales
            return cls(np.zeros(4), np.array([0.1, 0.1, 1.0, 1.0]))
        raise ValueError(f"unknown state prior preset {name!r}")


def _gram_band(D):
    """Symmetric band of ``D' D`` for a lower-banded ``D``."""
    p = D.lower_bandwidth
    dense = D.to_dense()
    return BandedMatrix.from_dense(dense.T @ dense, p, p, symmetric=True).bands


@lru_cache(maxsize=32)
def _prior_band(T):
    """Interleaved prior precision ``blockdiag(H'H, H2'H2)``, ordering (tau~_1, A~_1, tau~_2, ...)."""
    if T < 3:
        raise ValueError(f"state sampler needs T >= 3, got {T}")
    hth = _gram_band(build_first_difference(T))
    h2 = _gram_band(build_second_difference(T))
    ab = np.zeros((BANDWIDTH + 1, 2 * T))
    ab[0, 0::2] = hth[0]
    ab[2, 0::2] = hth[1]
    ab[0, 1::2] = h2[0]
    ab[2, 1::2] = h2[1]
    ab[4, 1::2] = h2[2]
    ab.setflags(write=False)
    return ab


def state_posterior(y_hat, theta, sigma_y2):
    """Precision-form conditional posterior of the interleaved state vector."""
    y_hat = np.asarray(y_hat, dtype=float)
    T = len(y_hat)
    ab = _prior_band(T).copy()
    st, sa = theta.sigma_tau, theta.sigma_alpha
    ab[0, 0::2] += st * st / sigma_y2
    ab[0, 1::2] += sa * sa / sigma_y2
    ab[1, 0::2] += st * sa / sigma_y2
    resid = y_hat - theta.tau0 - theta.alpha0 * np.arange(1, T + 1)
    shift = np.empty(2 * T)
    shift[0::2] = st * resid / sigma_y2
    shift[1::2] = sa * resid / sigma_y2
    return PrecisionGaussian(BandedMatrix(2 * T, BANDWIDTH, 0, ab, symmetric=True), shift)


def sample_states(y_hat, theta, sigma_y2, rng):
    """Joint draw of both standardised state paths by precision sampling.

    ``y_hat`` is the target net of the regression part.
    """
    if not sigma_y2 > 0:
        raise ValueError("sigma_y2 must be positive")
    xi = sample_precision_gaussian(state_posterior(y_hat, theta, sigma_y2), rng)
    return NcssStates(xi[0::2].copy(), xi[1::2].copy())


def state_design(T, states):
    """Columns ``[1, t, tau~, A~]`` multiplying ``(tau0, alpha0, sigma_tau, sigma_alpha)``."""
    return np.column_stack([np.ones(T), np.arange(1.0, T + 1), states.tau_tilde, states.a_tilde])


def trend(theta, states):
    """Fitted trend ``tau_t`` implied by ``theta`` and the standardised states."""
    T = len(states.tau_tilde)
    return state_design(T, states) @ theta.to_array()


def sample_theta(y, x_beta, states, sigma_y2, prior, rng):
    """Conjugate normal draw of intercepts and state standard deviations."""
    y = np.asarray(y, dtype=float)
    T = len(y)
    W = state_design(T, states)
    r = y - x_beta
    prec = np.diag(1.0 / prior.theta_var) + W.T @ W / sigma_y2
    b = prior.theta_mean / prior.theta_var + W.T @ r / sigma_y2
    C = np.linalg.cholesky(prec)
    mean = np.linalg.solve(C.T, np.linalg.solve(C, b))
    draw = mean + np.linalg.solve(C.T, rng.standard_normal(4))
    return ThetaParams.from_array(draw)


def _gig_standard(p, omega, rng):
    """Draw from ``x^(p-1) exp(-omega (x + 1/x) / 2)`` for ``p >= 1`` by
    ratio-of-uniforms with mode shift (Hormann and Leydold, 2014)."""
    m = (math.sqrt((1 - p) ** 2 + omega * omega) - (1 - p)) / omega

    def logh(x):
        return (p - 1) * math.log(x) - 0.5 * omega * (x + 1 / x) if x > 0 else -math.inf

    a2 = -2 * (p + 1) / omega - m
    a1 = 2 * m * (p - 1) / omega - 1
    # roots of x^3 + a2 x^2 + a1 x + m bound the rectangle
    p1 = a1 - a2 * a2 / 3
    q1 = 2 * a2**3 / 27 - a2 * a1 / 3 + m
    phi = math.acos(max(-1.0, min(1.0, -q1 * math.sqrt(-27 / p1**3) / 2)))
    s1 = -math.sqrt(-4 * p1 / 3)
    root1 = s1 * math.cos(phi / 3 + math.pi / 3) - a2 / 3
    root2 = -s1 * math.cos(phi / 3) - a2 / 3
    lm = logh(m)
    vmin = (root1 - m) * math.exp(0.5 * (logh(root1) - lm))
    vmax = (root2 - m) * math.exp(0.5 * (logh(root2) - lm))
    while True:
        u, v = rng.random(2)
        x = (vmin + (vmax - vmin) * v) / u + m
        if u > 0 and 2 * math.log(u) <= logh(x) - lm:
            return x


def _gig(lam, chi, psi, rng):
    """Draw from the generalised inverse Gaussian ``x^(lam-1) exp(-(psi x + chi / x) / 2)``, ``lam <= -1``."""
    omega = math.sqrt(chi * psi)
    if omega < 1e-8:
        # psi is negligible: inverse gamma limit
        return 0.5 * chi / rng.gamma(-lam)
    return math.sqrt(chi / psi) / _gig_standard(-lam, omega, rng)


def interweave_scales(theta, states, prior, rng):
    """Redraw each state scale given its centred path ``sigma * state``.

    The centred path is held fixed, so the likelihood does not change; the
    scale is drawn from its conditional under the centred parameterisation
    (a generalised inverse Gaussian for ``sigma^2`` when the prior mean is zero,
    otherwise used as an independence proposal) and the standardised state is
    rescaled.  This breaks the strong coupling between a scale and its state
    path that slows the plain sampler when a state variance is large.
    """
    T = len(states.tau_tilde)
    sig = theta.to_array()
    paths = [states.tau_tilde, states.a_tilde]
    for i, order in enumerate((1, 2)):
        s = sig[2 + i]
        centred = s * paths[i]
        incr = np.diff(centred, n=order, prepend=np.zeros(order))
        S = float(incr @ incr)
        if s == 0.0 or not S > 1e-300:
            continue
        V, m = prior.theta_var[2 + i], prior.theta_mean[2 + i]
        s_new = math.copysign(math.sqrt(_gig(0.5 * (1 - T), S, 1.0 / V, rng)), s)
        if m != 0.0 and math.log(rng.random()) >= m * (s_new - s) / V:
            continue
        sig[2 + i] = s_new
        paths[i] = centred / s_new
    return ThetaParams.from_array(sig), NcssStates(paths[0], paths[1])


def permute_signs(theta, states, rng):
    """Flip (sigma_i, state_i) jointly with probability 1/2, separately per component."""
    flip_tau, flip_alpha = rng.random(2) < 0.5
    st, tt = theta.sigma_tau, states.tau_tilde
    sa, at = theta.sigma_alpha, states.a_tilde
    if flip_tau:
        st, tt = -st, -tt
    if flip_alpha:
        sa, at = -sa, -at
    return ThetaParams(theta.tau0, theta.alpha0, st, sa), NcssStates(tt, at)


def log_likelihood(y, x_beta, theta, states, sigma_y2):
    """Gaussian log-density of ``y`` given all conditioning quantities."""
    y = np.asarray(y, dtype=float)
    e = y - x_beta - trend(theta, states)
    return -0.5 * (len(y) * math.log(2 * math.pi * sigma_y2) + e @ e / sigma_y2)


def centred_states(theta, states):
    """Centred level and drift paths ``(tau_t, alpha_t)``.

    They satisfy ``tau_t = tau_{t-1} + alpha_t + sigma_tau * u_t`` and
    ``alpha_t = alpha_{t-1} + sigma_alpha * v_t`` with ``tau_0 = tau0`` and
    ``alpha_0 = alpha0``.
    """
    level = trend(theta, states)
    drift = theta.alpha0 + theta.sigma_alpha * states.alpha_tilde
    return level, drift


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    return 0.9 * spread * len(x) ** (-0.2)


def savage_dickey(prior_var, sigma_draws, bandwidth=None):
    """Savage-Dickey density ratio for ``sigma = 0``.

    Numerator: the ``N(0, prior_var)`` prior density at zero.  Denominator: a
    Gaussian kernel density estimate at zero of the sign-symmetrised draws
    ``{+|s|, -|s|}``.  Values above one favour a non-zero standard deviation.
    An underflowing denominator gives ``inf`` and a
    :class:`DenominatorUnderflowWarning`.
    """
    draws = np.abs(np.asarray(sigma_draws, dtype=float).ravel())
    if len(draws) < 1000:
        raise ValueError(f"need at least 1000 posterior draws, got {len(draws)}")
    sym = np.concatenate([draws, -draws])
    h = silverman_bandwidth(sym) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("kernel bandwidth must be positive")
    log_num = -0.5 * math.log(2 * math.pi * prior_var)
    # log of mean_i N(0; s_i, h^2)
    z = -0.5 * (sym / h) ** 2
    zmax = z.max()
    log_den = zmax + math.log(np.exp(z - zmax).mean()) - 0.5 * math.log(2 * math.pi) - math.log(h)
    log_ratio = log_num - log_den
    if log_ratio > 700:
        warnings.warn("Savage-Dickey denominator underflow", DenominatorUnderflowWarning, stacklevel=2)
        return math.inf
    return math.exp(log_ratio)
