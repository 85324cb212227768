"""Monte Carlo study: local-linear-trend DGPs with sparse or dense
mixed-frequency regressions, coefficient bias and Savage-Dickey summaries."""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import pandas as pd

from .gibbs import McmcSettings, ModelConfig, run_gibbs
from .midas import MonthlySeries, skip_sample
from .statespace import savage_dickey

log = logging.getLogger(__name__)

REGIMES = ((0.5, 0.0), (0.0, 0.5), (0.5, 0.5), (0.0, 0.0))
DENSITIES = ("sparse", "dense")
PRIORS = ("horseshoe", "horseshoe-savs", "ssvs")


@dataclass
class DgpSpec:
    T: int = 150
    K: int = 300
    sigma_tau_true: float = 0.5
    sigma_alpha_true: float = 0.0
    density: str = "sparse"
    p_d: float = 2.0 / 3.0
    ar_decay: float = 0.5
    sigma_y_true: float = 1.0
    tau0_true: float = 0.0
    alpha0_true: float = 0.0
    n_reps: int = 20
    seed: int = 0

    def __post_init__(self):
        if (self.sigma_tau_true, self.sigma_alpha_true) not in REGIMES:
            raise ValueError(f"(sigma_tau, sigma_alpha) must be one of {REGIMES}")
        if self.density not in DENSITIES:
            raise ValueError(f"density must be one of {DENSITIES}")
        if self.K % 3:
            raise ValueError("K counts skip-sampled columns and must be a multiple of 3")
        if not 0 < self.p_d <= 1:
            raise ValueError("p_d must lie in (0, 1]")


def make_beta(density, K, p_d, rng):
    """Sparse: ``(1, 1/2, 1/3, 1/4, 1/5, 0, ...)``; dense: ``1/3`` with probability ``p_d``."""
    if density == "sparse":
        if K < 6:
            raise ValueError("sparse coefficient vector needs K >= 6")
        beta = np.zeros(K)
        beta[:5] = 1.0 / np.arange(1, 6)
        return beta
    if density == "dense":
        return np.where(rng.random(K) < p_d, 1.0 / 3.0, 0.0)
    raise ValueError(f"unknown density {density!r}")


@lru_cache(maxsize=8)
def _cov_chol(n, decay):
    return np.linalg.cholesky(covariate_covariance(n, decay))


def covariate_covariance(n, decay=0.5):
    """``Sigma_ij = decay^|i-j|`` over ``n`` monthly observations."""
    idx = np.arange(n)
    return decay ** np.abs(idx[:, None] - idx[None, :])


@dataclass
class DgpDraw:
    y: np.ndarray
    X: np.ndarray
    beta: np.ndarray
    tau_tilde: np.ndarray
    a_tilde: np.ndarray
    trend: np.ndarray


def generate_dgp(spec, rng):
    """Simulate one data set.

    ``K / 3`` monthly covariates, each ``N(0, Sigma)`` over ``3T`` months and
    independent of each other, are skip-sampled into ``K`` columns.  The target
    is the non-centred local linear trend plus ``X beta`` plus noise.
    """
    T, K = spec.T, spec.K
    L = _cov_chol(3 * T, spec.ar_decay)
    monthly = rng.standard_normal((K // 3, 3 * T)) @ L.T
    X = skip_sample([MonthlySeries(f"x{i}", m) for i, m in enumerate(monthly)], T).X
    beta = make_beta(spec.density, K, spec.p_d, rng)
    tau_tilde = np.cumsum(rng.standard_normal(T))
    a_tilde = np.cumsum(np.cumsum(rng.standard_normal(T)))
    t = np.arange(1, T + 1)
    level = spec.tau0_true + spec.sigma_tau_true * tau_tilde + t * spec.alpha0_true + spec.sigma_alpha_true * a_tilde
    y = level + X @ beta + spec.sigma_y_true * rng.standard_normal(T)
    return DgpDraw(y, X, beta, tau_tilde, a_tilde, level)


def root_mean_bias(beta_hats, beta_true):
    """``sqrt(mean_reps ||beta_hat - beta||^2)``."""
    B = np.atleast_2d(np.asarray(beta_hats, dtype=float))
    beta_true = np.asarray(beta_true, dtype=float)
    if B.shape[0] == 0:
        raise ValueError("need at least one replication")
    if B.shape[-1] != beta_true.shape[-1]:
        raise ValueError("dimension mismatch between estimates and truth")
    return float(np.sqrt(np.mean(np.sum((B - beta_true) ** 2, axis=1))))


# --- table runner ------------------------------------------------------------


@dataclass
class StudyPreset:
    name: str
    T: int
    K: int
    n_reps: int
    mcmc: McmcSettings
    p_d: float = 2.0 / 3.0
    sigma_y_true: float = 1.0
    seed: int = 0


PRESETS = {
    "desk": StudyPreset("desk", 150, 60, 10, McmcSettings(n_iter=3000, n_burn=1000, thin=2, n_chains=1)),
    "full": StudyPreset("full", 150, 300, 20, McmcSettings()),
}


@dataclass
class SimResult:
    """Per-replication records plus aggregates by (prior, regime, density)."""

    records: pd.DataFrame
    summary: pd.DataFrame = field(default=None)

    def __post_init__(self):
        if self.summary is None:
            self.summary = summarise(self.records)

    def table2(self):
        """Wide layout: rows (block, prior), columns (density, regime)."""
        s = self.summary
        blocks = [("bias", "root_mean_bias", PRIORS), ("DS(sigma_tau=0)", "ds_tau_mean", ("horseshoe", "ssvs")),
                  ("DS(sigma_alpha=0)", "ds_alpha_mean", ("horseshoe", "ssvs"))]
        rows = []
        for label, col, priors in blocks:
            for prior in priors:
                row = {"block": label, "prior": prior}
                for dens in DENSITIES:
                    for st, sa in REGIMES:
                        hit = s[(s.prior == prior) & (s.density == dens) & (s.sigma_tau == st) & (s.sigma_alpha == sa)]
                        row[f"{dens} ({st:g},{sa:g})"] = float(hit[col].iloc[0]) if len(hit) else np.nan
                rows.append(row)
        return pd.DataFrame(rows)


def summarise(records):
    ok = records[records.error.isna()] if "error" in records else records
    out = []
    for (prior, dens, st, sa), g in ok.groupby(["prior", "density", "sigma_tau", "sigma_alpha"], sort=False):
        truth_tau, truth_alpha = st > 0, sa > 0
        out.append(
            {
                "prior": prior,
                "density": dens,
                "sigma_tau": st,
                "sigma_alpha": sa,
                "n_reps": len(g),
                "root_mean_bias": float(np.sqrt(g.sq_error.mean())),
                "ds_tau_mean": float(g.ds_tau.mean()),
                "ds_tau_median": float(g.ds_tau.median()),
                "ds_alpha_mean": float(g.ds_alpha.mean()),
                "ds_alpha_median": float(g.ds_alpha.median()),
                "ds_tau_correct": float(np.mean((g.ds_tau > 1) == truth_tau)),
                "ds_alpha_correct": float(np.mean((g.ds_alpha > 1) == truth_alpha)),
            }
        )
    return pd.DataFrame(out)


def _replication(task):
    spec, mcmc, priors = task
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, REGIMES.index((spec.sigma_tau_true, spec.sigma_alpha_true)),
                                                        DENSITIES.index(spec.density), spec.n_reps]))
    data = generate_dgp(spec, rng)
    rows = []
    chains = {}
    if any(p.startswith("horseshoe") for p in priors):
        chains["horseshoe-savs"] = "horseshoe-savs"
    if "ssvs" in priors:
        chains["ssvs"] = "ssvs"
    for key in chains:
        cfg = ModelConfig(key, replace(mcmc, seed=int(rng.integers(2**31))))
        t0 = time.perf_counter()
        try:
            draws = run_gibbs(data.y, data.X, cfg)
            ds_tau = savage_dickey(cfg.state_prior.theta_var[2], draws.sigma_tau)
            ds_alpha = savage_dickey(cfg.state_prior.theta_var[3], draws.sigma_alpha)
            err = None
        except Exception as exc:  # recorded per cell, not fatal
            draws, ds_tau, ds_alpha, err = None, np.nan, np.nan, f"{type(exc).__name__}: {exc}"
        secs = time.perf_counter() - t0
        variants = [("horseshoe", False), ("horseshoe-savs", True)] if key == "horseshoe-savs" else [("ssvs", False)]
        for prior, sparse in variants:
            if prior not in priors:
                continue
            sq = np.nan if draws is None else float(np.sum((draws.posterior_mean_beta(sparse) - data.beta) ** 2))
            rows.append(
                {
                    "prior": prior,
                    "density": spec.density,
                    "sigma_tau": spec.sigma_tau_true,
                    "sigma_alpha": spec.sigma_alpha_true,
                    "rep": spec.n_reps,
                    "sq_error": sq,
                    "ds_tau": ds_tau,
                    "ds_alpha": ds_alpha,
                    "seconds": secs,
                    "error": err,
                }
            )
    return rows


def run_table2(preset="desk", priors=PRIORS, regimes=REGIMES, densities=DENSITIES, n_jobs=1, n_reps=None,
               mcmc=None, progress=None):
    """Run the full regime x density x prior grid.

    ``preset`` is a name from :data:`PRESETS` or a :class:`StudyPreset`.  Every
    replication draws its data from a seed derived from (preset seed, regime,
    density, replication) so that cells are reproducible independently of
    ``n_jobs``; all priors are fitted to the same data.
    """
    p = PRESETS[preset] if isinstance(preset, str) else preset
    mcmc = mcmc or p.mcmc
    reps = n_reps or p.n_reps
    tasks = []
    for dens in densities:
        for st, sa in regimes:
            for r in range(reps):
                # the rep index travels in n_reps so that the spec stays hashable
                spec = DgpSpec(T=p.T, K=p.K, sigma_tau_true=st, sigma_alpha_true=sa, density=dens, p_d=p.p_d,
                               sigma_y_true=p.sigma_y_true, n_reps=r, seed=p.seed)
                tasks.append((spec, mcmc, tuple(priors)))
    rows = []
    if n_jobs == 1:
        for i, t in enumerate(tasks):
            rows.extend(_replication(t))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            for i, r in enumerate(ex.map(_replication, tasks)):
                rows.extend(r)
                if progress:
                    progress(i + 1, len(tasks))
    return SimResult(pd.DataFrame(rows))


# --- synthetic nowcasting data ----------------------------------------------


MACRO_SERIES = ("fedfunds", "baa", "uncertainty", "hours", "unrate", "cpi", "indpro", "loans", "m2",
                "housst", "pce", "pce2", "construction")


def synthetic_nowcast_data(n_quarters, rng, n_gt=3, noise_sd=0.3, signal=None):
    """Monthly series named after the built-in calendar plus a quarterly target.

    Returns ``(monthly, y, gt_names)`` where ``monthly`` maps series name to
    ``3 * n_quarters`` stationary AR(1) observations and ``y`` depends on a few
    late-released monthly cells, so information accumulates over the vintages.
    """
    gt = [f"gt{i + 1}" for i in range(n_gt)]
    names = list(MACRO_SERIES) + gt
    n_months = 3 * n_quarters
    monthly = {}
    for name in names:
        e = rng.standard_normal(n_months + 50)
        x = np.empty_like(e)
        x[0] = e[0]
        for t in range(1, len(e)):
            x[t] = 0.5 * x[t - 1] + np.sqrt(0.75) * e[t]
        monthly[name] = x[50:]
    # (series, offset) -> coefficient
    signal = signal or {("indpro", 0): 0.8, ("indpro", 1): 0.4, ("pce", 0): 0.6, ("hours", 1): 0.4,
                        (gt[0], 0) if gt else ("baa", 0): -0.5, ("baa", 2): 0.3}
    X = skip_sample([MonthlySeries(n, v) for n, v in monthly.items()], n_quarters)
    col = {c: j for j, c in enumerate(X.column_meta)}
    y = 0.5 + 0.1 * np.cumsum(rng.standard_normal(n_quarters)) * 0.2 + noise_sd * rng.standard_normal(n_quarters)
    for cell, b in signal.items():
        y = y + b * X.X[:, col[cell]]
    return monthly, y, gt
