"""Gibbs sampler for the non-centred BSTS model."""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .priors import (
    HorseshoeHyper,
    HorseshoeState,
    SsvsHyper,
    SsvsState,
    sample_beta_horseshoe,
    sample_horseshoe_scales,
    sample_sigma2_horseshoe,
    sample_sigma2_ssvs,
    sample_ssvs_step,
    savs_sparsify,
)
from .statespace import (
    NcssStates,
    StatePriorConfig,
    ThetaParams,
    interweave_scales,
    permute_signs,
    sample_states,
    sample_theta,
    trend,
)

log = logging.getLogger(__name__)

PRIOR_KINDS = ("ssvs", "horseshoe", "horseshoe-savs")
STEPS = ("states", "theta", "signs", "beta", "sigma2")
DRAWS_SCHEMA_VERSION = 1


class GibbsError(RuntimeError):
    def __init__(self, message, iteration=None, step=None, chain=None):
        self.iteration = iteration
        self.step = step
        self.chain = chain
        where = f" (chain {chain}, iteration {iteration}, step {step})" if iteration is not None else ""
        super().__init__(message + where)


@dataclass
class McmcSettings:
    n_iter: int = 15000
    n_burn: int = 5000
    thin: int = 5
    n_chains: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.n_iter > self.n_burn >= 0:
            raise ValueError("need n_iter > n_burn >= 0")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be >= 1")

    @property
    def n_keep(self):
        return len(range(self.n_burn, self.n_iter, self.thin))


@dataclass
class ModelConfig:
    prior_kind: str = "horseshoe"
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    state_prior: StatePriorConfig = field(default_factory=StatePriorConfig)
    prior_hyper: object = None
    # "fast" (T x T solve), "direct" (K x K Cholesky) or "auto"
    horseshoe_method: str = "auto"
    # redraw the state scales given the centred paths inside the theta step
    interweave: bool = True

    def __post_init__(self):
        if self.prior_kind not in PRIOR_KINDS:
            raise ValueError(f"prior_kind must be one of {PRIOR_KINDS}, got {self.prior_kind!r}")
        if self.prior_hyper is None:
            self.prior_hyper = SsvsHyper() if self.prior_kind == "ssvs" else HorseshoeHyper()

    def to_dict(self):
        return {
            "prior_kind": self.prior_kind,
            "mcmc": asdict(self.mcmc),
            "state_prior": {
                "theta_mean": self.state_prior.theta_mean.tolist(),
                "theta_var": self.state_prior.theta_var.tolist(),
            },
            "prior_hyper": asdict(self.prior_hyper),
            "horseshoe_method": self.horseshoe_method,
            "interweave": self.interweave,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        kind = d.get("prior_kind", "horseshoe")
        hyper_cls = SsvsHyper if kind == "ssvs" else HorseshoeHyper
        sp = d.get("state_prior") or {}
        if isinstance(sp, str):
            state_prior = StatePriorConfig.preset(sp)
        else:
            state_prior = StatePriorConfig(sp.get("theta_mean"), sp.get("theta_var"))
        return cls(
            prior_kind=kind,
            mcmc=McmcSettings(**(d.get("mcmc") or {})),
            state_prior=state_prior,
            prior_hyper=hyper_cls(**(d.get("prior_hyper") or {})),
            horseshoe_method=d.get("horseshoe_method", "auto"),
            interweave=bool(d.get("interweave", True)),
        )


# scalar-per-draw fields and fields with a trailing dimension
_FIELDS = ("tau_tilde", "a_tilde", "theta", "beta", "beta_sparse", "sigma2")


@dataclass
class PosteriorDraws:
    """Stored draws; every array is indexed ``[chain, draw, ...]``."""

    prior_kind: str
    tau_tilde: np.ndarray
    a_tilde: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    beta_sparse: np.ndarray
    sigma2: np.ndarray
    scales: dict
    col_norms2: np.ndarray
    n_clamped: int = 0

    @property
    def n_chains(self):
        return self.sigma2.shape[0]

    @property
    def n_draws(self):
        return self.sigma2.shape[1]

    def flat(self, name):
        """Pool chains: ``(n_chains * n_draws, ...)``."""
        a = self.scales[name] if name in self.scales else getattr(self, name)
        if a is None:
            raise KeyError(f"{name} was not stored for prior {self.prior_kind!r}")
        return a.reshape((-1,) + a.shape[2:])

    @property
    def sigma_tau(self):
        return self.flat("theta")[:, 2]

    @property
    def sigma_alpha(self):
        return self.flat("theta")[:, 3]

    def posterior_mean_beta(self, sparse=False):
        return self.flat("beta_sparse" if sparse else "beta").mean(axis=0)

    def save(self, path):
        """Write ``<path>.npz`` (arrays) and ``<path>.json`` (metadata)."""
        path = Path(path)
        arrays = {k: getattr(self, k) for k in _FIELDS if getattr(self, k) is not None}
        arrays.update({f"scale__{k}": v for k, v in self.scales.items()})
        arrays["col_norms2"] = self.col_norms2
        np.savez(path.with_suffix(".npz"), **arrays)
        meta = {
            "schema_version": DRAWS_SCHEMA_VERSION,
            "package_version": __version__,
            "prior_kind": self.prior_kind,
            "n_chains": self.n_chains,
            "n_draws": self.n_draws,
            "n_clamped": self.n_clamped,
            "arrays": {k: list(v.shape) for k, v in arrays.items()},
            "layout": "all arrays indexed [chain, draw, ...]; scale__* are prior scale parameters",
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        with np.load(path.with_suffix(".npz")) as z:
            arrays = {k: z[k] for k in z.files}
        scales = {k[len("scale__") :]: v for k, v in arrays.items() if k.startswith("scale__")}
        return cls(
            prior_kind=meta["prior_kind"],
            scales=scales,
            col_norms2=arrays["col_norms2"],
            n_clamped=meta.get("n_clamped", 0),
            **{k: arrays.get(k) for k in _FIELDS},
        )


def _resolve_method(method, T, K):
    if method == "auto":
        return "fast" if K > T else "direct"
    return method


def _run_chain(y, X, config, seed_seq, chain=0, hooks=None):
    rng = np.random.default_rng(seed_seq)
    T, K = X.shape
    mc = config.mcmc
    kind = config.prior_kind
    is_hs = kind != "ssvs"
    method = _resolve_method(config.horseshoe_method, T, K)
    hyper = config.prior_hyper
    col_norms2 = np.einsum("ij,ij->j", X, X)
    xtx = X.T @ X

    theta = ThetaParams.from_array(config.state_prior.theta_mean)
    states = NcssStates.zeros(T)
    beta = np.zeros(K)
    sigma2 = 1.0
    if is_hs:
        scale_state = HorseshoeState.initial(K)
    else:
        scale_state = SsvsState.initial(K, hyper.c)

    n_keep = mc.n_keep
    out = {
        "tau_tilde": np.empty((n_keep, T)),
        "a_tilde": np.empty((n_keep, T)),
        "theta": np.empty((n_keep, 4)),
        "beta": np.empty((n_keep, K)),
        "sigma2": np.empty(n_keep),
    }
    if is_hs:
        scales = {"lambda2": np.empty((n_keep, K)), "nu2": np.empty(n_keep)}
    else:
        scales = {"gamma": np.empty((n_keep, K), dtype=bool), "delta2": np.empty((n_keep, K)), "pi0": np.empty(n_keep)}

    def hook(step, it):
        if hooks is not None:
            hooks(step, it, chain)

    keep = 0
    step = None
    for it in range(mc.n_iter):
        try:
            xb = X @ beta
            step = "states"
            states = sample_states(y - xb, theta, sigma2, rng)
            hook(step, it)
            step = "theta"
            theta = sample_theta(y, xb, states, sigma2, config.state_prior, rng)
            if config.interweave:
                theta, states = interweave_scales(theta, states, config.state_prior, rng)
            hook(step, it)
            step = "signs"
            theta, states = permute_signs(theta, states, rng)
            hook(step, it)
            step = "beta"
            y_star = y - trend(theta, states)
            if is_hs:
                beta = sample_beta_horseshoe(y_star, X, scale_state, sigma2, rng, method)
                scale_state = sample_horseshoe_scales(beta, sigma2, scale_state, rng)
            else:
                beta, scale_state, _ = sample_ssvs_step(
                    y_star, X, scale_state, sigma2, hyper, rng, beta, xtx=xtx, fixed=("sigma2",)
                )
            hook(step, it)
            step = "sigma2"
            resid = y_star - X @ beta
            if is_hs:
                sigma2 = sample_sigma2_horseshoe(resid, beta, scale_state, hyper, rng)
            else:
                sigma2 = sample_sigma2_ssvs(resid, hyper, rng)
            hook(step, it)
        except GibbsError:
            raise
        except Exception as exc:
            raise GibbsError(f"{type(exc).__name__}: {exc}", it, step, chain) from exc
        if not (np.isfinite(sigma2) and np.all(np.isfinite(beta)) and np.all(np.isfinite(theta.to_array()))):
            raise GibbsError("non-finite draw", it, "check", chain)

        if it >= mc.n_burn and (it - mc.n_burn) % mc.thin == 0:
            out["tau_tilde"][keep] = states.tau_tilde
            out["a_tilde"][keep] = states.a_tilde
            out["theta"][keep] = theta.to_array()
            out["beta"][keep] = beta
            out["sigma2"][keep] = sigma2
            if is_hs:
                scales["lambda2"][keep] = scale_state.lambda2
                scales["nu2"][keep] = scale_state.nu2
            else:
                scales["gamma"][keep] = scale_state.gamma
                scales["delta2"][keep] = scale_state.delta2
                scales["pi0"][keep] = scale_state.pi0
            keep += 1

    out["beta_sparse"] = savs_sparsify(out["beta"], col_norms2) if kind == "horseshoe-savs" else None
    n_clamped = scale_state.n_clamped if is_hs else 0
    if n_clamped:
        log.warning("chain %d: %d horseshoe scale draws were clamped", chain, n_clamped)
    return out, scales, col_norms2, n_clamped


def _chain_task(args):
    return _run_chain(*args)


def run_gibbs(y, X, config, hooks=None, n_jobs=1):
    """Run ``config.mcmc.n_chains`` independent chains and pool their draws.

    Per iteration: states, theta, sign permutation, coefficients (with prior
    scales), observation variance.  ``hooks(step, iteration, chain)`` is called
    after each step.  Chain ``c`` uses the ``c``-th child of
    ``SeedSequence(seed)``, so results do not depend on ``n_jobs``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains missing or non-finite values")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains missing or non-finite values")
    seeds = np.random.SeedSequence(config.mcmc.seed).spawn(config.mcmc.n_chains)
    tasks = [(y, X, config, s, c, hooks) for c, s in enumerate(seeds)]
    if n_jobs == 1 or len(tasks) == 1 or hooks is not None:
        results = [_chain_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_chain_task, tasks))

    def stack(key, src=0):
        parts = [r[src][key] for r in results]
        return None if parts[0] is None else np.stack(parts)

    return PosteriorDraws(
        prior_kind=config.prior_kind,
        tau_tilde=stack("tau_tilde"),
        a_tilde=stack("a_tilde"),
        theta=stack("theta"),
        beta=stack("beta"),
        beta_sparse=stack("beta_sparse"),
        sigma2=stack("sigma2"),
        scales={k: stack(k, 1) for k in results[0][1]},
        col_norms2=results[0][2],
        n_clamped=sum(r[3] for r in results),
    )


def insample_onestep_errors(y, X, config, refit_stride=1, start=None):
    """Cumulative absolute one-step-ahead errors from sequential re-estimation.

    For each target ``t >= start`` the model fitted on observations ``< t'``
    (``t'`` the latest refit point, refits every ``refit_stride`` targets)
    forecasts ``y_t`` ``t - t' + 1`` steps ahead; ``|y_t - mean|`` is accumulated.
    """
    from .forecast import predictive_draws

    if refit_stride < 1:
        raise ValueError("refit_stride must be >= 1")
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    T = len(y)
    start = max(10, T // 3) if start is None else start
    if not 3 <= start < T:
        raise ValueError("start must leave at least 3 training and 1 test observation")
    rng = np.random.default_rng(np.random.SeedSequence([config.mcmc.seed, 1]))
    errors = []
    fit, origin = None, None
    for t in range(start, T):
        if fit is None or (t - start) % refit_stride == 0:
            fit, origin = run_gibbs(y[:t], X[:t], config), t
        pred = predictive_draws(fit, X[t], origin, rng=rng, horizon=t - origin + 1)
        errors.append(abs(y[t] - pred.mean))
    return np.cumsum(errors)
