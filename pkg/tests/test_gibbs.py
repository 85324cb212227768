import numpy as np
import pytest

from ncbsts.gibbs import (
    STEPS,
    GibbsError,
    McmcSettings,
    ModelConfig,
    PosteriorDraws,
    insample_onestep_errors,
    run_gibbs,
)
from ncbsts.statespace import StatePriorConfig, savage_dickey


def small_config(kind="horseshoe", **mcmc):
    return ModelConfig(kind, McmcSettings(**{"n_iter": 300, "n_burn": 100, "thin": 1, "n_chains": 1, **mcmc}))


@pytest.fixture(scope="module")
def regression_data():
    r = np.random.default_rng(7)
    T, K = 100, 10
    X = r.normal(size=(T, K))
    beta = np.zeros(K)
    beta[:3] = [1.5, -1.0, 0.8]
    y = 2.0 + X @ beta + 0.5 * r.normal(size=T)
    return y, X, beta


@pytest.mark.parametrize("kind", ["horseshoe", "horseshoe-savs", "ssvs"])
def test_reproducible_for_fixed_seed(kind, regression_data):
    y, X, _ = regression_data
    a = run_gibbs(y[:40], X[:40], small_config(kind, n_iter=60, n_burn=20, seed=3))
    b = run_gibbs(y[:40], X[:40], small_config(kind, n_iter=60, n_burn=20, seed=3))
    c = run_gibbs(y[:40], X[:40], small_config(kind, n_iter=60, n_burn=20, seed=4))
    assert np.array_equal(a.beta, b.beta) and np.array_equal(a.theta, b.theta)
    assert not np.array_equal(a.beta, c.beta)


def test_single_stored_draw(regression_data):
    y, X, _ = regression_data
    d = run_gibbs(y[:30], X[:30], small_config(n_iter=11, n_burn=10))
    assert d.beta.shape == (1, 1, 10)
    assert d.tau_tilde.shape == (1, 1, 30)


def test_thinning_and_chains(regression_data):
    y, X, _ = regression_data
    d = run_gibbs(y[:30], X[:30], small_config(n_iter=50, n_burn=10, thin=4, n_chains=2))
    assert d.n_chains == 2 and d.n_draws == 10
    assert d.flat("beta").shape == (20, 10)


def test_step_order(regression_data):
    y, X, _ = regression_data
    seen = []
    run_gibbs(y[:20], X[:20], small_config(n_iter=2, n_burn=0), hooks=lambda s, it, c: seen.append((it, s)))
    assert seen == [(it, s) for it in range(2) for s in STEPS]


def test_failures_are_wrapped_with_location(regression_data):
    y, X, _ = regression_data

    def hook(step, it, chain):
        if it == 3 and step == "beta":
            raise FloatingPointError("boom")

    with pytest.raises(GibbsError) as info:
        run_gibbs(y[:20], X[:20], small_config(n_iter=10, n_burn=0), hooks=hook)
    assert (info.value.iteration, info.value.step, info.value.chain) == (3, "beta", 0)
    assert isinstance(info.value.__cause__, FloatingPointError)


def test_rejects_missing_values(regression_data):
    y, X, _ = regression_data
    y = y[:20].copy()
    y[4] = np.nan
    with pytest.raises(ValueError):
        run_gibbs(y, X[:20], small_config())


def test_flat_series_has_no_state_variance():
    r = np.random.default_rng(2)
    y = 1.0 + 0.5 * r.normal(size=80)
    d = run_gibbs(y, np.zeros((80, 0)), small_config(n_iter=3000, n_burn=1000))
    assert savage_dickey(1.0, d.sigma_tau) < 1
    assert savage_dickey(1.0, d.sigma_alpha) < 1
    assert abs(np.median(d.sigma2) - 0.25) < 0.1


@pytest.mark.parametrize("kind", ["horseshoe", "ssvs"])
def test_coefficient_recovery(kind, regression_data):
    y, X, beta = regression_data
    d = run_gibbs(y, X, small_config(kind, n_iter=1500, n_burn=500))
    lo, hi = np.percentile(d.flat("beta"), [2.5, 97.5], axis=0)
    covered = (lo <= beta) & (beta <= hi)
    assert covered.sum() >= 9
    assert np.all(np.abs(d.posterior_mean_beta()[:3] - beta[:3]) < 0.2)
    assert abs(np.sqrt(np.median(d.sigma2)) - 0.5) < 0.1


def test_chains_agree(regression_data):
    y, X, _ = regression_data
    d = run_gibbs(y, X, small_config(n_iter=1500, n_burn=500, n_chains=2))
    m = d.beta.mean(axis=1)
    s = d.beta.std(axis=1).max(axis=0)
    assert np.all(np.abs(m[0] - m[1]) < 0.5 * s + 0.02)


def test_savs_draws_are_sparsified(regression_data):
    y, X, _ = regression_data
    d = run_gibbs(y, X, small_config("horseshoe-savs"))
    assert d.beta_sparse.shape == d.beta.shape
    assert np.all(np.abs(d.beta_sparse) <= np.abs(d.beta))
    assert (d.beta_sparse == 0).mean() > 0.3


def test_save_load_round_trip(tmp_path, regression_data):
    y, X, _ = regression_data
    for kind in ("horseshoe-savs", "ssvs"):
        d = run_gibbs(y[:30], X[:30], small_config(kind, n_iter=30, n_burn=10))
        d.save(tmp_path / kind)
        e = PosteriorDraws.load(tmp_path / kind)
        assert e.prior_kind == kind
        for name in ("tau_tilde", "a_tilde", "theta", "beta", "sigma2", "col_norms2"):
            assert np.array_equal(getattr(d, name), getattr(e, name))
        assert d.scales.keys() == e.scales.keys()
        assert all(np.array_equal(d.scales[k], e.scales[k]) for k in d.scales)


def test_config_round_trip():
    cfg = ModelConfig(
        "ssvs",
        McmcSettings(100, 10, 3, 2, 9),
        StatePriorConfig.preset("tight-intercepts"),
        horseshoe_method="direct",
        interweave=False,
    )
    back = ModelConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()
    assert ModelConfig.from_dict({"state_prior": "tight-intercepts"}).state_prior.theta_var.tolist() == [0.1, 0.1, 1, 1]


@pytest.mark.parametrize(
    "bad", [{"prior_kind": "lasso"}, {"mcmc": {"n_iter": 10, "n_burn": 10}}, {"mcmc": {"thin": 0}}]
)
def test_config_validation(bad):
    with pytest.raises((ValueError, TypeError)):
        ModelConfig.from_dict(bad)


def test_insample_errors_accumulate():
    r = np.random.default_rng(4)
    y = r.normal(size=26)
    X = r.normal(size=(26, 2))
    err = insample_onestep_errors(y, X, small_config(n_iter=120, n_burn=40), refit_stride=3, start=20)
    assert len(err) == 6
    assert np.all(np.diff(err) >= 0) and err[0] >= 0
