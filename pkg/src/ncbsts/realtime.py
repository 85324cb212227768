"""Rolling pseudo real-time nowcast evaluation across publication vintages."""
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .forecast import ar2_baseline, predictive_draws, rt_crps, rt_lpds, rt_rmsfe
from .gibbs import ModelConfig, run_gibbs
from .midas import mask_unpublished, standardise

METRICS = ("rt_rmsfe", "rt_lpds", "rt_crps")
AR2 = "ar2"


@dataclass
class VintageScores:
    vintage_id: int
    rt_rmsfe: float
    rt_lpds: float
    rt_crps: float


@dataclass
class EvaluationResult:
    scores: dict  # model -> list[VintageScores]
    records: pd.DataFrame  # one row per (origin, vintage, model)

    def tidy(self):
        """Long table with columns ``vintage, model, metric, value``."""
        rows = [
            (s.vintage_id, model, metric, getattr(s, metric))
            for model, per_v in self.scores.items()
            for s in per_v
            for metric in METRICS
        ]
        df = pd.DataFrame(rows, columns=["vintage", "model", "metric", "value"])
        return df.sort_values(["model", "metric", "vintage"], kind="stable").reset_index(drop=True)


def _fit_plan(models):
    """Map each requested model to (chain key, use_sparse); horseshoe and
    horseshoe-savs share one chain."""
    plan = {}
    for name in models:
        if name == AR2:
            continue
        if name in ("horseshoe", "horseshoe-savs"):
            key = "horseshoe-savs"
            plan[name] = (key, name == "horseshoe-savs")
        elif name == "ssvs":
            plan[name] = ("ssvs", False)
        else:
            raise ValueError(f"unknown model {name!r}")
    return plan


def run_realtime_evaluation(
    panel, calendar, config, forecast_window, models=("horseshoe", "horseshoe-savs", "ssvs", AR2), seed=0
):
    """Nowcast each quarter in ``forecast_window`` at every vintage and score.

    ``panel`` is the unstandardised quarterly panel including realised targets;
    ``forecast_window = (first, stop)`` are row indices of the quarters to
    nowcast.  Models are re-estimated once per quarter on the rows before it and
    reused across that quarter's vintages; the AR(2) benchmark ignores vintage
    information.  ``config`` is either a :class:`ModelConfig` (its prior kind is
    swapped per model, default hyperparameters) or a mapping from chain key
    (``"horseshoe-savs"``, ``"ssvs"``) to configs.
    """
    first, stop = forecast_window
    if not 3 <= first < stop <= panel.T:
        raise ValueError(f"forecast window {forecast_window} outside the panel (T={panel.T})")
    plan = _fit_plan(models)
    V = len(calendar)
    preds = {m: [[None] * (stop - first) for _ in range(V)] for m in models}
    records = []
    realised = panel.y[first:stop]
    for j, q in enumerate(range(first, stop)):
        sub = standardise(panel.rows(q + 1), n_train=q)
        y_train, X_train = sub.y[:q], sub.X[:q]
        fits = {}
        for key in sorted({k for k, _ in plan.values()}):
            if isinstance(config, dict):
                cfg = config[key]
            elif key == config.prior_kind:
                cfg = config
            else:
                cfg = replace(config, prior_kind=key, prior_hyper=None)
            cfg = replace(cfg, mcmc=replace(cfg.mcmc, seed=int(np.random.SeedSequence([seed, q]).generate_state(1)[0])))
            fits[key] = run_gibbs(y_train, X_train, cfg)
        rng = np.random.default_rng(np.random.SeedSequence([seed, q, 7]))
        ar = ar2_baseline(y_train, rng) if AR2 in models else None
        for v in range(V):
            x_next = mask_unpublished(sub, calendar, v).X[q]
            for name in models:
                if name == AR2:
                    p = ar
                else:
                    key, sparse = plan[name]
                    p = predictive_draws(fits[key], x_next, q, rng=rng, use_sparse=sparse)
                preds[name][v][j] = p
                records.append((q, v, name, p.mean, p.sd, realised[j]))
    scores = {}
    for name in models:
        per_v = []
        for v in range(V):
            ps = preds[name][v]
            crng = np.random.default_rng(np.random.SeedSequence([seed, v, 11]))
            per_v.append(
                VintageScores(
                    v,
                    rt_rmsfe([p.mean for p in ps], realised),
                    rt_lpds(ps, realised),
                    rt_crps(ps, realised, rng=crng),
                )
            )
        scores[name] = per_v
    rec = pd.DataFrame(records, columns=["origin", "vintage", "model", "mean", "sd", "realised"])
    return EvaluationResult(scores, rec)


def default_eval_config(**mcmc):
    from .gibbs import McmcSettings

    return ModelConfig("horseshoe-savs", McmcSettings(**{"n_iter": 2000, "n_burn": 1000, "thin": 2, "n_chains": 1, **mcmc}))
