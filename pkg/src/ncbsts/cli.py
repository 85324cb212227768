"""Command-line front end.

Every command first writes ``manifest.json`` to its output directory; the
manifest embeds the fully resolved configuration, the command options and
hashes of the input files, so ``ncbsts replay manifest.json`` reruns it.
"""
import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from ._jit import backend
from .config import ConfigError, from_dict, load_config
from .forecast import predictive_draws
from .gibbs import GibbsError, run_gibbs
from .midas import (
    CalendarError,
    DataError,
    build_panel,
    load_calendar,
    mask_unpublished,
    read_monthly_csv,
    read_quarterly_csv,
    standardise,
    builtin_calendar,
    builtin_series,
)
from .priors import inclusion_probabilities, savs_sparsify
from .realtime import AR2, run_realtime_evaluation
from .simulation import DENSITIES, PRESETS, PRIORS, REGIMES, DgpSpec, run_table2, synthetic_nowcast_data
from .statespace import savage_dickey

log = logging.getLogger("ncbsts")

MANIFEST_SCHEMA_VERSION = 1
OUTPUT_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
FLOAT_FMT = "%.10g"
MIN_DS_DRAWS = 1000


def _write_csv(df, path):
    df.to_csv(path, index=False, float_format=FLOAT_FMT, lineterminator="\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _data_files(cfg):
    paths = [cfg.section("data").get("monthly"), cfg.section("data").get("quarterly"), cfg.section("calendar").get("path")]
    return [p for p in paths if p]


def _effective_seed(command, cfg, options):
    if options.get("seed") is not None:
        return options["seed"]
    if command == "simulate":
        return cfg.section("simulate").get("seed", PRESETS[options.get("preset", "desk")].seed)
    return cfg.section("mcmc").get("seed", 0)


def write_manifest(command, cfg, out, options):
    files = {}
    for p in _data_files(cfg):
        files[p] = _sha256(p) if Path(p).is_file() else None
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "command": command,
        "config_path": str(Path(cfg.source).resolve()) if cfg.source else None,
        "config": cfg.to_dict(),
        "options": options,
        "data_paths": files,
        "output_dir": str(out.resolve()),
        "seed": _effective_seed(command, cfg, options),
        "version": __version__,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# --- data helpers ------------------------------------------------------------


def _load_panel(cfg):
    d = cfg.section("data")
    if not d.get("monthly") or not d.get("quarterly"):
        raise cfg.error("data.monthly and data.quarterly are required", "data")
    transforms = d.get("transforms") or {}
    if transforms == "standard":
        transforms = builtin_series()
    if not isinstance(transforms, dict):
        raise cfg.error("data.transforms must be a mapping or 'standard'", "data", "transforms")
    return build_panel(read_monthly_csv(d["monthly"]), read_quarterly_csv(d["quarterly"]), transforms, d.get("series"))


def _load_calendar(cfg, panel):
    c = cfg.section("calendar")
    gt = c.get("google_trends")
    if gt is None:
        gt = [s for s in panel.series_names if s.startswith("gt")]
    if c.get("path"):
        return load_calendar(c["path"], {"google_trends": list(gt), **(c.get("groups") or {})})
    builtin = c.get("builtin", "standard")
    if builtin != "standard":
        raise cfg.error(f"unknown built-in calendar {builtin!r}", "calendar", "builtin")
    return builtin_calendar(tuple(gt))


def _check_finite(panel, stop, what):
    bad = np.argwhere(~np.isfinite(panel.X[:stop]))
    if bad.size:
        r, c = bad[0]
        q = panel.quarters[r] if panel.quarters else r
        raise DataError(f"{what}: missing value for {panel.column_names[c]} in quarter {q}")


def _leading_finite(y):
    ok = np.isfinite(y)
    return len(y) if ok.all() else int(np.argmin(ok))


# --- commands ----------------------------------------------------------------


def cmd_estimate(cfg, out, opts):
    panel = _load_panel(cfg)
    T = _leading_finite(panel.y)
    if T < 10:
        raise DataError(f"need at least 10 quarters with an observed target, found {T}")
    _check_finite(panel, T, "estimation sample")
    sub = standardise(panel.rows(T))
    mc = cfg.model_config(opts.get("seed"))
    n_total = mc.mcmc.n_keep * mc.mcmc.n_chains
    if n_total < MIN_DS_DRAWS:
        raise cfg.error(f"Savage-Dickey ratios need at least {MIN_DS_DRAWS} stored draws, settings give {n_total}", "mcmc")
    draws = run_gibbs(sub.y, sub.X, mc)
    draws.save(out / "draws")

    if mc.prior_kind == "ssvs":
        inc = inclusion_probabilities(draws.flat("beta"), "ssvs-gamma", draws.flat("gamma"))
        rule = "indicator"
    else:
        sparse = draws.flat("beta_sparse") if draws.beta_sparse is not None else savs_sparsify(draws.flat("beta"), draws.col_norms2)
        inc = inclusion_probabilities(sparse, "savs-nonzero")
        rule = "sparsified-nonzero"
    order = np.argsort(-inc.probability, kind="stable")
    _write_csv(
        pd.DataFrame(
            {
                "rank": np.arange(1, len(order) + 1),
                "variable": [sub.column_names[j] for j in order],
                "series": [sub.column_meta[j][0] for j in order],
                "offset": [sub.column_meta[j][1] for j in order],
                "probability": inc.probability[order],
                "sign_weight": inc.sign_weight[order],
                "rule": rule,
            }
        ),
        out / "inclusion.csv",
    )
    _write_csv(pd.DataFrame({"size": np.arange(len(inc.model_size)), "probability": inc.model_size}), out / "model_size.csv")

    tv = mc.state_prior.theta_var
    ds = [("sigma_tau", tv[2], savage_dickey(tv[2], draws.sigma_tau)), ("sigma_alpha", tv[3], savage_dickey(tv[3], draws.sigma_alpha))]
    _write_csv(pd.DataFrame(ds, columns=["parameter", "prior_var", "ratio"]), out / "savage_dickey.csv")

    th = draws.flat("theta")
    cols = {"tau0": th[:, 0], "alpha0": th[:, 1], "sigma_tau": np.abs(th[:, 2]), "sigma_alpha": np.abs(th[:, 3]),
            "sigma2": draws.flat("sigma2")}
    rows = [(k, v.mean(), v.std(ddof=1), *np.quantile(v, [0.05, 0.95])) for k, v in cols.items()]
    _write_csv(pd.DataFrame(rows, columns=["parameter", "mean", "sd", "q05", "q95"]), out / "posterior_summary.csv")
    log.info("estimate: T=%d K=%d, %d draws written to %s", T, sub.X.shape[1], draws.n_chains * draws.n_draws, out)


def cmd_nowcast(cfg, out, opts):
    panel = _load_panel(cfg)
    T = panel.T - 1
    if T < 10:
        raise DataError(f"need at least 10 training quarters before the target quarter, found {T}")
    if not np.all(np.isfinite(panel.y[:T])):
        raise DataError("target series has missing values before the nowcast quarter")
    _check_finite(panel, T, "estimation sample")
    sub = standardise(panel, n_train=T)
    if opts.get("all") or opts.get("vintage") is not None:
        cal = _load_calendar(cfg, panel)
        vintages = range(len(cal)) if opts.get("all") else [opts["vintage"]]
        for v in vintages:
            if not 0 <= v < len(cal):
                raise CalendarError(f"vintage {v} out of range; valid vintages are 0..{len(cal) - 1}")
    else:
        cal, vintages = None, [None]

    mc = cfg.model_config(opts.get("seed"))
    draws = run_gibbs(sub.y[:T], sub.X[:T], mc)
    rows, store = [], []
    for v in vintages:
        x = (sub if cal is None else mask_unpublished(sub, cal, v)).X[T].copy()
        unobserved = ~np.isfinite(x)
        x[unobserved] = 0.0
        rng = np.random.default_rng(np.random.SeedSequence([mc.mcmc.seed, 0 if v is None else v + 1, 3]))
        p = predictive_draws(draws, x, T, rng=rng)
        store.append(p.draws)
        label = "data" if v is None else v
        rows.append((label, int((~unobserved & (x != 0)).sum()), p.mean, p.sd, *p.quantiles(QUANTILES)))
    cols = ["vintage", "n_observed", "mean", "sd"] + [f"q{int(round(100 * q)):02d}" for q in QUANTILES]
    _write_csv(pd.DataFrame(rows, columns=cols), out / "nowcast.csv")
    np.savez(out / "nowcast_draws.npz", draws=np.stack(store), vintages=np.array([-1 if v is None else v for v in vintages]))
    log.info("nowcast: %d vintage(s) for quarter %s", len(rows), panel.quarters[T] if panel.quarters else T)


def cmd_evaluate(cfg, out, opts):
    panel = _load_panel(cfg)
    if not np.all(np.isfinite(panel.y)):
        raise DataError("evaluation needs realised values for every quarter")
    _check_finite(panel, panel.T, "evaluation sample")
    ev = cfg.section("evaluate")
    window = opts.get("window") or ev.get("window") or (max(panel.T // 2, 10), panel.T)
    first, stop = (int(w) for w in window)
    if not 10 <= first < stop <= panel.T:
        raise cfg.error(f"evaluation window {[first, stop]} must satisfy 10 <= first < stop <= {panel.T}", "evaluate", "window")
    models = tuple(ev.get("models") or ("horseshoe", "horseshoe-savs", "ssvs", AR2))
    cal = _load_calendar(cfg, panel)
    mc = cfg.model_config(opts.get("seed"))
    seed = ev.get("seed", mc.mcmc.seed)
    try:
        res = run_realtime_evaluation(panel, cal, mc, (first, stop), models=models, seed=seed)
    except ValueError as exc:
        if "unknown model" in str(exc):
            raise cfg.error(str(exc), "evaluate", "models") from exc
        raise
    _write_csv(res.tidy(), out / "rt_metrics.csv")
    _write_csv(res.records, out / "rt_records.csv")
    log.info("evaluate: %d origins x %d vintages x %d models", stop - first, len(cal), len(models))


def _study_preset(cfg, opts):
    s = dict(cfg.section("simulate"))
    name = opts.get("preset") or s.pop("preset", "desk")
    s.pop("preset", None)
    if name not in PRESETS:
        raise cfg.error(f"unknown simulation preset {name!r} (expected one of {sorted(PRESETS)})", "simulate", "preset")
    p = PRESETS[name]
    mcmc = cfg.mcmc_settings({**vars(p.mcmc), **(s.pop("mcmc", None) or {})}, "simulate", "mcmc")
    if opts.get("seed") is not None:
        s["seed"] = opts["seed"]
    grid = {k: s.pop(k, None) for k in ("priors", "regimes", "densities")}
    try:
        p = replace(p, mcmc=mcmc, **s)
    except TypeError as exc:
        raise cfg.error(f"invalid simulation settings: {exc}", "simulate") from exc
    priors = tuple(grid["priors"] or PRIORS)
    regimes = tuple(tuple(float(v) for v in r) for r in (grid["regimes"] or REGIMES))
    densities = tuple(grid["densities"] or DENSITIES)
    bad = [x for x in priors if x not in PRIORS]
    if bad:
        raise cfg.error(f"unknown priors {bad}", "simulate", "priors")
    for st, sa in regimes:
        for dens in densities:
            try:
                DgpSpec(T=p.T, K=p.K, sigma_tau_true=st, sigma_alpha_true=sa, density=dens, p_d=p.p_d)
            except ValueError as exc:
                raise cfg.error(f"invalid simulation design: {exc}", "simulate") from exc
    return p, priors, regimes, densities


def cmd_simulate(cfg, out, opts):
    preset, priors, regimes, densities = _study_preset(cfg, opts)
    log.info("simulate: preset %s, K=%d, T=%d, %d reps", preset.name, preset.K, preset.T, preset.n_reps)
    res = run_table2(preset, priors=priors, regimes=regimes, densities=densities,
                     progress=lambda i, n: log.info("replication %d/%d", i, n))
    failed = res.records.error.notna().sum()
    if failed:
        log.warning("%d fits failed; see sim_records.csv", failed)
    _write_csv(res.table2(), out / "table2.csv")
    _write_csv(res.summary, out / "sim_summary.csv")
    _write_csv(res.records.drop(columns="seconds"), out / "sim_records.csv")


def cmd_make_data(cfg, out, opts):
    """Synthetic monthly panel named after the built-in calendar, plus a config."""
    n_q, seed = int(opts.get("quarters") or 60), int(opts.get("seed") or 0)
    rng = np.random.default_rng(seed)
    monthly, y, gt = synthetic_nowcast_data(n_q, rng, n_gt=int(opts.get("n_gt", 3)))
    months = pd.period_range("2000-01", periods=3 * n_q, freq="M")
    long = pd.DataFrame(
        [(m.to_timestamp().strftime("%Y-%m-%d"), name, val) for name, vals in monthly.items() for m, val in zip(months, vals)],
        columns=["date", "series", "value"],
    )
    _write_csv(long, out / "monthly.csv")
    quarters = pd.period_range("2000Q1", periods=n_q, freq="Q")
    _write_csv(pd.DataFrame({"date": [q.to_timestamp().strftime("%Y-%m-%d") for q in quarters], "value": y}), out / "quarterly.csv")
    config = {
        "model": {"prior_kind": "horseshoe-savs"},
        "mcmc": {"n_iter": 2000, "n_burn": 1000, "thin": 2, "n_chains": 1, "seed": seed},
        "data": {"monthly": "monthly.csv", "quarterly": "quarterly.csv", "transforms": {k: 3 for k in monthly}},
        "calendar": {"builtin": "standard", "google_trends": gt},
        "evaluate": {"window": [n_q - 10, n_q], "models": ["horseshoe", "horseshoe-savs", "ssvs", AR2]},
    }
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False))


COMMANDS = {
    "estimate": cmd_estimate,
    "nowcast": cmd_nowcast,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "make-data": cmd_make_data,
}


# --- entry point -------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="ncbsts", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", "-c", required=config_required, help="YAML run configuration")
        p.add_argument("--out", "-o", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the random seed")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. --set mcmc.n_iter=4000")
        return p

    common(sub.add_parser("estimate", help="fit the model; inclusion, model size and Savage-Dickey tables"))
    p = common(sub.add_parser("nowcast", help="predictive summary for the last quarter"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--vintage", type=int)
    g.add_argument("--all", action="store_true", help="every vintage of the calendar")
    p = common(sub.add_parser("evaluate", help="rolling real-time RMSFE, LPDS and CRPS per vintage"))
    p.add_argument("--window", type=int, nargs=2, metavar=("FIRST", "STOP"), help="row indices of nowcast quarters")
    p = common(sub.add_parser("simulate", help="Monte Carlo bias and Savage-Dickey study"), config_required=False)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p = common(sub.add_parser("make-data", help="write a synthetic data set and config"), config_required=False)
    p.add_argument("--quarters", type=int, default=60)
    p.add_argument("--n-gt", type=int, default=3)
    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", "-o", help="output directory (default: the one recorded)")
    return ap


def _options(args):
    keys = ("seed", "vintage", "all", "window", "preset", "quarters", "n_gt")
    out = {k: getattr(args, k) for k in keys if getattr(args, k, None) not in (None, False)}
    if "window" in out:
        out["window"] = list(out["window"])
    return out


def _prepare(args):
    if args.command == "replay":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest: {exc}", args.manifest) from exc
        if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION or manifest.get("command") not in COMMANDS:
            raise ConfigError("not a run manifest of a supported version", args.manifest)
        for path, digest in (manifest.get("data_paths") or {}).items():
            if digest is not None and (not Path(path).is_file() or _sha256(path) != digest):
                raise DataError(f"input {path} is missing or changed since the manifest was written")
        cfg = from_dict(manifest["config"], manifest.get("config_path"))
        out = Path(args.out or manifest["output_dir"])
        return manifest["command"], cfg, out, manifest.get("options") or {}
    cfg = load_config(args.config) if args.config else from_dict({})
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.override(key.strip(), value)
    cfg.validate().resolve_paths()
    return args.command, cfg, Path(args.out), _options(args)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        command, cfg, out, opts = _prepare(args)
        write_manifest(command, cfg, out, opts)
        log.info("ncbsts %s (%s backend)", command, backend())
        COMMANDS[command](cfg, out, opts)
    except (ConfigError, CalendarError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GibbsError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
