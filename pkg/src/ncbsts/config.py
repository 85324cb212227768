"""YAML run configuration with schema checks that report file and line.

Layout (every section optional)::

    model:     {prior_kind, horseshoe_method, interweave, state_prior, prior_hyper}
    mcmc:      {n_iter, n_burn, thin, n_chains, seed}
    data:      {monthly, quarterly, transforms, series}
    calendar:  {path | builtin, google_trends, groups}
    evaluate:  {window, models, seed}
    simulate:  {preset, T, K, n_reps, p_d, sigma_y_true, seed, priors, regimes, densities, mcmc}
    output:    {top}

Relative data and calendar paths are resolved against the config file.
"""
import copy
from pathlib import Path

import yaml

from .gibbs import McmcSettings, ModelConfig

SCHEMA = {
    "model": {"prior_kind", "horseshoe_method", "interweave", "state_prior", "prior_hyper"},
    "mcmc": {"n_iter", "n_burn", "thin", "n_chains", "seed"},
    "data": {"monthly", "quarterly", "transforms", "series"},
    "calendar": {"path", "builtin", "google_trends", "groups"},
    "evaluate": {"window", "models", "seed"},
    "simulate": {"preset", "T", "K", "n_reps", "p_d", "sigma_y_true", "seed", "priors", "regimes", "densities", "mcmc"},
    "output": {"top"},
}
PATH_KEYS = (("data", "monthly"), ("data", "quarterly"), ("calendar", "path"))


class ConfigError(ValueError):
    def __init__(self, message, source=None, line=None):
        loc = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(loc + message)
        self.source, self.line = source, line


class RunConfig:
    """Parsed configuration plus a map from key paths to source lines."""

    def __init__(self, data=None, source=None, lines=None):
        self.data = data or {}
        self.source = source
        self.lines = lines or {}

    def section(self, name):
        return self.data.get(name) or {}

    def line_of(self, *keys):
        while keys:
            if keys in self.lines:
                return self.lines[keys]
            keys = keys[:-1]
        return None

    def error(self, message, *keys):
        return ConfigError(message, self.source, self.line_of(*keys))

    def validate(self):
        if not isinstance(self.data, dict):
            raise ConfigError("top level must be a mapping", self.source, 1)
        for sec, body in self.data.items():
            if sec not in SCHEMA:
                raise self.error(f"unknown section {sec!r} (expected one of {sorted(SCHEMA)})", sec)
            if body is None:
                continue
            if not isinstance(body, dict):
                raise self.error(f"section {sec!r} must be a mapping", sec)
            for key in body:
                if key not in SCHEMA[sec]:
                    raise self.error(f"unknown key {sec}.{key} (expected one of {sorted(SCHEMA[sec])})", sec, key)
        return self

    def override(self, dotted, value):
        """Set ``a.b = value``; ``value`` is parsed as YAML."""
        keys = dotted.split(".")
        if len(keys) < 2 or keys[0] not in SCHEMA or keys[1] not in SCHEMA[keys[0]]:
            raise ConfigError(f"cannot override unknown key {dotted!r}")
        parsed = yaml.safe_load(value) if isinstance(value, str) else value
        node = self.data
        for k in keys[:-1]:
            if node.get(k) is None:
                node[k] = {}
            node = node[k]
        node[keys[-1]] = parsed

    def resolve_paths(self):
        """Make data and calendar paths absolute, relative to the config file."""
        base = Path(self.source).resolve().parent if self.source else Path.cwd()
        for sec, key in PATH_KEYS:
            val = self.section(sec).get(key)
            if val is not None:
                p = Path(val)
                self.data[sec][key] = str(p if p.is_absolute() else (base / p).resolve())
        return self

    def model_config(self, seed=None):
        model = dict(self.section("model"))
        model["mcmc"] = dict(self.section("mcmc"))
        if seed is not None:
            model["mcmc"]["seed"] = seed
        self.mcmc_settings(model["mcmc"], "mcmc")
        try:
            return ModelConfig.from_dict(model)
        except (TypeError, ValueError) as exc:
            raise self.error(f"invalid model settings: {exc}", "model") from exc

    def mcmc_settings(self, raw, *keys):
        try:
            return McmcSettings(**(raw or {}))
        except (TypeError, ValueError) as exc:
            raise self.error(f"invalid mcmc settings: {exc}", *keys) from exc

    def to_dict(self):
        return copy.deepcopy(self.data)


def _line_map(node, prefix=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    return out


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", str(path), mark.line + 1 if mark else None) from exc
    cfg = RunConfig(data if data is not None else {}, str(path), _line_map(node) if node is not None else {})
    return cfg.validate()


def from_dict(data, source=None):
    return RunConfig(copy.deepcopy(data), source).validate()
