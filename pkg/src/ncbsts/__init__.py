"""Non-centred Bayesian structural time series with shrinkage priors for
mixed-frequency nowcasting."""

__version__ = "0.1.0"

from ._jit import backend  # noqa: E402
from .gibbs import McmcSettings, ModelConfig, PosteriorDraws, run_gibbs  # noqa: E402

__all__ = ["McmcSettings", "ModelConfig", "PosteriorDraws", "backend", "run_gibbs", "__version__"]
