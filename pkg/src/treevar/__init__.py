"""Tree-driven time-varying-parameter VAR with factor stochastic volatility.

A Bayesian VAR whose coefficients and error-factor variances move with
user-supplied effect modifiers through sums of regression trees. The package
provides the Gibbs sampler, structural analysis (shock identification,
time-varying impulse responses, scenario paths, WAIC), persistence, CSV
ingestion, a scikit-learn style estimator, and a command-line interface.
"""

from .analysis import (
    IrfResult,
    ShockId,
    average_irf,
    identify_all_draws,
    identify_bc_shock,
    irf,
    phillips_multiplier,
    scenario_irf,
    scenario_paths,
    scenario_tvp,
    subset_loglik,
    time_varying_irf,
    variance_share,
    waic,
)
from .core import (
    ConfigError,
    Dataset,
    DegenerateScaleError,
    DimensionError,
    IdentificationError,
    IngestionError,
    ModelConfig,
    Scaler,
    TreevarError,
    build_design,
    fit_scaler,
    log_likelihood_path,
    validate_config,
)
from .estimator import TreeTvpVar
from .io import TRANSFORMS, apply_transform, load_config, load_panel, save_panel
from .sampler import PosteriorDraws, SamplerPlan, run_core_mcmc, run_mcmc
from .simulate import DgpSpec, GroundTruth, simulate_dgp
from .store import RunManifest, load_draws, save_draws
from ._version import __version__

__all__ = [
    "ConfigError",
    "Dataset",
    "DegenerateScaleError",
    "DgpSpec",
    "DimensionError",
    "GroundTruth",
    "IdentificationError",
    "IngestionError",
    "IrfResult",
    "ModelConfig",
    "PosteriorDraws",
    "RunManifest",
    "SamplerPlan",
    "Scaler",
    "ShockId",
    "TRANSFORMS",
    "TreeTvpVar",
    "TreevarError",
    "apply_transform",
    "average_irf",
    "build_design",
    "fit_scaler",
    "identify_all_draws",
    "identify_bc_shock",
    "irf",
    "load_config",
    "log_likelihood_path",
    "load_draws",
    "load_panel",
    "phillips_multiplier",
    "run_core_mcmc",
    "run_mcmc",
    "save_draws",
    "save_panel",
    "scenario_irf",
    "scenario_paths",
    "scenario_tvp",
    "simulate_dgp",
    "subset_loglik",
    "time_varying_irf",
    "validate_config",
    "variance_share",
    "waic",
    "__version__",
]
