"""Nonlinear dynamic factor models with reduced-rank Gaussian-process loadings."""
__version__ = "0.1.0"

from .basis import BasisSpec, KernelHyper, build_phi, prior_weight_variances
from .config import ModelConfig
from .data import Panel, RawPanel, load_panel, pca_init, standardize
from .exceptions import ConfigError, DomainError, GPDFMError, SamplerError
from .forecast import ForecastDensity, expanding_window_run
from .geweke import GewekeReport, geweke_test
from .sampler import ChainState, resume_chain, run_chain
from .scoring import ScoreTable, crps, dm_test, energy_score
from .store import DrawStore
from .structural import GirfSpec, girf, gfevd, size_sign_sweep

__all__ = [
    "BasisSpec", "KernelHyper", "build_phi", "prior_weight_variances", "ModelConfig",
    "Panel", "RawPanel", "load_panel", "pca_init", "standardize", "ConfigError",
    "DomainError", "GPDFMError", "SamplerError", "ForecastDensity", "expanding_window_run",
    "GewekeReport", "geweke_test", "ChainState", "run_chain", "resume_chain",
    "ScoreTable", "crps", "dm_test", "energy_score", "DrawStore", "GirfSpec", "girf", "gfevd",
    "size_sign_sweep", "__version__",
]
