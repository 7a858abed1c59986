from .linear import DesignRow, LinearFit, fit_linear, ols, vif, vif_matrix
from .longitudinal import MixedFit, fit_longitudinal, profile_loglik
from .spatial import MCMCConfig, SpatialPosterior, fit_spatial

__all__ = [
    "DesignRow",
    "LinearFit",
    "MCMCConfig",
    "MixedFit",
    "SpatialPosterior",
    "fit_linear",
    "fit_longitudinal",
    "fit_spatial",
    "ols",
    "profile_loglik",
    "vif",
    "vif_matrix",
]
