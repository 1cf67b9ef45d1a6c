"""Post-hoc comparison methods: INLP, IVE and batch moment matching."""
from .forest import ForestConfig, forest_importance
from .inlp import (InlpConfig, ProjectionOp, fit_linear_softmax, inlp_apply, inlp_fit,
                   linear_accuracy, majority_fraction)
from .ive import DimRanking, IveConfig, ive_apply, ive_rank
from .moments import moment_loss, moments_available
from .pca import PcaBasis, jacobi_eigh, pca_fit

__all__ = [
    "ForestConfig", "forest_importance", "InlpConfig", "ProjectionOp", "fit_linear_softmax",
    "inlp_apply", "inlp_fit", "linear_accuracy", "majority_fraction", "DimRanking",
    "IveConfig", "ive_apply", "ive_rank", "moment_loss", "moments_available", "PcaBasis",
    "jacobi_eigh", "pca_fit",
]
