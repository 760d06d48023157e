"""Random-forest feature importance: classical MDI, its R^2 reading, MDI+ and RF+."""
__version__ = "0.1.0"

from mdiplus._backend import BACKEND
from mdiplus.data import Dataset, SeededRng, load_csv, train_test_split, write_csv
from mdiplus.exceptions import (
    ConfigError, ConvergenceError, DataError, DegenerateLeverageError, ExperimentError, MdiPlusError,
    ScreeningError,
)
from mdiplus.forest import Forest, ForestParams, Tree, fit_forest
from mdiplus.glm import GlmFit, GlmSpec, fit_ols, fit_regularized
from mdiplus.importance import (
    ImportanceReport, MdiPlusConfig, RFPlus, compute, fit_rf_plus, mda, mdi_classical, mdi_oob, mdi_plus,
    mdi_r2,
)
from mdiplus.metrics import SimilarityMetric, auroc, rbo
from mdiplus.pcs import CandidateModel, ensemble_rank, prediction_screen, stability_select
from mdiplus.stumps import TransformedMatrix, transform

__all__ = [
    "BACKEND", "CandidateModel", "ConfigError", "ConvergenceError", "DataError", "Dataset",
    "DegenerateLeverageError", "ExperimentError", "Forest", "ForestParams", "GlmFit", "GlmSpec",
    "ImportanceReport", "MdiPlusConfig", "MdiPlusError", "RFPlus", "ScreeningError", "SeededRng",
    "SimilarityMetric", "TransformedMatrix", "Tree", "auroc", "compute", "ensemble_rank", "fit_forest",
    "fit_ols", "fit_regularized", "fit_rf_plus", "load_csv", "mda", "mdi_classical", "mdi_oob", "mdi_plus",
    "mdi_r2", "prediction_screen", "rbo", "stability_select", "train_test_split", "transform", "write_csv",
]
