"""Squared ranking surrogates with alternating least squares.

Quadratic approximations of the softmax ranking loss, solvable in
closed form per row, plus the softmax-family SGD baselines, top-K
ranking metrics, and a numerical verification suite for the theory
behind the construction.
"""

from rgrank.als import AlsConfig, als_fit, als_fit_full_matrix
from rgrank.data import (
    InteractionMatrix,
    InteractionSet,
    SplitBundle,
    TargetMatrices,
    TargetVariant,
    TextFormat,
    build_matrix,
    build_targets,
    kcore_filter,
    load_interactions,
    split_per_user,
)
from rgrank.losses import (
    LossValue,
    SampledBatch,
    bce_loss,
    bpr_loss,
    rg2_context_loss,
    rg_dataset_loss,
    rg_squared_form,
    rgx_context_loss,
    sm_context_loss,
    sm_loss,
    softmax_probs,
    ssm_loss,
    wsl_loss,
)
from rgrank.metrics import RankingResult, evaluate, rank_items
from rgrank.model import EpochLog, FactorModel, load_factors, save_factors
from rgrank.sgd import SgdConfig, sample_negatives, sgd_fit

__version__ = "0.1.0"

__all__ = [
    "AlsConfig", "als_fit", "als_fit_full_matrix",
    "InteractionMatrix", "InteractionSet", "SplitBundle", "TargetMatrices",
    "TargetVariant", "TextFormat", "build_matrix", "build_targets",
    "kcore_filter", "load_interactions", "split_per_user",
    "LossValue", "SampledBatch", "bce_loss", "bpr_loss", "rg2_context_loss",
    "rg_dataset_loss", "rg_squared_form", "rgx_context_loss",
    "sm_context_loss", "sm_loss", "softmax_probs", "ssm_loss", "wsl_loss",
    "RankingResult", "evaluate", "rank_items",
    "EpochLog", "FactorModel", "load_factors", "save_factors",
    "SgdConfig", "sample_negatives", "sgd_fit",
]
