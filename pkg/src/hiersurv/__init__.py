"""Hierarchical spike-and-slab survival regression on grouped data.

Gibbs-sampler-based inference for censored log-normal outcomes where each
group observes its own subset of a shared covariate pool. Includes SVD-based
component extraction for low-rank predictor blocks, cross-validated
posterior-predictive model comparison, and simulation/validation studies.
"""

from hiersurv.data_model import (
    Group,
    GroupedDataset,
    StandardizationRecord,
    SurvivalOutcome,
    destandardize,
    load_dataset,
    standardize,
)
from hiersurv.components import (
    ComponentScores,
    LowRankModule,
    assemble_design,
    filter_components,
    svd_scores,
)
from hiersurv.sampler import (
    ModelVariant,
    PosteriorSamples,
    PriorConfig,
    Schedule,
    gibbs_run,
    summarize,
)
from hiersurv.evaluation import (
    FoldSplit,
    PredictiveScore,
    cross_validate,
    log_ppl,
    make_folds,
    mean_ssd,
)

__all__ = [
    "ComponentScores",
    "FoldSplit",
    "Group",
    "GroupedDataset",
    "LowRankModule",
    "ModelVariant",
    "PosteriorSamples",
    "PredictiveScore",
    "PriorConfig",
    "Schedule",
    "StandardizationRecord",
    "SurvivalOutcome",
    "assemble_design",
    "cross_validate",
    "destandardize",
    "filter_components",
    "gibbs_run",
    "load_dataset",
    "log_ppl",
    "make_folds",
    "mean_ssd",
    "standardize",
    "summarize",
    "svd_scores",
]

__version__ = "0.1.0"
