"""Proposal grounding by cosine similarity over precomputed embeddings.

A single affine layer maps sentence embeddings into the image-region
feature space; proposals are ranked by cosine similarity and the layer is
trained with softmax cross-entropy over each sample's proposal set.
"""

from .boxes import BoundingBox, assign_gt_proposal, hit_at_50, iou
from .data import (
    DatasetError,
    DatasetMeta,
    FeatureStore,
    GroundingSample,
    Proposal,
    SyntheticResult,
    generate_synthetic,
    load_dataset,
    load_meta,
)
from .gradcheck import GradCheckResult, fd_gradients, relative_errors, run_gradcheck
from .harness import (
    AblationResult,
    EpochLogRow,
    EvalReport,
    NoTrainableSamplesError,
    PerSampleResult,
    RunConfig,
    TrainResult,
    ablate_encoders,
    ablate_top_k,
    evaluate,
    predict,
    select_top_k,
    top_k_indices,
    train,
    write_epoch_log,
)
from .model import (
    CheckpointError,
    DegenerateModelError,
    GradientSet,
    ScoreVector,
    TransformModel,
    backward,
    cosine_scores,
    init_model,
    load_checkpoint,
    loss,
    save_checkpoint,
    transform,
)
from .optim import OptimizerConfig, OptimizerState, learning_rate, step

__version__ = "0.1.0"

__all__ = [
    "AblationResult",
    "BoundingBox",
    "CheckpointError",
    "DatasetError",
    "DatasetMeta",
    "DegenerateModelError",
    "EpochLogRow",
    "EvalReport",
    "FeatureStore",
    "GradCheckResult",
    "GradientSet",
    "GroundingSample",
    "NoTrainableSamplesError",
    "OptimizerConfig",
    "OptimizerState",
    "PerSampleResult",
    "Proposal",
    "RunConfig",
    "ScoreVector",
    "SyntheticResult",
    "TrainResult",
    "TransformModel",
    "ablate_encoders",
    "ablate_top_k",
    "assign_gt_proposal",
    "backward",
    "cosine_scores",
    "evaluate",
    "fd_gradients",
    "generate_synthetic",
    "hit_at_50",
    "init_model",
    "iou",
    "learning_rate",
    "load_checkpoint",
    "load_dataset",
    "load_meta",
    "loss",
    "predict",
    "relative_errors",
    "run_gradcheck",
    "save_checkpoint",
    "select_top_k",
    "step",
    "top_k_indices",
    "train",
    "transform",
    "write_epoch_log",
]
