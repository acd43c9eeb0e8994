from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dataset import (
    AlignedUtterance,
    FeatureStats,
    check_split_disjoint,
    collate,
    load_training_corpus,
    merge_alignment_for_tokens,
)
from .trainer import TrainResult, TrainSchedule, evaluate, finetune, noam_lr, train

__all__ = [
    "AlignedUtterance",
    "Checkpoint",
    "FeatureStats",
    "TrainResult",
    "TrainSchedule",
    "check_split_disjoint",
    "collate",
    "evaluate",
    "finetune",
    "load_checkpoint",
    "load_training_corpus",
    "merge_alignment_for_tokens",
    "noam_lr",
    "save_checkpoint",
    "train",
]
