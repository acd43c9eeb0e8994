from .acoustic import AcousticBatch, AcousticModel, AcousticOutput
from .cln import ClnAdapter, PlainLayerNorm, conditional_layer_norm, normalize_features
from .config import (
    ABLATIONS,
    ModelConfig,
    ProsodyConfig,
    apply_ablation,
    baseline_speaker_embedding_profile,
    desk_profile,
    load_run_config,
    paper_profile,
)
from .modules import length_regulate, round_durations
from .prosody import ProsodyAttention, ProsodyEncoder, ReferenceEncoder

__all__ = [
    "ABLATIONS",
    "AcousticBatch",
    "AcousticModel",
    "AcousticOutput",
    "ClnAdapter",
    "ModelConfig",
    "PlainLayerNorm",
    "ProsodyAttention",
    "ProsodyConfig",
    "ProsodyEncoder",
    "ReferenceEncoder",
    "apply_ablation",
    "baseline_speaker_embedding_profile",
    "conditional_layer_norm",
    "desk_profile",
    "length_regulate",
    "load_run_config",
    "normalize_features",
    "paper_profile",
    "round_durations",
]
