"""punchline_tts: prosody-token TTS for spontaneous, stand-up style speech.

Core pieces: a phoneme frontend with per-speaker personal-filler tokens, a
corpus pipeline with per-speaker statistics, a non-autoregressive acoustic
model conditioned through conditional layer normalization (including the
duration predictor), linear-domain duration and half-weighted mel losses, a
seeded trainer with checkpointing, and a synthesis front door with duration
traces. A FastAPI service wraps the frozen-checkpoint surface.
"""

__version__ = "0.1.0"

from . import audio, corpus, frontend, losses, melio, synthesis
from .errors import (
    ConfigError,
    InputError,
    ManifestError,
    PunchlineError,
    TrainingError,
)

__all__ = [
    "ConfigError",
    "InputError",
    "ManifestError",
    "PunchlineError",
    "TrainingError",
    "audio",
    "corpus",
    "frontend",
    "losses",
    "melio",
    "synthesis",
    "__version__",
]
