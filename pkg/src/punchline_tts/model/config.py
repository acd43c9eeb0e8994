"""Model configuration, named profiles, and ablation toggles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

from ..errors import ConfigError

CLN_SITES = (
    "encoder",
    "decoder",
    "duration_predictor",
    "pitch_predictor",
    "energy_predictor",
)

DEFAULT_CLN_SITES = ("encoder", "duration_predictor", "decoder")


@dataclass(frozen=True)
class ProsodyConfig:
    """Prosody encoder: reference conv stack, GRU query, learned token space."""

    num_tokens: int = 8
    dim: int = 256
    num_heads: int = 8
    gru_hidden: int = 128
    conv_channels: tuple[int, ...] = (32, 32, 64, 64, 128, 128)
    conv_kernel: int = 3
    conv_stride: int = 2
    min_reference_frames: int = 64
    tie_qk_projection: bool = False  # reproduces the literal K = P W^Q variant

    def validate(self) -> None:
        if self.num_tokens < 1 or self.dim < 1 or self.gru_hidden < 1:
            raise ConfigError("prosody sizes must be positive")
        if self.dim % self.num_heads != 0:
            raise ConfigError(
                f"prosody dim {self.dim} not divisible by {self.num_heads} heads"
            )
        if len(self.conv_channels) != 6:
            raise ConfigError("reference encoder uses exactly 6 conv layers")


@dataclass(frozen=True)
class ModelConfig:
    symbol_count: int = 0
    mel_bins: int = 80
    hidden_width: int = 256
    encoder_blocks: int = 4
    decoder_blocks: int = 4
    attention_heads: int = 2
    ffn_filter_size: int = 1024
    ffn_kernel_sizes: tuple[int, int] = (9, 1)
    predictor_filter_size: int = 256
    predictor_kernel_size: int = 3
    pitch_bins: int = 32
    energy_bins: int = 32
    variance_value_range: float = 4.0  # z-normalized targets bucketized over +-range
    dropout: float = 0.1
    max_positions: int = 2000
    cln_sites: tuple[str, ...] = DEFAULT_CLN_SITES
    cln_speaker_concat: bool = False
    prosody: ProsodyConfig = field(default_factory=ProsodyConfig)
    use_prosody_encoder: bool = True
    use_speaker_embedding: bool = False
    use_special_tokens: bool = True
    speakers: tuple[str, ...] = ()
    dtype: str = "float32"
    profile: str = "paper"

    def validate(self) -> None:
        if self.symbol_count < 1:
            raise ConfigError("symbol_count must be set from the symbol table")
        for name in ("mel_bins", "hidden_width", "encoder_blocks", "decoder_blocks",
                     "attention_heads", "ffn_filter_size", "predictor_filter_size",
                     "pitch_bins", "energy_bins", "max_positions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.hidden_width % self.attention_heads != 0:
            raise ConfigError("hidden_width must be divisible by attention_heads")
        unknown = set(self.cln_sites) - set(CLN_SITES)
        if unknown:
            raise ConfigError(f"unknown cln_sites {sorted(unknown)}")
        if self.cln_sites and not self.condition_dim:
            raise ConfigError(
                "cln_sites need a conditioning source (prosody encoder or "
                "speaker embedding)"
            )
        if self.use_speaker_embedding and not self.speakers:
            raise ConfigError("use_speaker_embedding requires a speakers list")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")
        self.prosody.validate()

    @property
    def condition_dim(self) -> int:
        """Width of the vector feeding the CLN adapters.

        CLN is conditioned on the prosody representation, optionally
        concatenated with a speaker embedding; a speaker embedding alone
        conditions the backbone additively, never through CLN.
        """
        dim = self.prosody.dim if self.use_prosody_encoder else 0
        if dim and self.cln_speaker_concat and self.use_speaker_embedding:
            dim += self.hidden_width
        return dim

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["prosody"] = asdict(self.prosody)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        data = dict(payload)
        prosody_data = dict(data.pop("prosody", {}))
        if "conv_channels" in prosody_data:
            prosody_data["conv_channels"] = tuple(prosody_data["conv_channels"])
        for key in ("ffn_kernel_sizes", "cln_sites", "speakers"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        return cls(prosody=ProsodyConfig(**prosody_data), **data)


def paper_profile(**overrides) -> ModelConfig:
    """Full-size configuration matching the published architecture constants."""
    return replace(ModelConfig(profile="paper"), **overrides)


def desk_profile(**overrides) -> ModelConfig:
    """Laptop-scale configuration for fixtures and fast iteration."""
    base = ModelConfig(
        mel_bins=80,
        hidden_width=64,
        encoder_blocks=2,
        decoder_blocks=2,
        attention_heads=2,
        ffn_filter_size=128,
        ffn_kernel_sizes=(3, 1),
        predictor_filter_size=64,
        dropout=0.0,
        max_positions=1200,
        prosody=ProsodyConfig(
            num_tokens=8,
            dim=32,
            num_heads=2,
            gru_hidden=32,
            conv_channels=(4, 4, 8, 8, 16, 16),
        ),
        profile="desk",
    )
    return replace(base, **overrides)


def baseline_speaker_embedding_profile(speakers: tuple[str, ...], **overrides) -> ModelConfig:
    """Plain backbone plus a speaker-id embedding, no prosody encoder, no CLN."""
    base = desk_profile(
        cln_sites=(),
        use_prosody_encoder=False,
        use_speaker_embedding=True,
        speakers=tuple(speakers),
        profile="baseline_spk_emb",
    )
    return replace(base, **overrides)


PROFILES = {
    "paper": paper_profile,
    "desk": desk_profile,
}

ABLATIONS = ("none", "no_duration_cln", "pitch_energy_cln", "no_special_tokens")


def apply_ablation(config: ModelConfig, ablation: str) -> ModelConfig:
    """Return the config for one of the studied variants.

    ``no_duration_cln`` drops conditioning from the duration predictor;
    ``pitch_energy_cln`` adds it to the pitch and energy predictors;
    ``no_special_tokens`` keeps personal fillers as ordinary phoneme
    sequences (the corpus side skips replacement and the symbol table
    carries no ``<spcN>`` entries).
    """
    if ablation == "none":
        return config
    if ablation == "no_duration_cln":
        sites = tuple(s for s in config.cln_sites if s != "duration_predictor")
        return replace(config, cln_sites=sites)
    if ablation == "pitch_energy_cln":
        sites = tuple(
            list(config.cln_sites)
            + [s for s in ("pitch_predictor", "energy_predictor") if s not in config.cln_sites]
        )
        return replace(config, cln_sites=sites)
    if ablation == "no_special_tokens":
        return replace(config, use_special_tokens=False)
    raise ConfigError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")


def load_run_config(path) -> ModelConfig:
    """Read a declarative JSON run config.

    The file selects a ``profile`` and overrides any ModelConfig field, e.g.::

        {"profile": "desk", "cln_sites": ["encoder", "decoder"], "ablation": "none"}

    A ``loss_weights`` section is reserved for the trainer (see
    :func:`load_loss_weights`) and ignored here.
    """
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    payload.pop("loss_weights", None)
    profile_name = payload.pop("profile", "desk")
    ablation = payload.pop("ablation", "none")
    if profile_name not in PROFILES:
        raise ConfigError(
            f"unknown profile {profile_name!r}; expected one of {sorted(PROFILES)}"
        )
    config = PROFILES[profile_name]()
    data = config.to_dict()
    prosody_overrides = payload.pop("prosody", {})
    for key, value in payload.items():
        if key not in data:
            raise ConfigError(f"unknown config key {key!r}")
        data[key] = value
    data["prosody"].update(prosody_overrides)
    config = ModelConfig.from_dict(data)
    return apply_ablation(config, ablation)


def load_loss_weights(path):
    """Loss weights and the second-half alpha from a run config's
    ``loss_weights`` section; None when the section is absent."""
    from ..losses import LossWeights

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    section = payload.get("loss_weights")
    if section is None:
        return None
    known = {"mel", "duration", "pitch", "energy", "second_half_alpha"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown loss_weights keys {sorted(unknown)}")
    return LossWeights(**section)
