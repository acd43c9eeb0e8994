"""The acoustic model: conditioned encoder, variance adaptor, conditioned decoder.

Phoneme ids go through an embedding and a stack of FFT blocks whose layer
norms are conditioned on the prosody representation; a duration predictor
(also conditioned by default) drives the length regulator; pitch and energy
are predicted per phoneme, quantized, and added back as embeddings; a second
conditioned FFT stack decodes per-frame states into the mel prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError, InputError
from .cln import ClnAdapter
from .config import ModelConfig
from .modules import (
    FFTBlock,
    VariancePredictor,
    length_regulate,
    pad_mask_from_lengths,
    round_durations,
    sinusoid_positions,
)
from .prosody import ProsodyEncoder


@dataclass
class AcousticBatch:
    """One training/inference batch. Sequences are padded; lengths are real."""

    phoneme_ids: torch.Tensor  # (B, T) long
    phoneme_lengths: torch.Tensor  # (B,) long
    reference_mels: list[torch.Tensor] | None = None  # unpadded (T_i, mel_bins)
    speaker_ids: torch.Tensor | None = None  # (B,) long, baseline config only
    durations: torch.Tensor | None = None  # (B, T) long, teacher forcing
    pitch: torch.Tensor | None = None  # (B, T) float, phoneme level
    energy: torch.Tensor | None = None  # (B, T) float
    mel_targets: torch.Tensor | None = None  # (B, F, mel_bins) padded
    frame_lengths: torch.Tensor | None = None  # (B,) long


@dataclass
class AcousticOutput:
    mel: torch.Tensor  # (B, F, mel_bins) padded
    frame_lengths: torch.Tensor  # (B,)
    duration_pred: torch.Tensor  # (B, T) raw, linear domain
    durations_used: torch.Tensor  # (B, T) integer frames fed to the regulator
    pitch_pred: torch.Tensor  # (B, T)
    energy_pred: torch.Tensor  # (B, T)
    prosody: torch.Tensor | None  # (B, d)

    def mel_for_item(self, index: int) -> torch.Tensor:
        return self.mel[index, : int(self.frame_lengths[index])]


class AcousticModel(nn.Module):
    """FastSpeech-style non-autoregressive acoustic model with CLN conditioning."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        width = config.hidden_width
        cond = config.condition_dim

        self.embedding = nn.Embedding(config.symbol_count, width)
        self.encoder_blocks = nn.ModuleList(
            FFTBlock(width, config.attention_heads, config.ffn_filter_size,
                     config.ffn_kernel_sizes, config.dropout,
                     "encoder", config.cln_sites, cond)
            for _ in range(config.encoder_blocks)
        )
        self.decoder_blocks = nn.ModuleList(
            FFTBlock(width, config.attention_heads, config.ffn_filter_size,
                     config.ffn_kernel_sizes, config.dropout,
                     "decoder", config.cln_sites, cond)
            for _ in range(config.decoder_blocks)
        )
        self.mel_head = nn.Linear(width, config.mel_bins)

        def predictor(site: str) -> VariancePredictor:
            return VariancePredictor(
                width, config.predictor_filter_size, config.predictor_kernel_size,
                config.dropout, site, config.cln_sites, cond,
            )

        self.duration_predictor = predictor("duration_predictor")
        self.pitch_predictor = predictor("pitch_predictor")
        self.energy_predictor = predictor("energy_predictor")
        self.pitch_embedding = nn.Embedding(config.pitch_bins, width)
        self.energy_embedding = nn.Embedding(config.energy_bins, width)

        if config.use_prosody_encoder:
            self.prosody_encoder = ProsodyEncoder(config.mel_bins, config.prosody)
        else:
            self.prosody_encoder = None
        if config.use_speaker_embedding:
            self.speaker_embedding = nn.Embedding(len(config.speakers), width)
        else:
            self.speaker_embedding = None

        self.register_buffer(
            "positions",
            sinusoid_positions(config.max_positions, width),
            persistent=False,
        )
        if config.dtype == "float64":
            self.double()
        if self.prosody_encoder is not None and config.cln_sites:
            self._calibrate_cln()

    @torch.no_grad()
    def _calibrate_cln(self) -> None:
        """Point every CLN scale map at 1 for the centroid prosody vector."""
        probe = self.prosody_encoder.centroid_representation()
        if self.config.cln_speaker_concat and self.speaker_embedding is not None:
            probe = torch.cat(
                [probe, torch.zeros(self.config.hidden_width, dtype=probe.dtype)]
            )
        for module in self.modules():
            if isinstance(module, ClnAdapter):
                module.calibrate(probe)

    # ------------------------------------------------------------------ #
    # conditioning
    # ------------------------------------------------------------------ #

    def prosody_representation(self, reference_mel: torch.Tensor) -> torch.Tensor:
        if self.prosody_encoder is None:
            raise ConfigError("this configuration has no prosody encoder")
        return self.prosody_encoder(reference_mel)

    def _condition(
        self,
        prosody: torch.Tensor | None,
        speaker_ids: torch.Tensor | None,
    ) -> torch.Tensor | None:
        if self.prosody_encoder is None:
            return None
        if prosody is None:
            raise InputError("this configuration needs a prosody representation")
        if self.config.cln_speaker_concat and self.speaker_embedding is not None:
            if speaker_ids is None:
                raise InputError("this configuration needs speaker ids")
            return torch.cat([prosody, self.speaker_embedding(speaker_ids)], dim=-1)
        return prosody

    def _positions(self, length: int) -> torch.Tensor:
        if length <= self.positions.shape[0]:
            return self.positions[:length]
        return sinusoid_positions(length, self.config.hidden_width,
                                  self.positions.dtype).to(self.positions.device)

    # ------------------------------------------------------------------ #
    # stages
    # ------------------------------------------------------------------ #

    def encode_phonemes(
        self,
        phoneme_ids: torch.Tensor,
        condition: torch.Tensor | None,
        pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """(B, T) ids -> (B, T, H) states; also accepts a single (T,) sequence."""
        single = phoneme_ids.dim() == 1
        if single:
            phoneme_ids = phoneme_ids.unsqueeze(0)
            if condition is not None and condition.dim() == 1:
                condition = condition.unsqueeze(0)
        if torch.any(phoneme_ids < 0) or torch.any(
            phoneme_ids >= self.config.symbol_count
        ):
            raise InputError(
                f"phoneme id out of range 0..{self.config.symbol_count - 1}"
            )
        x = self.embedding(phoneme_ids) + self._positions(phoneme_ids.shape[1])
        if pad_mask is not None:
            x = x.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        for block in self.encoder_blocks:
            x = block(x, condition, pad_mask)
        return x.squeeze(0) if single else x

    def predict_duration(
        self,
        hidden: torch.Tensor,
        condition: torch.Tensor | None,
        pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Raw per-phoneme durations in frames (linear domain, may be negative)."""
        single = hidden.dim() == 2
        if single:
            hidden = hidden.unsqueeze(0)
            if condition is not None and condition.dim() == 1:
                condition = condition.unsqueeze(0)
        out = self.duration_predictor(hidden, condition, pad_mask)
        return out.squeeze(0) if single else out

    def _quantize(self, values: torch.Tensor, bins: int) -> torch.Tensor:
        half = self.config.variance_value_range
        scaled = (values.clamp(-half, half) + half) / (2 * half)
        return (scaled * (bins - 1)).round().long().clamp(0, bins - 1)

    def predict_pitch_energy(
        self,
        hidden: torch.Tensor,
        condition: torch.Tensor | None,
        pad_mask: torch.Tensor | None = None,
        pitch_target: torch.Tensor | None = None,
        energy_target: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Predict pitch/energy per phoneme and add their embeddings to states.

        Targets, when given (training), drive the quantized embeddings;
        otherwise the predictions do.
        """
        pitch_pred = self.pitch_predictor(hidden, condition, pad_mask)
        pitch_source = pitch_target if pitch_target is not None else pitch_pred
        states = hidden + self.pitch_embedding(
            self._quantize(pitch_source, self.config.pitch_bins)
        )
        energy_pred = self.energy_predictor(states, condition, pad_mask)
        energy_source = energy_target if energy_target is not None else energy_pred
        states = states + self.energy_embedding(
            self._quantize(energy_source, self.config.energy_bins)
        )
        if pad_mask is not None:
            states = states.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        return pitch_pred, energy_pred, states

    def decode_mel(
        self,
        frame_states: torch.Tensor,
        condition: torch.Tensor | None,
        pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """(B, F, H) regulated states -> (B, F, mel_bins) prediction."""
        single = frame_states.dim() == 2
        if single:
            frame_states = frame_states.unsqueeze(0)
            if condition is not None and condition.dim() == 1:
                condition = condition.unsqueeze(0)
        x = frame_states + self._positions(frame_states.shape[1])
        if pad_mask is not None:
            x = x.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        for block in self.decoder_blocks:
            x = block(x, condition, pad_mask)
        mel = self.mel_head(x)
        if pad_mask is not None:
            mel = mel.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        return mel.squeeze(0) if single else mel

    # ------------------------------------------------------------------ #
    # full passes
    # ------------------------------------------------------------------ #

    def forward(self, batch: AcousticBatch, mode: str = "train") -> AcousticOutput:
        if mode not in ("train", "infer"):
            raise InputError(f"mode must be 'train' or 'infer', got {mode!r}")
        if mode == "train" and batch.durations is None:
            raise InputError("train mode requires target durations")

        pad_mask = pad_mask_from_lengths(
            batch.phoneme_lengths, batch.phoneme_ids.shape[1]
        )
        prosody = None
        if self.prosody_encoder is not None:
            if batch.reference_mels is None:
                raise InputError("this configuration needs reference mels")
            prosody = self.prosody_encoder.encode_batch(batch.reference_mels)
        condition = self._condition(prosody, batch.speaker_ids)

        hidden = self.encode_phonemes(batch.phoneme_ids, condition, pad_mask)
        if self.speaker_embedding is not None and not self.config.cln_speaker_concat:
            hidden = hidden + self.speaker_embedding(batch.speaker_ids).unsqueeze(1)
            hidden = hidden.masked_fill(pad_mask.unsqueeze(-1), 0.0)

        duration_pred = self.predict_duration(hidden, condition, pad_mask)
        pitch_pred, energy_pred, states = self.predict_pitch_energy(
            hidden, condition, pad_mask,
            pitch_target=batch.pitch if mode == "train" else None,
            energy_target=batch.energy if mode == "train" else None,
        )

        if mode == "train":
            durations_used = batch.durations.long()
        else:
            durations_used = round_durations(duration_pred)
            durations_used = durations_used.masked_fill(pad_mask, 0)

        expanded = []
        for i in range(states.shape[0]):
            t = int(batch.phoneme_lengths[i])
            expanded.append(length_regulate(states[i, :t], durations_used[i, :t]))
        frame_lengths = torch.tensor(
            [e.shape[0] for e in expanded], dtype=torch.long,
            device=states.device,
        )
        max_frames = int(frame_lengths.max().item()) if expanded else 0
        frame_states = states.new_zeros(
            (len(expanded), max_frames, states.shape[-1])
        )
        for i, e in enumerate(expanded):
            frame_states[i, : e.shape[0]] = e
        frame_mask = pad_mask_from_lengths(frame_lengths, max_frames)

        mel = self.decode_mel(frame_states, condition, frame_mask)
        return AcousticOutput(
            mel=mel,
            frame_lengths=frame_lengths,
            duration_pred=duration_pred,
            durations_used=durations_used,
            pitch_pred=pitch_pred,
            energy_pred=energy_pred,
            prosody=prosody,
        )

    @torch.no_grad()
    def infer(
        self,
        phoneme_ids: torch.Tensor,
        reference_mel: torch.Tensor | None = None,
        speaker_id: int | None = None,
    ) -> AcousticOutput:
        """Single-utterance inference with predicted durations."""
        was_training = self.training
        self.eval()
        try:
            ids = phoneme_ids.unsqueeze(0)
            batch = AcousticBatch(
                phoneme_ids=ids,
                phoneme_lengths=torch.tensor([ids.shape[1]], dtype=torch.long),
                reference_mels=[reference_mel] if reference_mel is not None else None,
                speaker_ids=(
                    torch.tensor([speaker_id], dtype=torch.long)
                    if speaker_id is not None
                    else None
                ),
            )
            return self.forward(batch, mode="infer")
        finally:
            if was_training:
                self.train()

    def parameter_names(self) -> set[str]:
        return {name for name, _ in self.named_parameters()}
