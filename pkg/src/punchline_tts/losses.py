"""Training objectives.

Two deliberate departures from the usual FastSpeech-family recipe live here:

* the duration loss is mean squared error in the linear frame domain, not on
  log durations, so a 20% miss on a long phoneme costs far more than the same
  relative miss on a short one;
* the mel reconstruction loss re-weights the second half of each utterance by
  a factor alpha, countering the tail-quality collapse of unweighted training.
  Each half is mean-normalized before weighting so alpha is comparable across
  utterance lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ConfigError, InputError, TrainingError
from .model.acoustic import AcousticBatch, AcousticOutput
from .model.modules import pad_mask_from_lengths


@dataclass
class LossWeights:
    mel: float = 1.0
    duration: float = 1.0
    pitch: float = 1.0
    energy: float = 1.0
    second_half_alpha: float = 2.0

    def __post_init__(self):
        if self.second_half_alpha <= 0:
            raise ConfigError("second_half_alpha must be positive")


@dataclass
class LossBreakdown:
    mel_loss: float
    duration_loss: float
    pitch_loss: float
    energy_loss: float
    total: float
    alpha: float

    def to_dict(self) -> dict:
        return {
            "mel": self.mel_loss,
            "duration": self.duration_loss,
            "pitch": self.pitch_loss,
            "energy": self.energy_loss,
            "total": self.total,
            "alpha": self.alpha,
        }


def duration_loss(
    predicted: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean squared error between durations in the linear frame domain.

    ``mask`` marks padded positions (True = excluded); an all-masked input has
    no defined mean and is rejected.
    """
    if predicted.shape != target.shape:
        raise InputError(
            f"duration shapes differ: {tuple(predicted.shape)} vs {tuple(target.shape)}"
        )
    diff = (target.to(predicted.dtype) - predicted) ** 2
    if mask is None:
        if diff.numel() == 0:
            raise InputError("duration loss over an empty vector")
        return diff.mean()
    keep = ~mask
    count = int(keep.sum())
    if count == 0:
        raise InputError("duration loss over a fully masked vector")
    return diff[keep].sum() / count


def half_weighted_loss(per_frame_losses: torch.Tensor, alpha: float) -> torch.Tensor:
    """First-half mean plus alpha times second-half mean of per-frame losses.

    The split point is ceil(T/2); a missing second half (T == 1) contributes
    zero. alpha = 0 reduces to the first half alone.
    """
    if alpha < 0:
        raise ConfigError("alpha must be non-negative")
    if per_frame_losses.dim() != 1 or per_frame_losses.numel() == 0:
        raise InputError("per-frame losses must be a non-empty 1-D vector")
    t = per_frame_losses.shape[0]
    split = math.ceil(t / 2)
    first = per_frame_losses[:split].mean()
    if split == t:
        return first
    return first + alpha * per_frame_losses[split:].mean()


def masked_mse(
    predicted: torch.Tensor, target: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    keep = ~mask
    count = int(keep.sum())
    if count == 0:
        return predicted.new_zeros(())
    return ((predicted - target.to(predicted.dtype)) ** 2)[keep].sum() / count


def total_loss(
    output: AcousticOutput,
    batch: AcousticBatch,
    weights: LossWeights | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Composite objective: half-weighted mel L1, duration MSE, pitch/energy MSE.

    Returns the differentiable total and a detached per-component breakdown.
    """
    w = weights or LossWeights()
    if batch.mel_targets is None or batch.frame_lengths is None:
        raise InputError("loss needs mel targets and frame lengths")
    if batch.durations is None or batch.pitch is None or batch.energy is None:
        raise InputError("loss needs duration, pitch, and energy targets")

    phone_mask = pad_mask_from_lengths(
        batch.phoneme_lengths, batch.phoneme_ids.shape[1]
    )

    mel_terms = []
    for i in range(output.mel.shape[0]):
        frames = int(min(output.frame_lengths[i], batch.frame_lengths[i]))
        pred = output.mel[i, :frames]
        ref = batch.mel_targets[i, :frames].to(pred.dtype)
        per_frame = (pred - ref).abs().mean(dim=-1)
        mel_terms.append(half_weighted_loss(per_frame, w.second_half_alpha))
    mel = torch.stack(mel_terms).mean()

    dur = duration_loss(output.duration_pred, batch.durations, phone_mask)
    pitch = masked_mse(output.pitch_pred, batch.pitch, phone_mask)
    energy = masked_mse(output.energy_pred, batch.energy, phone_mask)

    total = w.mel * mel + w.duration * dur + w.pitch * pitch + w.energy * energy

    components = {
        "mel": mel, "duration": dur, "pitch": pitch, "energy": energy,
        "total": total,
    }
    for name, value in components.items():
        if not torch.isfinite(value):
            raise TrainingError(f"non-finite {name} loss")

    breakdown = LossBreakdown(
        mel_loss=float(mel.detach()),
        duration_loss=float(dur.detach()),
        pitch_loss=float(pitch.detach()),
        energy_loss=float(energy.detach()),
        total=float(total.detach()),
        alpha=w.second_half_alpha,
    )
    return total, breakdown
