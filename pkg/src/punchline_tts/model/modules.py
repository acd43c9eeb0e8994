"""Backbone building blocks: attention, FFT blocks, predictors, regulator.

Masks follow the usual convention: boolean (B, T) with True marking padded
positions. Every block zero-fills padded positions on the way out, which is
what makes batch padding invisible to the unpadded entries.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from ..errors import InputError
from .cln import make_norm


def sinusoid_positions(n_positions: int, width: int, dtype=torch.float32) -> torch.Tensor:
    """Fixed sinusoidal position table, shape (n_positions, width)."""
    position = torch.arange(n_positions, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, width, 2, dtype=torch.float64) * (-math.log(10000.0) / width)
    )
    table = torch.zeros(n_positions, width, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: width // 2])
    return table.to(dtype)


def pad_mask_from_lengths(lengths: torch.Tensor, max_len: int | None = None) -> torch.Tensor:
    """True at padded positions for each sequence length."""
    if max_len is None:
        max_len = int(lengths.max().item())
    ids = torch.arange(max_len, device=lengths.device).unsqueeze(0)
    return ids >= lengths.unsqueeze(1)


class MultiHeadSelfAttention(nn.Module):
    """Standard scaled dot-product self-attention."""

    def __init__(self, width: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = width // heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None) -> torch.Tensor:
        b, t, w = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        # (B, h, T, hd)
        q = q.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.heads, self.head_dim).transpose(1, 2)
        logits = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if pad_mask is not None:
            logits = logits.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        weights = self.dropout(weights)
        mixed = (weights @ v).transpose(1, 2).reshape(b, t, w)
        return self.out(mixed)


class ConvFeedForward(nn.Module):
    """Two 1-D convolutions with a smooth activation, position-wise."""

    def __init__(self, width: int, filter_size: int, kernel_sizes: tuple[int, int],
                 dropout: float):
        super().__init__()
        k1, k2 = kernel_sizes
        self.conv1 = nn.Conv1d(width, filter_size, k1, padding=(k1 - 1) // 2)
        self.conv2 = nn.Conv1d(filter_size, width, k2, padding=(k2 - 1) // 2)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x.transpose(1, 2)
        y = self.conv2(torch.nn.functional.gelu(self.conv1(y)))
        return self.dropout(y.transpose(1, 2))


class FFTBlock(nn.Module):
    """Self-attention + conv FFN, each followed by a (possibly conditional) norm."""

    def __init__(self, width: int, heads: int, filter_size: int,
                 kernel_sizes: tuple[int, int], dropout: float,
                 site: str, cln_sites: tuple[str, ...], condition_dim: int):
        super().__init__()
        self.attention = MultiHeadSelfAttention(width, heads, dropout)
        self.attention_norm = make_norm(site, cln_sites, condition_dim, width)
        self.ffn = ConvFeedForward(width, filter_size, kernel_sizes, dropout)
        self.ffn_norm = make_norm(site, cln_sites, condition_dim, width)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, condition: torch.Tensor | None,
                pad_mask: torch.Tensor | None) -> torch.Tensor:
        y = self.attention_norm(x + self.dropout(self.attention(x, pad_mask)), condition)
        if pad_mask is not None:
            y = y.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        z = self.ffn_norm(y + self.ffn(y), condition)
        if pad_mask is not None:
            z = z.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        return z


class VariancePredictor(nn.Module):
    """Per-position scalar prediction (duration, pitch, or energy)."""

    def __init__(self, width: int, filter_size: int, kernel_size: int,
                 dropout: float, site: str, cln_sites: tuple[str, ...],
                 condition_dim: int):
        super().__init__()
        padding = (kernel_size - 1) // 2
        self.conv1 = nn.Conv1d(width, filter_size, kernel_size, padding=padding)
        self.norm1 = make_norm(site, cln_sites, condition_dim, filter_size)
        self.conv2 = nn.Conv1d(filter_size, filter_size, kernel_size, padding=padding)
        self.norm2 = make_norm(site, cln_sites, condition_dim, filter_size)
        self.proj = nn.Linear(filter_size, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, condition: torch.Tensor | None,
                pad_mask: torch.Tensor | None) -> torch.Tensor:
        y = torch.nn.functional.gelu(self.conv1(x.transpose(1, 2))).transpose(1, 2)
        y = self.dropout(self.norm1(y, condition))
        if pad_mask is not None:
            y = y.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        y = torch.nn.functional.gelu(self.conv2(y.transpose(1, 2))).transpose(1, 2)
        y = self.dropout(self.norm2(y, condition))
        out = self.proj(y).squeeze(-1)
        if pad_mask is not None:
            out = out.masked_fill(pad_mask, 0.0)
        return out


def length_regulate(hidden: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """Repeat each position's state its duration's worth of times.

    ``hidden`` is (T, H) and ``durations`` an integer (T,) vector; the result
    has sum(durations) rows. Zero durations drop the position.
    """
    if hidden.dim() != 2:
        raise InputError(f"length_regulate expects (T, H) states, got {tuple(hidden.shape)}")
    if durations.dim() != 1 or durations.shape[0] != hidden.shape[0]:
        raise InputError(
            f"durations shape {tuple(durations.shape)} does not match "
            f"{hidden.shape[0]} states"
        )
    if not torch.is_floating_point(durations):
        durations = durations.long()
    elif torch.any(durations != durations.round()):
        raise InputError("length_regulate requires integer durations")
    else:
        durations = durations.long()
    if torch.any(durations < 0):
        raise InputError("length_regulate requires non-negative durations")
    return torch.repeat_interleave(hidden, durations, dim=0)


def round_durations(predictions: torch.Tensor, min_frames: int = 1) -> torch.Tensor:
    """Inference rounding: clamp at zero, round half up, floor at one frame.

    The one-frame floor keeps every phoneme audible; there is no global
    rescaling toward a target length.
    """
    rounded = torch.floor(torch.clamp(predictions, min=0.0) + 0.5)
    return torch.clamp(rounded, min=float(min_frames)).long()
