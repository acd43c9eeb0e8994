"""Prosody extraction: reference mel -> query vector -> token-space attention.

A six-layer strided conv stack downsamples the reference mel on both axes, a
GRU summarizes the result into a query, and multi-head attention over a small
learned bank of prosody vectors produces the conditioning representation used
by every CLN site.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from ..errors import ConfigError, InputError
from .config import ProsodyConfig


class ReferenceEncoder(nn.Module):
    """Conv2d(stride 2x2) x 6 -> GRU -> linear adapter to the token-space dim."""

    def __init__(self, mel_bins: int, config: ProsodyConfig):
        super().__init__()
        self.mel_bins = mel_bins
        self.config = config
        convs = []
        in_channels = 1
        for out_channels in config.conv_channels:
            convs.append(
                nn.Conv2d(
                    in_channels,
                    out_channels,
                    kernel_size=config.conv_kernel,
                    stride=config.conv_stride,
                    padding=(config.conv_kernel - 1) // 2,
                )
            )
            in_channels = out_channels
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(
            nn.BatchNorm2d(ch) for ch in config.conv_channels
        )
        freq = mel_bins
        for _ in config.conv_channels:
            freq = (freq + config.conv_stride - 1) // config.conv_stride
        self.gru = nn.GRU(
            input_size=config.conv_channels[-1] * freq,
            hidden_size=config.gru_hidden,
            batch_first=True,
        )
        self.query_adapter = nn.Linear(config.gru_hidden, config.dim)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        """(frames, mel_bins) -> query vector of the token-space dimension."""
        if mel.dim() != 2:
            raise InputError(f"reference mel must be 2-D, got shape {tuple(mel.shape)}")
        if mel.shape[0] < self.config.min_reference_frames:
            raise InputError(
                f"reference mel has {mel.shape[0]} frames; at least "
                f"{self.config.min_reference_frames} are required"
            )
        if mel.shape[1] != self.mel_bins:
            raise InputError(
                f"reference mel has {mel.shape[1]} bins, expected {self.mel_bins}"
            )
        x = mel.unsqueeze(0).unsqueeze(0)  # (1, 1, T, F)
        for conv, norm in zip(self.convs, self.norms):
            x = torch.relu(norm(conv(x)))
        # (1, C, T', F') -> (1, T', C * F')
        x = x.permute(0, 2, 1, 3).contiguous().flatten(2)
        _, state = self.gru(x)
        return self.query_adapter(state[-1].squeeze(0))

    def encode_batch(self, mels: list[torch.Tensor]) -> torch.Tensor:
        """Encode each reference separately; avoids any padding coupling."""
        return torch.stack([self.forward(mel) for mel in mels])


class ProsodyAttention(nn.Module):
    """Multi-head attention of a query over the learned prosody token bank."""

    def __init__(self, config: ProsodyConfig):
        super().__init__()
        config.validate()
        self.config = config
        d = config.dim
        self.tokens = nn.Parameter(torch.randn(config.num_tokens, d) * 0.5)
        self.query_proj = nn.Linear(d, d, bias=False)
        self.key_proj = nn.Linear(d, d, bias=False)
        self.value_proj = nn.Linear(d, d, bias=False)

    def attention_weights(self, query: torch.Tensor) -> torch.Tensor:
        """Per-head softmax weights over tokens, shape (..., heads, tokens)."""
        cfg = self.config
        head_dim = cfg.dim // cfg.num_heads
        single = query.dim() == 1
        if query.shape[-1] != cfg.dim:
            raise ConfigError(
                f"query dim {query.shape[-1]} does not match token space {cfg.dim}"
            )
        q = self.query_proj(query)
        key_in = self.query_proj if cfg.tie_qk_projection else self.key_proj
        k = key_in(self.tokens)  # (tokens, d)
        q = q.reshape(-1, cfg.num_heads, head_dim)  # (B, h, hd)
        k = k.reshape(cfg.num_tokens, cfg.num_heads, head_dim)
        logits = torch.einsum("bhd,thd->bht", q, k) / math.sqrt(head_dim)
        weights = torch.softmax(logits, dim=-1)
        return weights[0] if single else weights

    def forward(self, query: torch.Tensor) -> torch.Tensor:
        """Query (d,) or (B, d) -> prosody representation of the same shape."""
        cfg = self.config
        head_dim = cfg.dim // cfg.num_heads
        single = query.dim() == 1
        weights = self.attention_weights(query)
        if single:
            weights = weights.unsqueeze(0)
        v = self.value_proj(self.tokens).reshape(cfg.num_tokens, cfg.num_heads, head_dim)
        mixed = torch.einsum("bht,thd->bhd", weights, v)
        out = mixed.reshape(-1, cfg.dim)
        return out[0] if single else out


class ProsodyEncoder(nn.Module):
    """Reference encoder and token attention glued into one module."""

    def __init__(self, mel_bins: int, config: ProsodyConfig):
        super().__init__()
        self.reference_encoder = ReferenceEncoder(mel_bins, config)
        self.attention = ProsodyAttention(config)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        return self.attention(self.reference_encoder(mel))

    def encode_batch(self, mels: list[torch.Tensor]) -> torch.Tensor:
        return self.attention(self.reference_encoder.encode_batch(mels))

    def centroid_representation(self) -> torch.Tensor:
        """Representation for a zero query: uniform mix of the token values."""
        zero = torch.zeros(
            self.attention.config.dim,
            dtype=self.attention.tokens.dtype,
            device=self.attention.tokens.device,
        )
        return self.attention(zero)
