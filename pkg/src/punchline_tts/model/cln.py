"""Conditional layer normalization.

The scale and bias are pure linear (bias-free) maps of the conditioning
vector, so both are exactly homogeneous in it: doubling the condition doubles
gamma and beta, and a zero condition yields zero scale and bias. Sites that
are not conditioned fall back to parameter-free layer normalization, which
keeps the parameter-name diff between ablation variants exactly the set of
adapter matrices.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from ..errors import ConfigError

LAYER_NORM_EPS = 1e-5


def normalize_features(x: torch.Tensor, eps: float = LAYER_NORM_EPS) -> torch.Tensor:
    """Per-position normalization over the last (feature) dimension."""
    if x.shape[-1] == 0:
        raise ConfigError("cannot layer-normalize zero-width features")
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps)


def conditional_layer_norm(
    x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor
) -> torch.Tensor:
    """gamma * normalize(x) + beta, broadcasting per-item gamma/beta over time.

    ``x`` is (..., T, H) or (T, H); ``gamma``/``beta`` are (H,) or (B, H) for a
    batched x, in which case they are unsqueezed over the time axis.
    """
    if gamma.shape[-1] != x.shape[-1] or beta.shape[-1] != x.shape[-1]:
        raise ConfigError(
            f"gamma/beta width {gamma.shape[-1]}/{beta.shape[-1]} does not match "
            f"feature width {x.shape[-1]}"
        )
    normed = normalize_features(x)
    if gamma.dim() == 2 and x.dim() == 3:
        gamma = gamma.unsqueeze(1)
        beta = beta.unsqueeze(1)
    return gamma * normed + beta


class ClnAdapter(nn.Module):
    """Bias-free linear maps from the condition vector to scale and bias."""

    def __init__(self, condition_dim: int, hidden_width: int, site: str):
        super().__init__()
        if condition_dim < 1 or hidden_width < 1:
            raise ConfigError("ClnAdapter dimensions must be positive")
        self.site = site
        self.scale_map = nn.Linear(condition_dim, hidden_width, bias=False)
        self.bias_map = nn.Linear(condition_dim, hidden_width, bias=False)
        nn.init.normal_(self.scale_map.weight, std=0.02)
        nn.init.zeros_(self.bias_map.weight)

    def params(self, condition: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if condition.shape[-1] != self.scale_map.in_features:
            raise ConfigError(
                f"condition dim {condition.shape[-1]} does not match adapter "
                f"input {self.scale_map.in_features}"
            )
        return self.scale_map(condition), self.bias_map(condition)

    @torch.no_grad()
    def calibrate(self, probe_condition: torch.Tensor) -> None:
        """Rank-one shift of the scale map so the probe condition maps to 1.

        Keeps the map pure linear while starting the site as (almost) plain
        layer normalization for conditions near the probe.
        """
        e = probe_condition.detach().reshape(-1).to(self.scale_map.weight.dtype)
        norm_sq = float(e.dot(e))
        if norm_sq < 1e-12:
            return
        gamma0 = self.scale_map.weight @ e
        self.scale_map.weight += torch.outer(1.0 - gamma0, e / norm_sq)

    def forward(self, x: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        gamma, beta = self.params(condition)
        return conditional_layer_norm(x, gamma, beta)


class PlainLayerNorm(nn.Module):
    """Parameter-free layer norm used wherever a site is not conditioned."""

    def forward(self, x: torch.Tensor, condition: torch.Tensor | None = None) -> torch.Tensor:
        return normalize_features(x)


def make_norm(site: str, cln_sites: tuple[str, ...], condition_dim: int,
              hidden_width: int) -> nn.Module:
    if site in cln_sites:
        return ClnAdapter(condition_dim, hidden_width, site)
    return PlainLayerNorm()
