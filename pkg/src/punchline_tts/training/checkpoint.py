"""Checkpoint files: config, parameters, optimizer state, symbol table."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import TrainingError
from ..frontend import SymbolTable
from ..model.acoustic import AcousticModel
from ..model.config import ModelConfig

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: AcousticModel
    symbol_table: SymbolTable
    step: int
    optimizer_state: dict | None
    config: ModelConfig


def save_checkpoint(
    path,
    model: AcousticModel,
    symbol_table: SymbolTable,
    step: int,
    optimizer: torch.optim.Optimizer | None = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "step": step,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "symbol_table": symbol_table.to_dict(),
        "symbol_table_hash": symbol_table.content_hash(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> Checkpoint:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise TrainingError(
            f"{path}: unsupported checkpoint format {version!r} "
            f"(expected {FORMAT_VERSION})"
        )
    symbol_table = SymbolTable.from_dict(payload["symbol_table"])
    if symbol_table.content_hash() != payload["symbol_table_hash"]:
        raise TrainingError(f"{path}: symbol table hash mismatch")
    config = ModelConfig.from_dict(payload["config"])
    model = AcousticModel(config)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return Checkpoint(
        model=model,
        symbol_table=symbol_table,
        step=int(payload["step"]),
        optimizer_state=payload["optimizer_state"],
        config=config,
    )
