"""Training engine: seeded pretrain/finetune loops with checkpointing.

The reference speech fed to the prosody encoder during training is always
the utterance's own ground-truth mel. Runs are deterministic for a fixed
seed and data order: the seed fixes initialization, batch shuffling, and
therefore the whole loss trajectory.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import torch

from ..errors import TrainingError
from ..frontend import SymbolTable
from ..losses import LossWeights, total_loss
from ..model.acoustic import AcousticModel
from ..model.config import ModelConfig
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .dataset import AlignedUtterance, collate


@dataclass
class TrainSchedule:
    steps: int
    batch_size: int = 2
    seed: int = 0
    lr_factor: float = 1.0
    warmup_steps: int = 200
    grad_clip: float = 1.0
    validation_interval: int = 200
    checkpoint_interval: int = 500

    def __post_init__(self):
        if self.steps < 0:
            raise TrainingError("steps must be >= 0")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    loss_log: list[dict] = field(default_factory=list)

    @property
    def final_total(self) -> float:
        return self.loss_log[-1]["total"] if self.loss_log else math.nan


def noam_lr(step: int, width: int, factor: float, warmup: int) -> float:
    """Transformer warmup-then-decay schedule (step counted from 1)."""
    step = max(step, 1)
    return factor * width**-0.5 * min(step**-0.5, step * warmup**-1.5)


def make_optimizer(model: AcousticModel) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=1e-7, betas=(0.9, 0.98), eps=1e-9)


def _batches(n: int, batch_size: int, epoch: int, seed: int):
    g = torch.Generator().manual_seed(seed * 100003 + epoch)
    order = torch.randperm(n, generator=g).tolist()
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _dtype_of(config: ModelConfig) -> torch.dtype:
    return torch.float64 if config.dtype == "float64" else torch.float32


@torch.no_grad()
def evaluate(
    model: AcousticModel,
    utterances: list[AlignedUtterance],
    weights: LossWeights,
    speaker_index: dict[str, int] | None,
) -> float:
    was_training = model.training
    model.eval()
    try:
        total = 0.0
        for u in utterances:
            batch = collate([u], _dtype_of(model.config), speaker_index)
            output = model(batch, mode="train")
            loss, _ = total_loss(output, batch, weights)
            total += float(loss)
        return total / max(len(utterances), 1)
    finally:
        if was_training:
            model.train()


def _speaker_index(config: ModelConfig) -> dict[str, int] | None:
    if not config.use_speaker_embedding:
        return None
    return {speaker: i for i, speaker in enumerate(config.speakers)}


def _training_loop(
    model: AcousticModel,
    symbol_table: SymbolTable,
    utterances: list[AlignedUtterance],
    schedule: TrainSchedule,
    out_dir: str,
    weights: LossWeights,
    val_utterances: list[AlignedUtterance] | None,
    optimizer: torch.optim.Optimizer,
    lr_factor: float,
    checkpoint_name: str,
) -> TrainResult:
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, checkpoint_name)
    log_path = os.path.join(out_dir, "loss_log.jsonl")
    speaker_index = _speaker_index(model.config)

    loss_log: list[dict] = []
    save_checkpoint(checkpoint_path, model, symbol_table, 0, optimizer)

    if schedule.steps == 0:
        open(log_path, "w", encoding="utf-8").close()
        return TrainResult(checkpoint_path, log_path, loss_log)

    model.train()
    step = 0
    epoch = 0
    width = model.config.hidden_width
    with open(log_path, "w", encoding="utf-8") as log_file:
        while step < schedule.steps:
            for batch_ids in _batches(
                len(utterances), schedule.batch_size, epoch, schedule.seed
            ):
                if step >= schedule.steps:
                    break
                step += 1
                lr = noam_lr(step, width, lr_factor, schedule.warmup_steps)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                batch = collate(
                    [utterances[i] for i in batch_ids],
                    _dtype_of(model.config),
                    speaker_index,
                )
                output = model(batch, mode="train")
                try:
                    loss, breakdown = total_loss(output, batch, weights)
                except TrainingError as err:
                    raise TrainingError(
                        f"{err} at step {step}; last good checkpoint: "
                        f"{checkpoint_path}"
                    ) from err
                optimizer.zero_grad()
                loss.backward()
                if schedule.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(
                        model.parameters(), schedule.grad_clip
                    )
                optimizer.step()

                record = {"step": step, "lr": lr, **breakdown.to_dict()}
                if (
                    val_utterances
                    and schedule.validation_interval > 0
                    and step % schedule.validation_interval == 0
                ):
                    record["val_total"] = evaluate(
                        model, val_utterances, weights, speaker_index
                    )
                loss_log.append(record)
                log_file.write(json.dumps(record) + "\n")

                if (
                    schedule.checkpoint_interval > 0
                    and step % schedule.checkpoint_interval == 0
                ):
                    save_checkpoint(checkpoint_path, model, symbol_table, step, optimizer)
            epoch += 1

    save_checkpoint(checkpoint_path, model, symbol_table, step, optimizer)
    return TrainResult(checkpoint_path, log_path, loss_log)


def train(
    utterances: list[AlignedUtterance],
    symbol_table: SymbolTable,
    config: ModelConfig,
    schedule: TrainSchedule,
    out_dir: str,
    val_utterances: list[AlignedUtterance] | None = None,
    weights: LossWeights | None = None,
) -> TrainResult:
    """Train from scratch and leave a checkpoint plus a JSONL loss log."""
    if config.symbol_count != len(symbol_table):
        config = ModelConfig.from_dict(
            {**config.to_dict(), "symbol_count": len(symbol_table)}
        )
    torch.manual_seed(schedule.seed)
    model = AcousticModel(config)
    optimizer = make_optimizer(model)
    return _training_loop(
        model, symbol_table, utterances, schedule, out_dir,
        weights or LossWeights(), val_utterances, optimizer,
        schedule.lr_factor, "checkpoint.pt",
    )


FINETUNE_LR_RATIO = 0.1  # finetune peak rate relative to pretraining


def extend_embeddings(
    model: AcousticModel, old_table: SymbolTable, new_table: SymbolTable
) -> AcousticModel:
    """Grow the phoneme embedding for appended special tokens.

    Existing rows are copied bit for bit; only the appended token rows get
    fresh (seeded) initialization.
    """
    if not new_table.is_superset_of(old_table):
        raise TrainingError(
            "finetune symbol table must extend the base table by appended "
            "special tokens only"
        )
    if len(new_table) == len(old_table):
        return model
    new_config = ModelConfig.from_dict(
        {**model.config.to_dict(), "symbol_count": len(new_table)}
    )
    new_model = AcousticModel(new_config)
    state = model.state_dict()
    grown = new_model.state_dict()
    old_rows = state["embedding.weight"]
    grown_rows = grown["embedding.weight"].clone()
    grown_rows[: old_rows.shape[0]] = old_rows
    state["embedding.weight"] = grown_rows
    new_model.load_state_dict(state)
    return new_model


def finetune(
    base: Checkpoint | str,
    utterances: list[AlignedUtterance],
    schedule: TrainSchedule,
    out_dir: str,
    symbol_table: SymbolTable | None = None,
    val_utterances: list[AlignedUtterance] | None = None,
    weights: LossWeights | None = None,
) -> TrainResult:
    """Warm-start from a checkpoint, optionally with appended special tokens."""
    if isinstance(base, str):
        base = load_checkpoint(base)
    torch.manual_seed(schedule.seed)
    table = symbol_table or base.symbol_table
    model = extend_embeddings(base.model, base.symbol_table, table)
    optimizer = make_optimizer(model)
    return _training_loop(
        model, table, utterances, schedule, out_dir,
        weights or LossWeights(), val_utterances, optimizer,
        schedule.lr_factor * FINETUNE_LR_RATIO, "finetuned.pt",
    )
