"""Batch synthesis: phonemes in, mel (and optional waveform) plus a trace out.

A DurationTrace records which frames each phoneme occupies in the synthesized
mel; traces are the unit the duration plots and comparisons work on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .audio import AudioConfig, mel_to_waveform, write_wav
from .corpus import UtteranceRecord
from .errors import InputError
from .melio import read_mel, write_mel
from .training.checkpoint import Checkpoint


@dataclass
class DurationTrace:
    """Ordered (label, start_frame, frame_count) segments for one synthesis."""

    name: str
    segments: list[tuple[str, int, int]] = field(default_factory=list)

    def __post_init__(self):
        cursor = 0
        for label, start, frames in self.segments:
            if start != cursor:
                raise InputError(
                    f"trace {self.name!r}: segment {label!r} starts at {start}, "
                    f"expected {cursor}"
                )
            if frames < 0:
                raise InputError(f"trace {self.name!r}: negative frame count")
            cursor = start + frames
        self.total_frames = cursor

    @property
    def labels(self) -> list[str]:
        return [label for label, _, _ in self.segments]

    @property
    def durations(self) -> list[int]:
        return [frames for _, _, frames in self.segments]

    def to_dict(self) -> dict:
        return {"name": self.name, "segments": [list(s) for s in self.segments]}

    @classmethod
    def from_dict(cls, payload: dict) -> "DurationTrace":
        return cls(
            name=payload["name"],
            segments=[tuple(s) for s in payload["segments"]],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, indent=2)

    @classmethod
    def load(cls, path) -> "DurationTrace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SynthesisRequest:
    phonemes: list[str]
    speaker_id: str
    reference_clip_id: str | None = None
    seed: int = 0
    name: str | None = None
    return_waveform: bool = False
    griffin_lim_iters: int = 32


@dataclass
class SynthesisResult:
    mel: np.ndarray
    trace: DurationTrace
    reference_clip_id: str | None
    waveform: np.ndarray | None = None


def pick_reference(
    records: list[UtteranceRecord], speaker_id: str, seed: int
) -> UtteranceRecord:
    """Seeded uniform choice among the speaker's training clips."""
    candidates = [r for r in records if r.speaker_id == speaker_id]
    if not candidates:
        raise InputError(f"no training clips for speaker {speaker_id!r}")
    rng = np.random.default_rng(seed)
    return candidates[int(rng.integers(len(candidates)))]


def synthesize(
    checkpoint: Checkpoint,
    request: SynthesisRequest,
    reference_mel: np.ndarray | None = None,
    audio_config: AudioConfig | None = None,
) -> SynthesisResult:
    """Run the acoustic model on a phoneme sequence.

    ``reference_mel`` must be provided when the model uses a prosody encoder;
    resolution of a clip id or seeded choice to an actual mel is the caller's
    job (the CLI and service do it against a corpus directory).
    """
    table = checkpoint.symbol_table
    for label in request.phonemes:
        if label not in table:
            raise InputError(f"label {label!r} is not in the checkpoint symbol table")
    ids = torch.tensor(table.encode(request.phonemes), dtype=torch.long)

    model = checkpoint.model
    dtype = torch.float64 if model.config.dtype == "float64" else torch.float32
    reference = None
    if model.config.use_prosody_encoder:
        if reference_mel is None:
            raise InputError("this checkpoint needs a reference mel")
        reference = torch.as_tensor(np.asarray(reference_mel), dtype=dtype)

    speaker_index = None
    if model.config.use_speaker_embedding:
        try:
            speaker_index = model.config.speakers.index(request.speaker_id)
        except ValueError:
            raise InputError(
                f"speaker {request.speaker_id!r} unknown to this checkpoint"
            ) from None

    torch.manual_seed(request.seed)
    output = model.infer(ids, reference_mel=reference, speaker_id=speaker_index)
    mel = output.mel_for_item(0).detach().cpu().numpy().astype(np.float32)
    durations = output.durations_used[0].tolist()

    segments = []
    cursor = 0
    for label, frames in zip(request.phonemes, durations):
        segments.append((label, cursor, int(frames)))
        cursor += int(frames)
    trace = DurationTrace(
        name=request.name or f"{request.speaker_id}",
        segments=segments,
    )
    if trace.total_frames != mel.shape[0]:
        raise InputError(
            f"trace covers {trace.total_frames} frames but mel has {mel.shape[0]}"
        )

    waveform = None
    if request.return_waveform:
        waveform = mel_to_waveform(
            mel.astype(np.float64),
            audio_config or AudioConfig(),
            n_iters=request.griffin_lim_iters,
            seed=request.seed,
        )
    return SynthesisResult(
        mel=mel,
        trace=trace,
        reference_clip_id=request.reference_clip_id,
        waveform=waveform,
    )


def write_synthesis_outputs(
    result: SynthesisResult,
    out_dir: str,
    stem: str,
    audio_config: AudioConfig | None = None,
) -> dict:
    """Write mel, trace, and optional waveform; returns the paths used."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    mel_path = os.path.join(out_dir, f"{stem}.mel")
    trace_path = os.path.join(out_dir, f"{stem}.trace.json")
    write_mel(mel_path, result.mel)
    result.trace.save(trace_path)
    paths = {"mel": mel_path, "trace": trace_path}
    if result.waveform is not None:
        wav_path = os.path.join(out_dir, f"{stem}.wav")
        write_wav(wav_path, result.waveform, audio_config or AudioConfig())
        paths["waveform"] = wav_path
    return paths


def _rank(values: list[float]) -> list[float]:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def rank_correlation(a: list[float], b: list[float]) -> float:
    """Spearman correlation of two equally long vectors.

    Degenerate (constant) vectors have no rank ordering; by convention the
    result is 1.0 when the vectors are identical and 0.0 otherwise.
    """
    if len(a) != len(b):
        raise InputError("rank correlation needs equal-length vectors")
    if len(set(a)) <= 1 or len(set(b)) <= 1:
        return 1.0 if list(a) == list(b) else 0.0
    ra, rb = np.asarray(_rank(a)), np.asarray(_rank(b))
    ra -= ra.mean()
    rb -= rb.mean()
    denom = float(np.sqrt((ra**2).sum() * (rb**2).sum()))
    return float((ra * rb).sum() / denom)


def compare_durations(trace_a: DurationTrace, trace_b: DurationTrace) -> dict:
    """Per-phoneme frame deltas plus a rank correlation of relative durations."""
    if trace_a.labels != trace_b.labels:
        raise InputError(
            "traces cover different phoneme sequences: "
            f"{trace_a.labels} vs {trace_b.labels}"
        )
    deltas = [
        {"label": label, "frames_a": fa, "frames_b": fb, "delta": fb - fa}
        for (label, _, fa), (_, _, fb) in zip(trace_a.segments, trace_b.segments)
    ]
    return {
        "trace_a": trace_a.name,
        "trace_b": trace_b.name,
        "segments": deltas,
        "total_frames_a": trace_a.total_frames,
        "total_frames_b": trace_b.total_frames,
        "total_delta": trace_b.total_frames - trace_a.total_frames,
        "rank_correlation": rank_correlation(
            [float(d) for d in trace_a.durations],
            [float(d) for d in trace_b.durations],
        ),
    }


def mel_from_file(path) -> np.ndarray:
    return read_mel(path)
