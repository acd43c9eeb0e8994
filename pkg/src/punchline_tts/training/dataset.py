"""Training corpus loading: aligned utterances with per-phoneme targets.

Disk layout relative to a corpus directory::

    manifest.tsv
    registry.tsv            (optional; personal-filler registry)
    alignments/<utt_id>.lab (phoneme_label frame_count per line)
    mels/<utt_id>.mel       (binary mel file)
    pitch/<utt_id>.txt      (one frame-level value per line, 0 = unvoiced)
    energy/<utt_id>.txt     (one frame-level value per line)

Alignments are stored against the raw phoneme sequence; when special tokens
are enabled, the spans of a replaced filler are merged so the token inherits
the summed duration and the frame-weighted pitch/energy of its phonemes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..corpus import Alignment, UtteranceRecord, load_alignment, load_manifest
from ..errors import ManifestError
from ..frontend import FillerRegistry, SymbolTable, is_special_token, replace_fillers
from ..melio import read_mel


@dataclass
class AlignedUtterance:
    """One training unit: phonemes, durations, variance targets, mel target."""

    utterance_id: str
    speaker_id: str
    phonemes: tuple[str, ...]
    phoneme_ids: np.ndarray  # (T,) int64
    durations: np.ndarray  # (T,) int64 frames
    pitch: np.ndarray  # (T,) float, z-normalized phoneme means
    energy: np.ndarray  # (T,) float
    mel: np.ndarray  # (frames, mel_bins) float32


@dataclass
class FeatureStats:
    pitch_mean: float
    pitch_std: float
    energy_mean: float
    energy_std: float


def _read_track(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        values = [float(line) for line in fh if line.strip()]
    return np.asarray(values, dtype=np.float64)


def merge_alignment_for_tokens(
    alignment: Alignment,
    replaced: Sequence[str],
    registry: FillerRegistry,
) -> list[tuple[str, int, int]]:
    """Map the replaced sequence onto raw spans: (label, start_frame, frames).

    Special tokens swallow the spans of their filler phonemes.
    """
    spans: list[tuple[str, int, int]] = []
    raw_index = 0
    frame_cursor = 0
    for label in replaced:
        if is_special_token(label):
            entry = registry.lookup_token(label)
            if entry is None:
                raise ManifestError(f"token {label!r} missing from registry")
            width = len(entry.phonemes)
        else:
            width = 1
        frames = int(sum(alignment.frame_counts[raw_index : raw_index + width]))
        spans.append((label, frame_cursor, frames))
        raw_index += width
        frame_cursor += frames
    if raw_index != len(alignment.labels):
        raise ManifestError(
            "replaced sequence does not cover the alignment "
            f"({raw_index} of {len(alignment.labels)} raw phonemes consumed)"
        )
    return spans


def compute_feature_stats(
    pitch_tracks: Sequence[np.ndarray], energy_tracks: Sequence[np.ndarray]
) -> FeatureStats:
    """Corpus-global normalization stats; pitch over voiced frames only."""
    pitch_all = np.concatenate(pitch_tracks) if pitch_tracks else np.zeros(0)
    voiced = pitch_all[pitch_all > 0]
    energy_all = np.concatenate(energy_tracks) if energy_tracks else np.zeros(0)
    return FeatureStats(
        pitch_mean=float(voiced.mean()) if voiced.size else 0.0,
        pitch_std=float(voiced.std()) if voiced.size and voiced.std() > 1e-8 else 1.0,
        energy_mean=float(energy_all.mean()) if energy_all.size else 0.0,
        energy_std=(
            float(energy_all.std())
            if energy_all.size and energy_all.std() > 1e-8
            else 1.0
        ),
    )


def load_training_corpus(
    corpus_dir: str,
    symbol_table: SymbolTable,
    registry: FillerRegistry | None = None,
    manifest_name: str = "manifest.tsv",
    use_special_tokens: bool = True,
    records: Sequence[UtteranceRecord] | None = None,
) -> tuple[list[AlignedUtterance], FeatureStats]:
    """Load every utterance of a corpus directory into training units."""
    registry = registry or FillerRegistry.empty()
    if records is None:
        records = load_manifest(os.path.join(corpus_dir, manifest_name))

    raw: list[dict] = []
    for record in records:
        u = record.utterance_id
        alignment = load_alignment(os.path.join(corpus_dir, "alignments", f"{u}.lab"))
        if alignment.labels != record.phonemes:
            raise ManifestError(
                f"{u}: alignment labels do not match the manifest phonemes"
            )
        mel = read_mel(os.path.join(corpus_dir, "mels", f"{u}.mel"))
        if alignment.total_frames != mel.shape[0]:
            raise ManifestError(
                f"{u}: alignment covers {alignment.total_frames} frames but the "
                f"mel has {mel.shape[0]}"
            )
        pitch = _read_track(os.path.join(corpus_dir, "pitch", f"{u}.txt"))
        energy = _read_track(os.path.join(corpus_dir, "energy", f"{u}.txt"))
        if pitch.size != mel.shape[0] or energy.size != mel.shape[0]:
            raise ManifestError(f"{u}: pitch/energy track length != mel frames")

        if use_special_tokens:
            replaced = replace_fillers(record.phonemes, record.speaker_id, registry)
        else:
            replaced = list(record.phonemes)
        spans = merge_alignment_for_tokens(alignment, replaced, registry)
        raw.append(
            {
                "record": record,
                "labels": replaced,
                "spans": spans,
                "mel": mel,
                "pitch": pitch,
                "energy": energy,
            }
        )

    stats = compute_feature_stats(
        [r["pitch"] for r in raw], [r["energy"] for r in raw]
    )

    utterances = []
    for item in raw:
        record: UtteranceRecord = item["record"]
        pitch_track, energy_track = item["pitch"], item["energy"]
        durations, phoneme_pitch, phoneme_energy = [], [], []
        for _, start, frames in item["spans"]:
            durations.append(frames)
            span_pitch = pitch_track[start : start + frames]
            voiced = span_pitch[span_pitch > 0]
            if voiced.size:
                mean_pitch = (voiced.mean() - stats.pitch_mean) / stats.pitch_std
            else:
                mean_pitch = 0.0
            phoneme_pitch.append(mean_pitch)
            span_energy = energy_track[start : start + frames]
            if span_energy.size:
                mean_energy = (span_energy.mean() - stats.energy_mean) / stats.energy_std
            else:
                mean_energy = 0.0
            phoneme_energy.append(mean_energy)
        utterances.append(
            AlignedUtterance(
                utterance_id=record.utterance_id,
                speaker_id=record.speaker_id,
                phonemes=tuple(item["labels"]),
                phoneme_ids=np.asarray(
                    symbol_table.encode(item["labels"]), dtype=np.int64
                ),
                durations=np.asarray(durations, dtype=np.int64),
                pitch=np.asarray(phoneme_pitch, dtype=np.float64),
                energy=np.asarray(phoneme_energy, dtype=np.float64),
                mel=item["mel"],
            )
        )
    return utterances, stats


def collate(
    utterances: Sequence[AlignedUtterance],
    dtype: torch.dtype = torch.float32,
    speaker_index: dict[str, int] | None = None,
):
    """Pad a list of utterances into an AcousticBatch (training layout)."""
    from ..model.acoustic import AcousticBatch

    b = len(utterances)
    t = max(u.phoneme_ids.size for u in utterances)
    f = max(u.mel.shape[0] for u in utterances)
    mel_bins = utterances[0].mel.shape[1]

    ids = torch.zeros((b, t), dtype=torch.long)
    lengths = torch.zeros(b, dtype=torch.long)
    durations = torch.zeros((b, t), dtype=torch.long)
    pitch = torch.zeros((b, t), dtype=dtype)
    energy = torch.zeros((b, t), dtype=dtype)
    mels = torch.zeros((b, f, mel_bins), dtype=dtype)
    frame_lengths = torch.zeros(b, dtype=torch.long)
    references = []
    speakers = torch.zeros(b, dtype=torch.long) if speaker_index else None

    for i, u in enumerate(utterances):
        n = u.phoneme_ids.size
        ids[i, :n] = torch.from_numpy(u.phoneme_ids)
        lengths[i] = n
        durations[i, :n] = torch.from_numpy(u.durations)
        pitch[i, :n] = torch.from_numpy(u.pitch).to(dtype)
        energy[i, :n] = torch.from_numpy(u.energy).to(dtype)
        frames = u.mel.shape[0]
        mels[i, :frames] = torch.from_numpy(u.mel.astype(np.float32)).to(dtype)
        frame_lengths[i] = frames
        references.append(torch.from_numpy(u.mel.astype(np.float32)).to(dtype))
        if speakers is not None:
            speakers[i] = speaker_index[u.speaker_id]

    return AcousticBatch(
        phoneme_ids=ids,
        phoneme_lengths=lengths,
        reference_mels=references,
        speaker_ids=speakers,
        durations=durations,
        pitch=pitch,
        energy=energy,
        mel_targets=mels,
        frame_lengths=frame_lengths,
    )


def check_split_disjoint(*manifests: Sequence[UtteranceRecord]) -> None:
    """Reject splits that share utterance ids."""
    seen: dict[str, int] = {}
    for split_index, records in enumerate(manifests):
        for record in records:
            if record.utterance_id in seen:
                raise ManifestError(
                    f"utterance {record.utterance_id!r} appears in split "
                    f"{seen[record.utterance_id]} and split {split_index}"
                )
            seen[record.utterance_id] = split_index
