"""Synthetic fixture corpus: small, deterministic, structurally realistic.

Generates manifests, alignments, per-frame pitch/energy tracks, and
procedural mel targets for a handful of speakers, including per-speaker
personal fillers so the special-token path is exercised end to end. Every
artifact is a pure function of the seed.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .audio import AudioConfig
from .corpus import Alignment, UtteranceRecord, save_alignment, save_manifest
from .frontend import (
    FillerEntry,
    FillerRegistry,
    PAUSE_SYMBOL,
    SymbolTable,
    build_symbol_table,
    mandarin_inventory,
)
from .melio import write_mel

# random-draw pool; per-speaker fillers are appended deliberately
ALPHABET = [
    "d", "e5", "i3", "zh", "ao4", "uo3", "k", "ai1", "sh", "x",
    "iou3", "h", "ou4", "t", "i4", "m", "a1", "ng", "j", "ve2",
]

FILLER_B = ("n", "i3", "zh", "ii1", "d", "ao4", "b", "a5")
FILLER_A = ("er2",)

HANZI_POOL = "我你他的一是了说都很好想看来去到场上就万事笑"


def fixture_registry() -> FillerRegistry:
    return FillerRegistry(
        [
            FillerEntry("A", "<spc2>", FILLER_A),
            FillerEntry("B", "<spc1>", FILLER_B),
        ]
    )


def fixture_symbol_table(registry: FillerRegistry | None = None) -> SymbolTable:
    return build_symbol_table(
        mandarin_inventory(), registry if registry is not None else fixture_registry()
    )


def _label_rng(label: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _phoneme_prototype(label: str, mel_bins: int, seed: int) -> np.ndarray:
    """A smooth, label-characteristic log-mel envelope in roughly [-6, -0.5]."""
    rng = _label_rng(label, seed)
    if label == PAUSE_SYMBOL:
        return np.full(mel_bins, -7.5) + 0.1 * rng.standard_normal(mel_bins)
    bins = np.arange(mel_bins)
    envelope = np.full(mel_bins, -6.0)
    for _ in range(3):
        center = rng.uniform(0, mel_bins)
        width = rng.uniform(3.0, 12.0)
        height = rng.uniform(2.5, 5.5)
        envelope += height * np.exp(-0.5 * ((bins - center) / width) ** 2)
    return np.clip(envelope, -8.0, -0.3)


SPEAKER_TRAITS = {
    # frames per phoneme base, pause frames, pitch base (Hz)
    "A": {"rate": 4.5, "pause": 10, "pitch": 130.0},
    "B": {"rate": 5.5, "pause": 9, "pitch": 225.0},
    "C": {"rate": 8.0, "pause": 28, "pitch": 115.0},
    "D": {"rate": 6.5, "pause": 7, "pitch": 205.0},
}
DEFAULT_TRAIT = {"rate": 6.0, "pause": 12, "pitch": 170.0}


def _is_voiced(label: str) -> bool:
    return label != PAUSE_SYMBOL and label[-1].isdigit()


def generate_utterance(
    speaker_id: str,
    index: int,
    seed: int,
    mel_bins: int,
    min_frames: int,
    phonemes_range: tuple[int, int],
) -> dict:
    """Phonemes, alignment, mel, pitch, energy for one synthetic utterance."""
    rng = np.random.default_rng(
        int.from_bytes(
            hashlib.sha256(f"{seed}:{speaker_id}:{index}".encode()).digest()[:8],
            "little",
        )
    )
    trait = SPEAKER_TRAITS.get(speaker_id, DEFAULT_TRAIT)

    n_phonemes = int(rng.integers(phonemes_range[0], phonemes_range[1] + 1))
    labels: list[str] = []
    for i in range(n_phonemes):
        labels.append(ALPHABET[int(rng.integers(len(ALPHABET)))])
        if i > 0 and i % 5 == 4:
            labels.append(PAUSE_SYMBOL)
    if index % 2 == 1:
        if speaker_id == "B":
            labels.extend(FILLER_B)
        elif speaker_id == "A":
            labels.extend(FILLER_A)

    durations = []
    for label in labels:
        if label == PAUSE_SYMBOL:
            frames = trait["pause"] + int(rng.integers(-2, 5))
        else:
            frames = max(2, int(round(trait["rate"] + rng.normal(0, 1.2))))
        durations.append(frames)
    while sum(durations) < min_frames:
        durations = [d + 1 for d in durations]

    total = int(sum(durations))
    mel = np.zeros((total, mel_bins), dtype=np.float64)
    pitch = np.zeros(total, dtype=np.float64)
    cursor = 0
    for label, frames in zip(labels, durations):
        proto = _phoneme_prototype(label, mel_bins, seed)
        t = np.linspace(0, np.pi, frames)[:, None]
        block = proto[None, :] + 0.3 * np.sin(t + np.arange(mel_bins)[None, :] / 9.0)
        block += 0.05 * rng.standard_normal((frames, mel_bins))
        mel[cursor : cursor + frames] = block
        if _is_voiced(label):
            contour = trait["pitch"] * (1.0 + 0.08 * np.sin(t[:, 0] * 2.0))
            contour += rng.normal(0, 2.0, frames)
            pitch[cursor : cursor + frames] = contour
        cursor += frames

    energy = np.exp(mel).mean(axis=1)
    return {
        "labels": labels,
        "alignment": Alignment(tuple(labels), tuple(int(d) for d in durations)),
        "mel": mel.astype(np.float32),
        "pitch": pitch,
        "energy": energy,
    }


def build_fixture_corpus(
    root: str,
    speakers: tuple[str, ...] = ("A", "B"),
    clips_per_speaker: int = 3,
    seed: int = 0,
    mel_bins: int = 80,
    min_frames: int = 72,
    phonemes_range: tuple[int, int] = (10, 16),
    audio_config: AudioConfig | None = None,
) -> dict:
    """Write a complete corpus directory; returns paths and loaded records."""
    audio = audio_config or AudioConfig(n_mels=mel_bins)
    registry = fixture_registry()
    os.makedirs(root, exist_ok=True)
    for sub in ("alignments", "mels", "pitch", "energy"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)

    records = []
    for speaker in speakers:
        for index in range(clips_per_speaker):
            utt_id = f"{speaker.lower()}{index:03d}"
            data = generate_utterance(
                speaker, index, seed, mel_bins, min_frames, phonemes_range
            )
            total_frames = data["alignment"].total_frames
            duration_s = total_frames * audio.frame_hop_s
            syllables = sum(1 for lb in data["labels"] if _is_voiced(lb))
            rng = _label_rng(utt_id, seed)
            transcript = "".join(
                HANZI_POOL[int(rng.integers(len(HANZI_POOL)))]
                for _ in range(max(syllables, 1))
            )
            records.append(
                UtteranceRecord(
                    utterance_id=utt_id,
                    speaker_id=speaker,
                    audio_path=f"audio/{utt_id}.wav",
                    duration_s=duration_s,
                    transcript=transcript,
                    phonemes=tuple(data["labels"]),
                )
            )
            save_alignment(
                data["alignment"], os.path.join(root, "alignments", f"{utt_id}.lab")
            )
            write_mel(os.path.join(root, "mels", f"{utt_id}.mel"), data["mel"])
            for track_name in ("pitch", "energy"):
                with open(
                    os.path.join(root, track_name, f"{utt_id}.txt"),
                    "w",
                    encoding="utf-8",
                ) as fh:
                    for value in data[track_name]:
                        fh.write(f"{value:.6f}\n")

    manifest_path = os.path.join(root, "manifest.tsv")
    save_manifest(records, manifest_path)
    registry_path = os.path.join(root, "registry.tsv")
    registry.save(registry_path)
    return {
        "root": root,
        "manifest": manifest_path,
        "registry": registry_path,
        "records": records,
        "registry_obj": registry,
        "audio_config": audio,
    }
