"""Corpus pipeline: manifests, clip validation, per-speaker statistics.

File formats
------------
Manifest: one utterance per line, tab-separated:

    utt_id <TAB> speaker_id <TAB> audio_path <TAB> duration_s <TAB> transcript <TAB> phonemes

with the phoneme labels space-separated inside the last field. ``#`` starts a
comment line.

Alignment (one file per utterance): ``phoneme_label<SPACE>frame_count`` per
line; the labels must mirror the manifest's phoneme sequence.

The statistics report mirrors the dataset summary columns: clips, total
duration, words, words per second, average pause duration, average (corpus
z-normalized) energy and pitch.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ManifestError
from .frontend import PAUSE_SYMBOL

MANIFEST_FIELDS = 6

CLIP_LENGTH_RANGE_S = (3.0, 8.0)


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    audio_path: str
    duration_s: float
    transcript: str
    phonemes: tuple[str, ...]


@dataclass(frozen=True)
class Alignment:
    """Per-phoneme frame counts for one utterance."""

    labels: tuple[str, ...]
    frame_counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.frame_counts):
            raise ManifestError("alignment labels and frame counts differ in length")
        if any(c < 0 for c in self.frame_counts):
            raise ManifestError("alignment frame counts must be non-negative")

    @property
    def total_frames(self) -> int:
        return int(sum(self.frame_counts))


@dataclass
class SpeakerStatistics:
    clips: int
    total_duration_s: float
    words: int
    words_per_second: float
    avg_pause_ms: float
    avg_energy: float
    avg_pitch: float
    has_pauses: bool = True

    def to_dict(self) -> dict:
        return {
            "clips": self.clips,
            "total_duration_s": round(self.total_duration_s, 3),
            "words": self.words,
            "words_per_second": round(self.words_per_second, 4),
            "avg_pause_ms": round(self.avg_pause_ms, 2),
            "avg_energy": round(self.avg_energy, 4),
            "avg_pitch": round(self.avg_pitch, 4),
            "has_pauses": self.has_pauses,
        }


def load_manifest(path) -> list[UtteranceRecord]:
    """Parse and validate a manifest file, preserving record order."""
    records: list[UtteranceRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != MANIFEST_FIELDS:
                raise ManifestError(
                    f"{path}:{lineno}: expected {MANIFEST_FIELDS} tab-separated "
                    f"fields, got {len(parts)}"
                )
            utt_id, speaker_id, audio_path, duration_text, transcript, phoneme_text = parts
            try:
                duration_s = float(duration_text)
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: duration {duration_text!r} is not a number"
                ) from None
            if duration_s <= 0:
                raise ManifestError(f"{path}:{lineno}: duration must be positive")
            phonemes = tuple(phoneme_text.split())
            if not phonemes:
                raise ManifestError(f"{path}:{lineno}: empty phoneme sequence")
            if utt_id in seen_ids:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate utterance id {utt_id!r}"
                )
            seen_ids.add(utt_id)
            records.append(
                UtteranceRecord(
                    utt_id, speaker_id, audio_path, duration_s, transcript, phonemes
                )
            )
    return records


def save_manifest(records: Sequence[UtteranceRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                f"{r.utterance_id}\t{r.speaker_id}\t{r.audio_path}\t"
                f"{r.duration_s:.3f}\t{r.transcript}\t{' '.join(r.phonemes)}\n"
            )


def load_alignment(path) -> Alignment:
    labels: list[str] = []
    counts: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ManifestError(
                    f"{path}:{lineno}: expected 'label frames', got {line!r}"
                )
            label, count_text = parts
            try:
                count = int(count_text)
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: frame count {count_text!r} is not an integer"
                ) from None
            labels.append(label)
            counts.append(count)
    return Alignment(tuple(labels), tuple(counts))


def save_alignment(alignment: Alignment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, count in zip(alignment.labels, alignment.frame_counts):
            fh.write(f"{label} {count}\n")


def validate_clip_lengths(
    records: Sequence[UtteranceRecord],
    length_range_s: tuple[float, float] = CLIP_LENGTH_RANGE_S,
) -> list[str]:
    """One warning per clip outside the expected segment length; never fatal.

    The corpus convention slices recordings into roughly 3 to 8 second clips,
    so out-of-range durations usually mean a segmentation slip worth a look.
    """
    lo, hi = length_range_s
    warnings = []
    for record in records:
        if not lo <= record.duration_s <= hi:
            warnings.append(
                f"{record.utterance_id}: duration {record.duration_s:.2f}s outside "
                f"[{lo:.1f}, {hi:.1f}]s"
            )
    return warnings


def count_words(transcript: str) -> int:
    """Word count used for the words-per-second column.

    Mandarin transcripts have no spaces, so every CJK character counts as one
    word; contiguous runs of Latin letters or digits count as one word each;
    punctuation and whitespace are ignored.
    """
    words = 0
    in_latin_run = False
    for ch in transcript:
        if unicodedata.category(ch).startswith(("P", "Z", "C")):
            in_latin_run = False
            continue
        code = ord(ch)
        is_cjk = (
            0x3400 <= code <= 0x9FFF
            or 0xF900 <= code <= 0xFAFF
            or 0x20000 <= code <= 0x2FA1F
        )
        if is_cjk:
            words += 1
            in_latin_run = False
        else:
            if not in_latin_run:
                words += 1
            in_latin_run = True
    return words


@dataclass
class StatisticsConfig:
    """Knobs for the per-speaker statistics reduction.

    ``frame_hop_s`` converts aligned frame counts to seconds. A pause is an
    aligned ``sp`` segment at least ``pause_min_ms`` long. Pitch averages are
    taken over voiced frames by default (energy over all frames); both can be
    switched to the other mode since the corpus summary convention does not
    pin this down.
    """

    frame_hop_s: float = 256.0 / 22050.0
    pause_min_ms: float = 50.0
    pitch_frames: str = "voiced"  # "voiced" | "all"
    energy_frames: str = "all"  # "all" | "voiced"
    normalize: bool = True
    pause_symbols: tuple[str, ...] = (PAUSE_SYMBOL,)


def _znormalize(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Z-normalize over the masked-in frames; degenerate spread maps to zeros."""
    selected = values[mask]
    if selected.size == 0:
        return np.zeros_like(values)
    mean = float(selected.mean())
    std = float(selected.std())
    if std < 1e-12:
        return np.where(mask, 0.0, values - mean)
    return (values - mean) / std


def compute_statistics(
    records: Sequence[UtteranceRecord],
    alignments: Mapping[str, Alignment],
    pitch_tracks: Mapping[str, np.ndarray],
    energy_tracks: Mapping[str, np.ndarray],
    config: StatisticsConfig | None = None,
) -> dict[str, SpeakerStatistics]:
    """Reduce a corpus to one statistics row per speaker.

    Pitch and energy tracks are per-frame arrays aligned with the utterance's
    mel frames; raw pitch uses 0 for unvoiced frames. With ``normalize`` set
    (the default) both tracks are z-normalized with corpus-global mean and
    variance before averaging, which is what makes negative speaker averages
    meaningful. The reduction is a fold over records, so record order never
    changes the result.
    """
    cfg = config or StatisticsConfig()
    for record in records:
        if record.utterance_id not in alignments:
            raise ManifestError(f"missing alignment for {record.utterance_id!r}")
        if record.utterance_id not in pitch_tracks:
            raise ManifestError(f"missing pitch track for {record.utterance_id!r}")
        if record.utterance_id not in energy_tracks:
            raise ManifestError(f"missing energy track for {record.utterance_id!r}")

    ids = [r.utterance_id for r in records]
    raw_pitch = {u: np.asarray(pitch_tracks[u], dtype=np.float64) for u in ids}
    raw_energy = {u: np.asarray(energy_tracks[u], dtype=np.float64) for u in ids}
    voiced = {u: raw_pitch[u] > 0 for u in ids}

    if cfg.normalize and ids:
        all_pitch = np.concatenate([raw_pitch[u] for u in ids])
        all_voiced = np.concatenate([voiced[u] for u in ids])
        all_energy = np.concatenate([raw_energy[u] for u in ids])
        norm_pitch_cat = _znormalize(all_pitch, all_voiced)
        norm_energy_cat = _znormalize(all_energy, np.ones_like(all_energy, dtype=bool))
        pitch, energy = {}, {}
        offset = 0
        for u in ids:
            n = raw_pitch[u].size
            pitch[u] = norm_pitch_cat[offset : offset + n]
            energy[u] = norm_energy_cat[offset : offset + n]
            offset += n
    else:
        pitch, energy = raw_pitch, raw_energy

    per_speaker: dict[str, dict] = {}
    for record in records:
        u = record.utterance_id
        acc = per_speaker.setdefault(
            record.speaker_id,
            {
                "clips": 0,
                "duration": 0.0,
                "words": 0,
                "pause_ms": [],
                "pitch_sum": 0.0,
                "pitch_n": 0,
                "energy_sum": 0.0,
                "energy_n": 0,
            },
        )
        acc["clips"] += 1
        acc["duration"] += record.duration_s
        acc["words"] += count_words(record.transcript)

        alignment = alignments[u]
        for label, frames in zip(alignment.labels, alignment.frame_counts):
            if label in cfg.pause_symbols:
                ms = frames * cfg.frame_hop_s * 1000.0
                if ms >= cfg.pause_min_ms:
                    acc["pause_ms"].append(ms)

        if cfg.pitch_frames == "voiced":
            pitch_mask = voiced[u]
        else:
            pitch_mask = np.ones_like(voiced[u], dtype=bool)
        acc["pitch_sum"] += float(pitch[u][pitch_mask].sum())
        acc["pitch_n"] += int(pitch_mask.sum())

        if cfg.energy_frames == "voiced":
            energy_mask = voiced[u]
        else:
            energy_mask = np.ones(energy[u].size, dtype=bool)
        acc["energy_sum"] += float(energy[u][energy_mask].sum())
        acc["energy_n"] += int(energy_mask.sum())

    stats: dict[str, SpeakerStatistics] = {}
    for speaker_id in sorted(per_speaker):
        acc = per_speaker[speaker_id]
        pauses = acc["pause_ms"]
        stats[speaker_id] = SpeakerStatistics(
            clips=acc["clips"],
            total_duration_s=acc["duration"],
            words=acc["words"],
            words_per_second=acc["words"] / acc["duration"],
            avg_pause_ms=float(np.mean(pauses)) if pauses else 0.0,
            avg_energy=acc["energy_sum"] / acc["energy_n"] if acc["energy_n"] else 0.0,
            avg_pitch=acc["pitch_sum"] / acc["pitch_n"] if acc["pitch_n"] else 0.0,
            has_pauses=bool(pauses),
        )
    return stats


def format_statistics_table(stats: Mapping[str, SpeakerStatistics]) -> str:
    header = (
        f"{'Speaker':<10}{'Clips':>7}{'Duration(s)':>13}{'Words':>8}"
        f"{'Words/s':>9}{'Pause(ms)':>11}{'Energy':>9}{'Pitch':>9}"
    )
    lines = [header, "-" * len(header)]
    for speaker_id, s in stats.items():
        pause = f"{s.avg_pause_ms:.1f}" if s.has_pauses else "n/a"
        lines.append(
            f"{speaker_id:<10}{s.clips:>7}{s.total_duration_s:>13.1f}{s.words:>8}"
            f"{s.words_per_second:>9.2f}{pause:>11}{s.avg_energy:>9.2f}"
            f"{s.avg_pitch:>9.2f}"
        )
    return "\n".join(lines)


def write_statistics_report(stats: Mapping[str, SpeakerStatistics], path) -> None:
    payload = {speaker: s.to_dict() for speaker, s in stats.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
