"""Self-describing binary mel files plus a text export for diffing.

Layout: magic ``MEL1`` (4 bytes), frame count (uint32 LE), mel-bin count
(uint32 LE), then frames * bins float32 LE values in row-major order.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import InputError

MAGIC = b"MEL1"
_HEADER = struct.Struct("<4sII")


def write_mel(path, mel: np.ndarray) -> None:
    mel = np.asarray(mel, dtype=np.float32)
    if mel.ndim != 2:
        raise InputError(f"mel must be 2-D (frames, bins), got shape {mel.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, mel.shape[0], mel.shape[1]))
        fh.write(mel.astype("<f4").tobytes(order="C"))


def read_mel(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise InputError(f"{path}: truncated mel header")
        magic, frames, bins = _HEADER.unpack(header)
        if magic != MAGIC:
            raise InputError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        payload = fh.read(4 * frames * bins)
        if len(payload) != 4 * frames * bins:
            raise InputError(f"{path}: truncated mel payload")
    return np.frombuffer(payload, dtype="<f4").reshape(frames, bins).copy()


def export_mel_text(path, mel: np.ndarray) -> None:
    """One frame per line, space-separated %.6f values; handy for diffing."""
    mel = np.asarray(mel)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# frames={mel.shape[0]} bins={mel.shape[1]}\n")
        for row in mel:
            fh.write(" ".join(f"{v:.6f}" for v in row) + "\n")
