"""Minimal DSP: log-mel extraction and classical phase-reconstruction inversion.

The acoustic model's contract is the log-mel spectrogram; waveform output is a
desk-listening convenience built from a pseudo-inverse mel filterbank followed
by Griffin-Lim phase reconstruction. No neural vocoding here.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.io import wavfile

LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 22050
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0

    @property
    def frame_hop_s(self) -> float:
        return self.hop_length / self.sample_rate

    def to_dict(self) -> dict:
        return asdict(self)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: AudioConfig) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1)."""
    n_bins = config.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, config.sample_rate / 2.0, n_bins)
    mel_points = np.linspace(
        hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2
    )
    hz_points = mel_to_hz(mel_points)
    bank = np.zeros((config.n_mels, n_bins), dtype=np.float64)
    for i in range(config.n_mels):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (fft_freqs - left) / max(center - left, 1e-10)
        down = (right - fft_freqs) / max(right - center, 1e-10)
        bank[i] = np.maximum(0.0, np.minimum(up, down))
    return bank


def _frame(signal: np.ndarray, config: AudioConfig) -> np.ndarray:
    pad = config.n_fft // 2
    padded = np.pad(signal, (pad, pad), mode="reflect")
    n_frames = 1 + (len(padded) - config.n_fft) // config.hop_length
    idx = (
        np.arange(config.n_fft)[None, :]
        + config.hop_length * np.arange(n_frames)[:, None]
    )
    return padded[idx]


def stft_magnitude(signal: np.ndarray, config: AudioConfig) -> np.ndarray:
    """Magnitude spectrogram, shape (frames, n_fft // 2 + 1)."""
    frames = _frame(np.asarray(signal, dtype=np.float64), config)
    window = np.hanning(config.win_length)
    if config.win_length < config.n_fft:
        window = np.pad(window, (0, config.n_fft - config.win_length))
    return np.abs(np.fft.rfft(frames * window, n=config.n_fft, axis=1))


def mel_spectrogram(signal: np.ndarray, config: AudioConfig) -> np.ndarray:
    """Natural-log mel spectrogram, shape (frames, n_mels)."""
    magnitude = stft_magnitude(signal, config)
    mel = magnitude @ mel_filterbank(config).T
    return np.log(np.maximum(mel, LOG_FLOOR))


def mel_to_magnitude(log_mel: np.ndarray, config: AudioConfig) -> np.ndarray:
    """Approximate linear magnitudes via the filterbank pseudo-inverse."""
    bank = mel_filterbank(config)
    inverse = np.linalg.pinv(bank)  # (n_bins, n_mels)
    magnitude = np.exp(np.asarray(log_mel, dtype=np.float64)) @ inverse.T
    return np.maximum(magnitude, 0.0)


def griffin_lim(
    magnitude: np.ndarray, config: AudioConfig, n_iters: int = 32, seed: int = 0
) -> np.ndarray:
    """Iterative phase reconstruction from a magnitude spectrogram."""
    rng = np.random.default_rng(seed)
    angles = np.exp(2j * np.pi * rng.random(magnitude.shape))
    spec = magnitude.astype(np.complex128) * angles
    signal = _istft(spec, config)
    for _ in range(n_iters):
        rebuilt = _stft_complex(signal, config)
        rebuilt = rebuilt[: magnitude.shape[0]]
        if rebuilt.shape[0] < magnitude.shape[0]:
            pad = magnitude.shape[0] - rebuilt.shape[0]
            rebuilt = np.pad(rebuilt, ((0, pad), (0, 0)))
        phases = rebuilt / np.maximum(np.abs(rebuilt), 1e-10)
        signal = _istft(magnitude * phases, config)
    peak = np.max(np.abs(signal))
    if peak > 0:
        signal = signal / peak * 0.95
    return signal


def _stft_complex(signal: np.ndarray, config: AudioConfig) -> np.ndarray:
    frames = _frame(np.asarray(signal, dtype=np.float64), config)
    window = np.hanning(config.win_length)
    if config.win_length < config.n_fft:
        window = np.pad(window, (0, config.n_fft - config.win_length))
    return np.fft.rfft(frames * window, n=config.n_fft, axis=1)


def _istft(spec: np.ndarray, config: AudioConfig) -> np.ndarray:
    window = np.hanning(config.win_length)
    if config.win_length < config.n_fft:
        window = np.pad(window, (0, config.n_fft - config.win_length))
    n_frames = spec.shape[0]
    length = config.n_fft + config.hop_length * (n_frames - 1)
    signal = np.zeros(length)
    weight = np.zeros(length)
    frames = np.fft.irfft(spec, n=config.n_fft, axis=1)
    for t in range(n_frames):
        start = t * config.hop_length
        signal[start : start + config.n_fft] += frames[t] * window
        weight[start : start + config.n_fft] += window**2
    signal = signal / np.maximum(weight, 1e-10)
    pad = config.n_fft // 2
    return signal[pad : length - pad]


def mel_to_waveform(
    log_mel: np.ndarray, config: AudioConfig, n_iters: int = 32, seed: int = 0
) -> np.ndarray:
    return griffin_lim(mel_to_magnitude(log_mel, config), config, n_iters, seed)


def write_wav(path, signal: np.ndarray, config: AudioConfig) -> None:
    clipped = np.clip(signal, -1.0, 1.0)
    wavfile.write(path, config.sample_rate, (clipped * 32767).astype(np.int16))


def read_wav(path) -> tuple[int, np.ndarray]:
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    else:
        data = data.astype(np.float64)
    if data.ndim > 1:
        data = data.mean(axis=1)
    return rate, data
