"""Multichannel short-time Fourier analysis and WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from dsvdphat.errors import ConfigError, SignalTooShortError

WINDOWS = ("sine", "hann", "rect")


@dataclass(frozen=True)
class MultichannelSignal:
    samples: np.ndarray  # (M, T), float64
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ConfigError(f"expected (channels, samples) array, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SpectraFrame:
    frame_index: int
    bins: np.ndarray  # (M, N/2+1) complex


def make_window(kind: str, frame_size: int) -> np.ndarray:
    n = np.arange(frame_size)
    if kind == "sine":
        # square root of the periodic Hann window
        return np.sin(np.pi * n / frame_size)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / frame_size)
    if kind == "rect":
        return np.ones(frame_size)
    raise ConfigError(f"unknown window {kind!r}; expected one of {WINDOWS}")


def n_frames(n_samples: int, frame_size: int, hop_size: int) -> int:
    if n_samples < frame_size:
        return 0
    return (n_samples - frame_size) // hop_size + 1


def _check(frame_size: int, hop_size: int):
    if frame_size < 2 or frame_size & (frame_size - 1):
        raise ConfigError(f"frame size must be a power of two, got {frame_size}")
    if not 0 < hop_size <= frame_size:
        raise ConfigError(f"hop size must be in (0, {frame_size}], got {hop_size}")


def stft_array(samples: np.ndarray, frame_size: int, hop_size: int, window="sine") -> np.ndarray:
    """Return the one-sided STFT as an (L, M, N/2+1) complex array."""
    _check(frame_size, hop_size)
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    L = n_frames(samples.shape[1], frame_size, hop_size)
    if L == 0:
        raise SignalTooShortError(
            f"signal of {samples.shape[1]} samples is shorter than one frame ({frame_size})"
        )
    win = make_window(window, frame_size) if isinstance(window, str) else np.asarray(window)
    idx = hop_size * np.arange(L)[:, None] + np.arange(frame_size)[None, :]
    frames = samples[:, idx] * win  # (M, L, N)
    return np.fft.rfft(frames, axis=-1).transpose(1, 0, 2)


def analyze(signal: MultichannelSignal, frame_size: int, hop_size: int, window="sine") -> list[SpectraFrame]:
    """Split ``signal`` into windowed frames and transform each channel.

    Frame ``l`` covers samples ``[l*hop_size, l*hop_size + frame_size)``; only
    bins ``0..frame_size/2`` are kept.
    """
    spec = stft_array(signal.samples, frame_size, hop_size, window)
    return [SpectraFrame(l, spec[l]) for l in range(spec.shape[0])]


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # 24-bit PCM is left-justified into int32 by scipy
        return data.astype(np.float64) / 2147483648.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise ConfigError(f"unsupported WAV sample type {data.dtype}")


def read_wav(path, n_channels: int | None = None) -> MultichannelSignal:
    """Read a WAV file into [-1, 1] floats, optionally checking the channel count."""
    rate, data = wavfile.read(str(path))
    samples = _to_float(data)
    samples = samples[None, :] if samples.ndim == 1 else samples.T
    if n_channels is not None and samples.shape[0] != n_channels:
        raise ConfigError(f"{path}: expected {n_channels} channels, found {samples.shape[0]}")
    return MultichannelSignal(samples, float(rate))


def write_wav(path, signal: MultichannelSignal):
    """Write ``signal`` as 32-bit float WAV (lossless for the simulation pipeline)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), int(round(signal.sample_rate)), signal.samples.T.astype(np.float32))
