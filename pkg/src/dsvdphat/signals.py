"""Synthetic stand-ins for speech utterances and recorded robot fan noise,
plus a loader for WAV corpora."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from scipy import signal as sps

from dsvdphat.errors import ConfigError
from dsvdphat.geometry import MicArrayGeometry, origin_tdoas
from dsvdphat.stft import read_wav

CORPUS_ENV = "DSVDPHAT_CORPUS"

# fan sources in the array frame: broadband fan behind/below the head and a
# narrowband motor/fan hum band (2.5-5 kHz) off to the side
FAN_DIRECTIONS = (
    (0.35, -0.55, -0.76),
    (-0.80, -0.30, 0.52),
)
HUM_FREQS = (2750.0, 3300.0, 3900.0, 4600.0)


def _bandpass(x, lo, hi, fs, order=4):
    sos = sps.butter(order, [lo, hi], btype="band", fs=fs, output="sos")
    return sps.sosfilt(sos, x)


def speech_like(duration: float, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Amplitude-modulated harmonic/noise syllables separated by short pauses.

    Voiced segments are glottal-like pulse trains (f0 90-260 Hz with drift)
    shaped by two random formant resonances; unvoiced segments are high-passed
    noise bursts. Peak is normalized to 0.5.
    """
    n = int(round(duration * fs))
    out = np.zeros(n)
    t = 0
    while t < n:
        kind = rng.choice(["voiced", "voiced", "unvoiced", "pause"])
        seg = int(fs * (rng.uniform(0.06, 0.12) if kind == "pause" else rng.uniform(0.08, 0.28)))
        seg = min(seg, n - t)
        if seg <= 8 or kind == "pause":
            t += max(seg, 1)
            continue
        tt = np.arange(seg) / fs
        if kind == "voiced":
            f0 = rng.uniform(90, 260) * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(1, 4) * tt))
            phase = 2 * np.pi * np.cumsum(f0) / fs
            src = sps.sawtooth(phase) + 0.05 * rng.standard_normal(seg)
            y = np.zeros(seg)
            for lo in (rng.uniform(300, 800), rng.uniform(1000, 2500)):
                y += _bandpass(src, lo, min(lo * rng.uniform(1.3, 1.8), 0.45 * fs), fs, 2)
            y += 0.3 * _bandpass(src, 2500, 0.45 * fs, fs, 2)
        else:
            y = _bandpass(rng.standard_normal(seg), 2000, 0.45 * fs, fs, 4)
        env = np.sin(np.pi * np.arange(seg) / seg) ** 0.7
        out[t:t + seg] = y * env * rng.uniform(0.5, 1.0)
        t += seg
    peak = np.max(np.abs(out))
    return 0.5 * out / peak if peak > 0 else out


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=np.float64)
    f[0] = 1.0
    x = np.fft.irfft(spec / np.sqrt(f), n)
    return x / np.std(x)


def _far_field(x: np.ndarray, delays: np.ndarray) -> np.ndarray:
    """Circularly advance ``x`` by fractional ``delays`` (samples), one row per mic."""
    n = len(x)
    spec = np.fft.rfft(x)
    k = np.arange(len(spec))
    return np.fft.irfft(spec[None, :] * np.exp(2j * np.pi * k[None, :] * delays[:, None] / n), n, axis=1)


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    r = np.sqrt(1 - z**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def diffuse_noise(n: int, geom: MicArrayGeometry, rng: np.random.Generator, n_waves: int = 32) -> np.ndarray:
    """Unit-power pink diffuse field: independent plane waves from a uniform set of directions."""
    tau = origin_tdoas(geom, fibonacci_sphere(n_waves))
    out = np.zeros((geom.n_mics, n))
    for t in tau:
        out += _far_field(pink_noise(n, rng), t)
    return out / np.sqrt(np.mean(out**2))


def fan_noise(duration: float, geom: MicArrayGeometry, rng: np.random.Generator,
              rms: float = 0.01, sensor_floor_db: float = -25.0, diffuse_db: float = -np.inf) -> np.ndarray:
    """Stationary robot fan noise at the array, shape (M, T).

    Two far-field components (broadband pink and a 2.5-5 kHz hum band), their
    reverberant remainder as a diffuse field ``diffuse_db`` below them, and
    independent sensor noise ``sensor_floor_db`` below the directional part.
    ``diffuse_db = -inf`` drops the diffuse field.
    """
    fs = geom.sample_rate
    n = int(round(duration * fs))
    dirs = np.array(FAN_DIRECTIONS)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    tau = origin_tdoas(geom, dirs)  # (2, M)
    broadband = pink_noise(n, rng)
    tt = np.arange(n) / fs
    hum = _bandpass(rng.standard_normal(n), 2500, 5000, fs, 4)
    hum *= 1.5 / np.std(hum)
    for f in HUM_FREQS:
        hum += np.sin(2 * np.pi * f * tt + rng.uniform(0, 2 * np.pi)) * rng.uniform(0.3, 0.6)
    hum /= np.std(hum)
    coherent = _far_field(broadband, tau[0]) + _far_field(hum, tau[1])
    coherent /= np.sqrt(np.mean(coherent**2))
    if np.isfinite(diffuse_db):
        coherent += 10 ** (diffuse_db / 20) * diffuse_noise(n, geom, rng)
    floor = 10 ** (sensor_floor_db / 20) * rng.standard_normal(coherent.shape)
    return rms * (coherent + floor)


def corpus_files(directory=None) -> list[Path]:
    directory = directory or os.environ.get(CORPUS_ENV)
    if not directory:
        return []
    return sorted(Path(directory).rglob("*.wav"))


def load_utterance(path, fs: float) -> np.ndarray:
    """First channel of a WAV file, resampled to ``fs`` and peak-normalized to 0.5."""
    sig = read_wav(path)
    x = sig.samples[0]
    if sig.sample_rate != fs:
        from fractions import Fraction

        r = Fraction(int(fs), int(sig.sample_rate)).limit_denominator(1000)
        x = sps.resample_poly(x, r.numerator, r.denominator)
    peak = np.max(np.abs(x))
    if peak == 0:
        raise ConfigError(f"{path}: silent utterance")
    return 0.5 * x / peak


def source_signal(index: int, duration: float, fs: float, seed: int, corpus=None) -> np.ndarray:
    """Utterance ``index`` of the corpus if one is configured, else synthetic speech."""
    files = corpus_files(corpus)
    if files:
        return load_utterance(files[index % len(files)], fs)
    return speech_like(duration, fs, np.random.default_rng([seed, index]))
