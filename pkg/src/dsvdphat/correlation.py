"""Recursive per-bin spatial correlation, noise estimation and PHAT cross-spectra."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from dsvdphat.errors import ConfigError
from dsvdphat.stft import SpectraFrame

PHAT_FLOOR = 1e-12
SIDECAR_VERSION = 1


@dataclass(frozen=True)
class CorrelationSet:
    """One M x M correlation matrix per frequency bin, tracked with rate ``alpha``."""

    matrices: np.ndarray  # (N/2+1, M, M) complex
    alpha: float = 0.05
    frames_absorbed: int = 0

    @classmethod
    def zeros(cls, n_mics: int, n_bins: int, alpha: float = 0.05) -> "CorrelationSet":
        return cls(np.zeros((n_bins, n_mics, n_mics), dtype=np.complex128), alpha, 0)

    @property
    def n_bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_mics(self) -> int:
        return self.matrices.shape[1]

    @property
    def warm(self) -> bool:
        return self.frames_absorbed >= 1.0 / self.alpha

    def copy(self) -> "CorrelationSet":
        return replace(self, matrices=self.matrices.copy())


def _bins(frame) -> np.ndarray:
    return frame.bins if isinstance(frame, SpectraFrame) else np.asarray(frame)


def update(corr: CorrelationSet, frame) -> CorrelationSet:
    """One step of ``R <- (1 - alpha) R + alpha x x^H`` at every bin."""
    x = _bins(frame)
    if x.shape != (corr.n_mics, corr.n_bins):
        raise ConfigError(
            f"frame of shape {x.shape} does not match correlation set "
            f"({corr.n_mics} mics, {corr.n_bins} bins)"
        )
    outer = x.T[:, :, None] * x.T.conj()[:, None, :]
    a = corr.alpha
    return CorrelationSet((1 - a) * corr.matrices + a * outer, a, corr.frames_absorbed + 1)


def update_inplace(corr_matrices: np.ndarray, x: np.ndarray, alpha: float):
    """Allocation-light variant of :func:`update` for streaming loops."""
    corr_matrices *= 1 - alpha
    corr_matrices += alpha * (x.T[:, :, None] * x.T.conj()[:, None, :])


def estimate_noise(frames, alpha: float = 0.05) -> CorrelationSet:
    """Run the recursion over noise-only frames starting from zero."""
    frames = list(frames)
    if not frames:
        raise ConfigError("noise estimation needs at least one frame")
    first = _bins(frames[0])
    if len(frames) < math.ceil(5 / alpha):
        warnings.warn(
            f"only {len(frames)} noise frames; the recursion needs ~{math.ceil(5 / alpha)} to settle",
            stacklevel=2,
        )
    mats = np.zeros((first.shape[1], first.shape[0], first.shape[0]), dtype=np.complex128)
    for f in frames:
        update_inplace(mats, _bins(f), alpha)
    return CorrelationSet(mats, alpha, len(frames))


def difference(rxx: CorrelationSet, rnn: CorrelationSet) -> CorrelationSet:
    """Speech correlation estimate ``R_xx - R_nn``; may be indefinite."""
    if rxx.matrices.shape != rnn.matrices.shape:
        raise ConfigError(f"shape mismatch {rxx.matrices.shape} vs {rnn.matrices.shape}")
    return CorrelationSet(rxx.matrices - rnn.matrices, rxx.alpha, rxx.frames_absorbed)


def phat_vector(rss, pairs, floor: float = PHAT_FLOOR) -> np.ndarray:
    """Unit-magnitude cross-spectra, pair-major then bin.

    Entries whose magnitude is at or below ``floor`` become exactly zero.
    """
    mats = rss.matrices if isinstance(rss, CorrelationSet) else np.asarray(rss)
    ii = [i for i, _ in pairs]
    jj = [j for _, j in pairs]
    return normalize_phat(mats[:, ii, jj].T, floor).reshape(-1)


def normalize_phat(cross: np.ndarray, floor: float = PHAT_FLOOR) -> np.ndarray:
    mag = np.abs(cross)
    out = np.zeros_like(cross)
    ok = mag > floor
    out[ok] = cross[ok] / mag[ok]
    return out


# --- sidecar files ---------------------------------------------------------

def save_correlation(path, corr: CorrelationSet):
    """Write ``corr`` to ``.npy``-backed binary (``.npz``) or JSON, by extension."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".json":
        doc = {
            "version": SIDECAR_VERSION,
            "alpha": corr.alpha,
            "frames_absorbed": corr.frames_absorbed,
            "shape": list(corr.matrices.shape),
            "real": corr.matrices.real.ravel().tolist(),
            "imag": corr.matrices.imag.ravel().tolist(),
        }
        path.write_text(json.dumps(doc))
    else:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                version=SIDECAR_VERSION,
                matrices=corr.matrices,
                alpha=corr.alpha,
                frames_absorbed=corr.frames_absorbed,
            )


def load_correlation(path) -> CorrelationSet:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("version") != SIDECAR_VERSION:
            raise ConfigError(f"{path}: unsupported sidecar version {doc.get('version')}")
        shape = tuple(doc["shape"])
        mats = (np.array(doc["real"]) + 1j * np.array(doc["imag"])).reshape(shape)
        return CorrelationSet(mats, float(doc["alpha"]), int(doc["frames_absorbed"]))
    with np.load(path) as data:
        if int(data["version"]) != SIDECAR_VERSION:
            raise ConfigError(f"{path}: unsupported sidecar version {int(data['version'])}")
        return CorrelationSet(
            data["matrices"].astype(np.complex128), float(data["alpha"]), int(data["frames_absorbed"])
        )
