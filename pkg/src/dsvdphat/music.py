"""GSVD-MUSIC baseline: per-bin SVD of ``(R_nn)^-1 R_xx`` and a broadband
noise-subspace pseudo-spectrum over the DOA grid."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from dsvdphat.correlation import CorrelationSet, update, update_inplace
from dsvdphat.dsvd import DoaEstimate
from dsvdphat.errors import ConfigError, GsvdError
from dsvdphat.geometry import DoaGrid, MicArrayGeometry, origin_tdoas

MUSIC_FLOOR = 1e-9
REGULARIZATION = 1e-6  # relative to the mean noise power Tr(R_nn)/M
MAX_CONDITION = 1e12
SUBSPACES = ("left", "right")


@dataclass(frozen=True)
class SteeringVectorBank:
    vectors: np.ndarray  # (Q, N/2+1, M) complex
    grid: DoaGrid | None = None

    @property
    def n_bins(self) -> int:
        return self.vectors.shape[1]

    @property
    def hermitian_by_bin(self) -> np.ndarray:
        """(N/2+1, Q, M) array of conjugated steering vectors, ready for ``A^H e``."""
        return np.ascontiguousarray(self.vectors.conj().transpose(1, 0, 2))


def build_steering_bank(geom: MicArrayGeometry, grid: DoaGrid, frame_size: int) -> SteeringVectorBank:
    """Per-mic steering vectors for every DOA and bin.

    The phase is ``+2j*pi*k*tau_qm/N``: a mic closer to the source receives the
    wavefront early, which advances its spectrum under the forward DFT used by
    :mod:`dsvdphat.stft`. This makes ``A_i conj(A_j)`` the conjugate of the
    SRP-PHAT coefficient, i.e. the expected cross-spectrum for that DOA.
    """
    tau = origin_tdoas(geom, grid.directions)  # (Q, M)
    k = np.arange(frame_size // 2 + 1)
    vectors = np.exp(2j * np.pi * k[None, :, None] * tau[:, None, :] / frame_size)
    vectors.setflags(write=False)
    return SteeringVectorBank(vectors, grid)


@dataclass(frozen=True)
class SubspaceDecomposition:
    """SVD factors of ``(R_nn + eps I)^-1 R_xx``; leading bin axis when stacked."""

    singular_values: np.ndarray  # (..., M) descending
    left: np.ndarray  # (..., M, M) columns e_1..e_M
    right: np.ndarray  # (..., M, M) columns f_1..f_M
    valid: np.ndarray | bool = True


def _regularized(rnn: np.ndarray, regularization: float | None) -> np.ndarray:
    M = rnn.shape[-1]
    if regularization is None:
        power = np.real(np.trace(rnn, axis1=-2, axis2=-1)) / M
        regularization = REGULARIZATION * power
    regularization = np.asarray(regularization, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return rnn + regularization[..., None, None] * np.eye(M)


def gsvd_per_bin(rxx: np.ndarray, rnn: np.ndarray, regularization: float | None = None) -> SubspaceDecomposition:
    """Decompose one bin. Raises :class:`GsvdError` if ``R_nn`` cannot be inverted."""
    rxx = np.asarray(rxx, dtype=np.complex128)
    rnn = np.asarray(rnn, dtype=np.complex128)
    if rxx.shape != rnn.shape or rxx.ndim != 2:
        raise ConfigError("rxx and rnn must be matching square matrices")
    reg = _regularized(rnn, regularization)
    if not np.all(np.isfinite(reg)) or np.linalg.cond(reg) > MAX_CONDITION:
        raise GsvdError("noise correlation matrix is singular beyond regularization")
    product = np.linalg.solve(reg, rxx)
    e, s, fh = np.linalg.svd(product)
    return SubspaceDecomposition(s, e, fh.conj().T, True)


def noise_inverse(rnn: np.ndarray, regularization: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Regularized per-bin inverses of ``R_nn`` and a mask of invertible bins."""
    reg = _regularized(np.asarray(rnn, dtype=np.complex128), regularization)
    finite = np.all(np.isfinite(reg), axis=(-2, -1))
    safe = np.where(finite[..., None, None], reg, np.eye(reg.shape[-1]))
    valid = finite & (np.linalg.cond(safe) <= MAX_CONDITION)
    inv = np.zeros_like(safe)
    inv[valid] = np.linalg.inv(safe[valid])
    return inv, valid


def gsvd_all_bins(rxx: np.ndarray, rnn_inv: np.ndarray, valid: np.ndarray) -> SubspaceDecomposition:
    """Batched decomposition given precomputed noise inverses."""
    product = rnn_inv @ rxx
    e, s, fh = np.linalg.svd(product)
    return SubspaceDecomposition(s, e, fh.conj().transpose(0, 2, 1), valid)


def music_spectrum(
    decomp: SubspaceDecomposition,
    bank: SteeringVectorBank,
    n_sources: int = 1,
    bins=None,
    floor: float = MUSIC_FLOOR,
    _steering_h: np.ndarray | None = None,
    subspace: str = "left",
) -> np.ndarray:
    """Broadband pseudo-spectrum ``P_q = sum_k 1 / sum_{m>n_sources} |A_q[k]^H e_m[k]|``.

    Bins flagged invalid in ``decomp`` (and bins outside ``bins``, if given) are
    left out of the sum; each inverse is capped at ``1/floor``.

    ``subspace="left"`` projects on the left singular vectors ``e_m``. These
    are orthogonal to ``R_nn^-1 a`` rather than to the source steering vector
    ``a``, so with spatially coloured noise the peak is pulled away from the
    source. ``"right"`` uses ``f_m``, which are orthogonal to ``a`` itself.
    """
    if subspace not in SUBSPACES:
        raise ConfigError(f"subspace must be one of {SUBSPACES}")
    left = np.asarray(decomp.left if subspace == "left" else decomp.right)
    M = left.shape[-1]
    if not 0 <= n_sources < M:
        raise ConfigError(f"n_sources must be in [0, {M}), got {n_sources}")
    if left.ndim == 2:
        left = left[None]
    keep = np.broadcast_to(np.asarray(decomp.valid, dtype=bool), left.shape[:1]).copy()
    if bins is not None:
        sel = np.zeros_like(keep)
        sel[np.asarray(bins)] = True
        keep &= sel
    steering_h = bank.hermitian_by_bin if _steering_h is None else _steering_h
    kidx = np.nonzero(keep)[0]
    if len(kidx) == 0:
        return np.zeros(steering_h.shape[1])
    noise_sub = left[kidx][:, :, n_sources:]  # (k, M, M - n)
    proj = np.abs(steering_h[kidx] @ noise_sub).sum(axis=-1)  # (k, Q)
    return (1.0 / np.maximum(proj, floor)).sum(axis=0)


def localize_frame_music(state: CorrelationSet, noise: CorrelationSet, frame, bank: SteeringVectorBank,
                         n_sources: int = 1, regularization: float | None = None, subspace: str = "left"):
    """Absorb ``frame`` and localize with GSVD-MUSIC; returns ``(estimate or None, state)``."""
    state = update(state, frame)
    inv, valid = noise_inverse(noise.matrices, regularization)
    failed = int((~valid).sum())
    if failed:
        warnings.warn(f"{failed} bins skipped: noise matrix not invertible", stacklevel=2)
    frame_index = getattr(frame, "frame_index", state.frames_absorbed - 1)
    if not valid.any():
        return None, state
    decomp = gsvd_all_bins(state.matrices, inv, valid)
    P = music_spectrum(decomp, bank, n_sources, subspace=subspace)
    q = int(np.argmax(P))
    direction = bank.grid.directions[q] if bank.grid is not None else None
    return DoaEstimate(frame_index, q, direction, float(P[q])), state


class GsvdMusicLocalizer:
    """Streaming GSVD-MUSIC; the noise inverse is computed once, up front."""

    def __init__(self, bank: SteeringVectorBank, noise: CorrelationSet, alpha: float = 0.05,
                 n_sources: int = 1, regularization: float | None = None, bins=None,
                 subspace: str = "left"):
        if subspace not in SUBSPACES:
            raise ConfigError(f"subspace must be one of {SUBSPACES}")
        self.bank = bank
        self.subspace = subspace
        self.alpha = alpha
        self.n_sources = n_sources
        self.bins = bins
        self.noise_inv, self.valid = noise_inverse(noise.matrices, regularization)
        self.failed_bins = int((~self.valid).sum())
        self._steering_h = bank.hermitian_by_bin
        self.state = CorrelationSet.zeros(noise.n_mics, noise.n_bins, alpha)

    def reset(self):
        self.state = CorrelationSet.zeros(self.state.n_mics, self.state.n_bins, self.alpha)

    def step(self, bins: np.ndarray, frame_index: int | None = None) -> DoaEstimate | None:
        mats = self.state.matrices
        update_inplace(mats, bins, self.alpha)
        n = self.state.frames_absorbed + 1
        self.state = CorrelationSet(mats, self.alpha, n)
        if not self.valid.any():
            return None
        decomp = gsvd_all_bins(mats, self.noise_inv, self.valid)
        P = music_spectrum(decomp, self.bank, self.n_sources, self.bins, _steering_h=self._steering_h,
                           subspace=self.subspace)
        q = int(np.argmax(P))
        direction = self.bank.grid.directions[q] if self.bank.grid is not None else None
        return DoaEstimate(n - 1 if frame_index is None else frame_index, q, direction, float(P[q]))

    def process(self, spectra) -> list:
        out = []
        for l, f in enumerate(spectra):
            bins = getattr(f, "bins", f)
            out.append(self.step(bins, getattr(f, "frame_index", l)))
        return out
