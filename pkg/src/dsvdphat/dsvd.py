"""DSVD-PHAT localizer: offline truncated SVD of the steering matrix, online
projection and nearest-neighbour search, plus the dense SRP-PHAT oracle."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dsvdphat.correlation import (
    CorrelationSet,
    difference,
    normalize_phat,
    phat_vector,
    update,
    update_inplace,
)
from dsvdphat.errors import ConfigError
from dsvdphat.geometry import DoaGrid, MicArrayGeometry, SteeringMatrix, build_steering_matrix
from dsvdphat.kdtree import make_searcher

ZERO_PROJECTION = 1e-12
INDEX_MAGIC = b"DSVDIDX\x00"
INDEX_VERSION = 1


@dataclass(frozen=True)
class DoaEstimate:
    frame_index: int
    grid_index: int
    direction: np.ndarray
    amplitude: float


@dataclass
class SvdIndex:
    W: SteeringMatrix
    U: np.ndarray  # (Q, K)
    singular_values: np.ndarray  # (K,) descending
    V: np.ndarray  # (P*(N/2+1), K)
    delta: float
    D_hat: np.ndarray  # (Q, K) unit rows of U S
    backend: str
    searcher: object

    @property
    def K(self) -> int:
        return self.singular_values.shape[0]

    @property
    def S(self) -> np.ndarray:
        return np.diag(self.singular_values)

    @property
    def energy_ratio(self) -> float:
        """Fraction of ``Tr{W W^H}`` kept by the truncation."""
        return float(np.sum(self.singular_values**2) / steering_energy(self.W))

    def directions(self) -> np.ndarray:
        if self.W.grid is None:
            raise ConfigError("steering matrix carries no DOA grid")
        return self.W.grid.directions


def steering_energy(W: SteeringMatrix) -> float:
    """``Tr{W W^H}``, the squared Frobenius norm."""
    return float(np.sum(np.abs(W.entries) ** 2))


def select_rank(singular_values: np.ndarray, total_energy: float, delta: float) -> int:
    """Smallest K with ``sum(s[:K]**2) >= (1 - delta) * total_energy``."""
    kept = np.cumsum(singular_values**2)
    ok = np.nonzero(kept >= (1 - delta) * total_energy)[0]
    return int(ok[0]) + 1 if len(ok) else len(singular_values)


def embed(z: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts: complex K-vector(s) -> real 2K."""
    z = np.asarray(z)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def _finish(W: SteeringMatrix, u, s, vh, delta, backend, leaf_size) -> SvdIndex:
    K = select_rank(s, steering_energy(W), delta)
    U, s, V = u[:, :K], s[:K].copy(), vh[:K].conj().T
    D = U * s
    D_hat = D / np.linalg.norm(D, axis=1, keepdims=True)
    searcher = make_searcher(embed(D_hat), backend, leaf_size)
    return SvdIndex(W, U, s, np.ascontiguousarray(V), delta, D_hat, backend, searcher)


def build_index(W: SteeringMatrix, delta: float = 1e-5, backend: str = "kdtree", leaf_size: int = 32) -> SvdIndex:
    """Truncated SVD ``W ~ U S V^H`` keeping ``1 - delta`` of the energy, plus search structure."""
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if W.entries.size == 0:
        raise ConfigError("empty steering matrix")
    u, s, vh = np.linalg.svd(W.entries, full_matrices=False)
    return _finish(W, u, s, vh, delta, backend, leaf_size)


def project(index: SvdIndex, X: np.ndarray) -> np.ndarray:
    """``Z = V^H X``."""
    X = np.asarray(X)
    if X.shape != (index.V.shape[0],):
        raise ConfigError(f"cross-spectra vector has length {X.shape}, expected {index.V.shape[0]}")
    return index.V.conj().T @ X


def search(index: SvdIndex, Z: np.ndarray, X: np.ndarray, frame_index: int = 0) -> DoaEstimate | None:
    """Nearest unit row of ``D_hat`` to ``conj(Z)/|Z|``; amplitude ``Re{W_q X}``.

    Returns None when ``Z`` vanishes (nothing to localize).
    """
    norm = np.linalg.norm(Z)
    if not norm > ZERO_PROJECTION:
        return None
    q, _ = index.searcher.query(embed(np.conj(Z) / norm))
    amplitude = float(np.real(index.W.entries[q] @ X))
    direction = index.W.grid.directions[q] if index.W.grid is not None else None
    return DoaEstimate(frame_index, q, direction, amplitude)


def srp_energy(W: SteeringMatrix, X: np.ndarray) -> np.ndarray:
    return np.real(W.entries @ X)


def brute_force_srp(W: SteeringMatrix, X: np.ndarray) -> tuple[int, float]:
    """Dense SRP-PHAT: argmax over all rows of ``Re{W X}``, ties to the lowest index."""
    Y = srp_energy(W, X)
    q = int(np.argmax(Y))
    return q, float(Y[q])


def localize_frame(index: SvdIndex, state: CorrelationSet, noise: CorrelationSet | None, frame):
    """Absorb ``frame`` into ``state`` and localize from ``R_xx - R_nn``.

    Returns ``(estimate or None, new_state)``. ``noise=None`` gives plain SVD-PHAT.
    """
    state = update(state, frame)
    rss = state if noise is None else difference(state, noise)
    X = phat_vector(rss, index.W.pairs)
    Z = project(index, X)
    frame_index = getattr(frame, "frame_index", state.frames_absorbed - 1)
    return search(index, Z, X, frame_index), state


class DsvdPhatLocalizer:
    """Streaming DSVD-PHAT over a sequence of frames (one correlation chain)."""

    def __init__(self, index: SvdIndex, noise: CorrelationSet | None = None, alpha: float = 0.05):
        self.index = index
        self.alpha = alpha
        W = index.W
        M = W.geometry.n_mics if W.geometry is not None else _mics_from_pairs(W.pairs)
        self.state = CorrelationSet.zeros(M, W.n_bins, alpha)
        self.noise = None if noise is None else noise.matrices
        self._ii = np.array([i for i, _ in W.pairs])
        self._jj = np.array([j for _, j in W.pairs])
        self._Vh = np.ascontiguousarray(index.V.conj().T)

    def reset(self):
        self.state = CorrelationSet.zeros(self.state.n_mics, self.state.n_bins, self.alpha)

    def step(self, bins: np.ndarray, frame_index: int | None = None) -> DoaEstimate | None:
        mats = self.state.matrices
        update_inplace(mats, bins, self.alpha)
        n = self.state.frames_absorbed + 1
        self.state = CorrelationSet(mats, self.alpha, n)
        cross = mats[:, self._ii, self._jj].T
        if self.noise is not None:
            cross = cross - self.noise[:, self._ii, self._jj].T
        X = normalize_phat(cross).reshape(-1)
        Z = self._Vh @ X
        return search(self.index, Z, X, n - 1 if frame_index is None else frame_index)

    def process(self, spectra) -> list:
        """Localize every frame of an (L, M, N/2+1) array or SpectraFrame list."""
        out = []
        for l, f in enumerate(spectra):
            bins = getattr(f, "bins", f)
            out.append(self.step(bins, getattr(f, "frame_index", l)))
        return out


def _mics_from_pairs(pairs) -> int:
    return max(j for _, j in pairs) + 1


# --- serialization ---------------------------------------------------------

def _write_array(buf, a: np.ndarray):
    a = np.ascontiguousarray(a)
    header = json.dumps({"dtype": a.dtype.str, "shape": list(a.shape)}, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    buf.write(a.tobytes())


def _read_array(buf) -> np.ndarray:
    (n,) = struct.unpack("<I", buf.read(4))
    meta = json.loads(buf.read(n))
    dtype = np.dtype(meta["dtype"])
    count = int(np.prod(meta["shape"])) if meta["shape"] else 1
    return np.frombuffer(buf.read(count * dtype.itemsize), dtype=dtype).reshape(meta["shape"]).copy()


def save_index(path, index: SvdIndex):
    """Versioned binary; byte-identical for identical indexes.

    ``W`` is not stored: it is rebuilt from the geometry and grid on load.
    """
    W = index.W
    if W.geometry is None or W.grid is None:
        raise ConfigError("index needs geometry and grid to be serialized")
    meta = {
        "version": INDEX_VERSION,
        "delta": index.delta,
        "backend": index.backend,
        "frame_size": W.frame_size,
        "speed_of_sound": W.geometry.speed_of_sound,
        "sample_rate": W.geometry.sample_rate,
        "grid_level": W.grid.refinement_level,
        "grid_base": W.grid.base,
        "grid_pole": [float(v) for v in W.grid.pole],
        "leaf_size": getattr(index.searcher, "leaf_size", 32),
    }
    buf = io.BytesIO()
    buf.write(INDEX_MAGIC)
    _write_array(buf, np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8))
    for a in (W.geometry.positions, W.grid.directions, index.U, index.singular_values, index.V):
        _write_array(buf, a)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(buf.getvalue())


def load_index(path) -> SvdIndex:
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.read(len(INDEX_MAGIC)) != INDEX_MAGIC:
        raise ConfigError(f"{path}: not a DSVD-PHAT index file")
    meta = json.loads(_read_array(buf).tobytes())
    if meta["version"] != INDEX_VERSION:
        raise ConfigError(f"{path}: unsupported index version {meta['version']}")
    positions, directions, U, s, V = (_read_array(buf) for _ in range(5))
    geom = MicArrayGeometry(positions, meta["speed_of_sound"], meta["sample_rate"])
    directions.setflags(write=False)
    grid = DoaGrid(directions, meta["grid_level"], meta["grid_base"], np.array(meta["grid_pole"]))
    W = build_steering_matrix(geom, grid, meta["frame_size"])
    D = U * s
    D_hat = D / np.linalg.norm(D, axis=1, keepdims=True)
    searcher = make_searcher(embed(D_hat), meta["backend"], meta["leaf_size"])
    return SvdIndex(W, U, s, V, meta["delta"], D_hat, meta["backend"], searcher)
