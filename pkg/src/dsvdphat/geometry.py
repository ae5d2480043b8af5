"""Array geometry, halfsphere DOA grids, TDOAs and the SRP-PHAT steering matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from dsvdphat.errors import ConfigError, DomainError

UNIT_TOL = 1e-9

# ReSpeaker 4-mic array on the Baxter head, metres, w.r.t. the array centre
RESPEAKER_POSITIONS = (
    (0.029, 0.0, 0.029),
    (0.029, 0.0, -0.029),
    (-0.029, 0.0, 0.029),
    (-0.029, 0.0, -0.029),
)


@dataclass(frozen=True)
class MicArrayGeometry:
    positions: np.ndarray  # (M, 3) metres
    speed_of_sound: float = 343.0
    sample_rate: float = 16000.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ConfigError(f"mic positions must be (M, 3), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ConfigError("need at least two microphones")
        if np.min(np.linalg.norm(pos[:, None] - pos[None], axis=-1) + np.eye(len(pos))) <= 0:
            raise ConfigError("microphone positions must be pairwise distinct")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise ConfigError("speed of sound and sample rate must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_mics(self) -> int:
        return self.positions.shape[0]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.n_mics), 2))

    @property
    def samples_per_metre(self) -> float:
        return self.sample_rate / self.speed_of_sound

    def normal(self) -> np.ndarray:
        """Unit normal of a planar array (sign: largest component positive); +z otherwise."""
        centred = self.positions - self.positions.mean(axis=0)
        _, s, vt = np.linalg.svd(centred)
        if s[-1] > 1e-9 * max(s[0], 1e-30):
            return np.array([0.0, 0.0, 1.0])
        n = vt[-1]
        n = np.where(np.abs(n) < 1e-12, 0.0, n)
        n = n / np.linalg.norm(n)
        return n if n[np.argmax(np.abs(n))] > 0 else -n


def respeaker_geometry(speed_of_sound=343.0, sample_rate=16000.0) -> MicArrayGeometry:
    return MicArrayGeometry(np.array(RESPEAKER_POSITIONS), speed_of_sound, sample_rate)


def _unit(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (3,) or abs(np.linalg.norm(s) - 1.0) > UNIT_TOL:
        raise DomainError(f"direction must be a unit 3-vector, got {s!r}")
    return s


def tdoa_origin(geom: MicArrayGeometry, s, m: int) -> float:
    """Delay in samples of mic ``m`` relative to the array origin for direction ``s``."""
    return geom.samples_per_metre * float(geom.positions[m] @ _unit(s))


def tdoa_pair(geom: MicArrayGeometry, s, i: int, j: int) -> float:
    """Delay in samples between mics ``i`` and ``j`` (``(r_j - r_i) . s`` scaled)."""
    if i == j:
        raise DomainError("pair TDOA needs two distinct microphones")
    return geom.samples_per_metre * float((geom.positions[j] - geom.positions[i]) @ _unit(s))


def origin_tdoas(geom: MicArrayGeometry, directions: np.ndarray) -> np.ndarray:
    """(Q, M) mic-to-origin TDOAs for every direction."""
    return geom.samples_per_metre * (np.asarray(directions) @ geom.positions.T)


def pair_tdoas(geom: MicArrayGeometry, directions: np.ndarray, pairs=None) -> np.ndarray:
    """(Q, P) pairwise TDOAs, pairs ordered (0,1), (0,2), ..., (M-2, M-1)."""
    pairs = geom.pairs if pairs is None else pairs
    baselines = np.array([geom.positions[j] - geom.positions[i] for i, j in pairs])
    return geom.samples_per_metre * (np.asarray(directions) @ baselines.T)


# --- DOA grid -------------------------------------------------------------

GRID_BASES = ("icosahedron", "tetrahedron")
# twist about +x after putting one icosahedron vertex on +x; leaves exactly one
# antipodal vertex pair on the equator, which yields 2562 -> 1282 at level 4
ICOSAHEDRON_TWIST = 0.1
EQUATOR_SNAP = 1e-9
DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class DoaGrid:
    directions: np.ndarray  # (Q, 3) unit vectors
    refinement_level: int
    base: str = "icosahedron"
    pole: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __len__(self):
        return self.directions.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "x", "y", "z"])
            for q, (x, y, z) in enumerate(self.directions):
                w.writerow([q, repr(float(x)), repr(float(y)), repr(float(z))])

    @classmethod
    def from_csv(cls, path, refinement_level=-1, base="csv"):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(rows[:, 1:4], refinement_level, base)


def _tetrahedron():
    z = -1.0 / 3.0
    r = np.sqrt(8.0 / 9.0)
    verts = [(0.0, 0.0, 1.0)] + [
        (r * np.cos(a), r * np.sin(a), z) for a in (0.0, 2 * np.pi / 3, 4 * np.pi / 3)
    ]
    faces = [(0, 1, 2), (0, 2, 3), (0, 3, 1), (1, 3, 2)]
    return np.array(verts), faces


def _icosahedron():
    t = (1 + 5**0.5) / 2
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    # vertex 9 -> +x, its neighbour 1 into the upper xz half-plane, then twist
    first = Rotation.align_vectors([[1.0, 0.0, 0.0]], [v[9]])[0]
    v = first.apply(v)
    spin = np.arctan2(v[1, 1], v[1, 2])
    v = Rotation.from_rotvec([spin + ICOSAHEDRON_TWIST, 0.0, 0.0]).apply(v)
    return v, faces


def _subdivide(verts: list, faces: list) -> list:
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return out


def sphere_points(refinement_level: int, base: str = "icosahedron") -> np.ndarray:
    """Full-sphere geodesic points by recursive edge-midpoint subdivision."""
    if refinement_level < 0:
        raise ConfigError("refinement level must be >= 0")
    if base == "icosahedron":
        v, faces = _icosahedron()
    elif base == "tetrahedron":
        v, faces = _tetrahedron()
    else:
        raise ConfigError(f"unknown grid base {base!r}; expected one of {GRID_BASES}")
    verts = list(v)
    for _ in range(refinement_level):
        faces = _subdivide(verts, faces)
    pts = np.array(verts)
    dup = {j for i, j in cKDTree(pts).query_pairs(DEDUP_TOL)}
    if dup:
        pts = pts[[q for q in range(len(pts)) if q not in dup]]
    return pts


def _to_pole(points: np.ndarray, pole: np.ndarray) -> np.ndarray:
    if np.allclose(pole, [0.0, 0.0, 1.0], atol=1e-15):
        return points
    if np.allclose(pole, [0.0, 0.0, -1.0], atol=1e-15):
        return points * np.array([1.0, -1.0, -1.0])
    axis = np.cross([0.0, 0.0, 1.0], pole)
    angle = np.arctan2(np.linalg.norm(axis), pole[2])
    rot = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle)
    out = rot.apply(points)
    out[np.abs(out) < 1e-15] = 0.0
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def build_doa_grid(refinement_level: int, base: str = "icosahedron", pole=(0.0, 0.0, 1.0)) -> DoaGrid:
    """Closed halfsphere of geodesic DOAs around ``pole``.

    Points within 1e-9 of the equator are snapped onto it and kept. With the
    default icosahedron base, level 4 gives Q = 1282.
    """
    pole = np.asarray(pole, dtype=np.float64)
    pole = pole / np.linalg.norm(pole)
    pts = sphere_points(refinement_level, base)
    near = np.abs(pts[:, 2]) < EQUATOR_SNAP
    if near.any():
        pts[near, 2] = 0.0
        pts[near] /= np.linalg.norm(pts[near], axis=1, keepdims=True)
    half = pts[pts[:, 2] >= 0.0]
    directions = _to_pole(half, pole)
    directions.setflags(write=False)
    return DoaGrid(directions, refinement_level, base, pole)


# --- steering matrix ------------------------------------------------------

@dataclass(frozen=True)
class SteeringMatrix:
    entries: np.ndarray  # (Q, P*(N/2+1)) complex, pair-major then bin
    pairs: list
    frame_size: int
    grid: DoaGrid | None = None
    geometry: MicArrayGeometry | None = None

    @property
    def n_bins(self) -> int:
        return self.frame_size // 2 + 1

    @property
    def shape(self):
        return self.entries.shape


def build_steering_matrix(geom: MicArrayGeometry, grid: DoaGrid, frame_size: int) -> SteeringMatrix:
    """SRP-PHAT coefficients ``exp(+2j*pi*k*tau_qij/N)`` for every DOA, pair and bin."""
    pairs = geom.pairs
    tau = pair_tdoas(geom, grid.directions, pairs)  # (Q, P)
    k = np.arange(frame_size // 2 + 1)
    phase = 2 * np.pi * tau[:, :, None] * k[None, None, :] / frame_size
    entries = np.exp(1j * phase).reshape(tau.shape[0], -1)
    entries.setflags(write=False)
    return SteeringMatrix(entries, pairs, frame_size, grid, geom)


def load_geometry_csv(path, speed_of_sound=343.0, sample_rate=16000.0) -> MicArrayGeometry:
    rows = np.loadtxt(Path(path), delimiter=",", ndmin=2, comments="#")
    return MicArrayGeometry(rows[:, -3:], speed_of_sound, sample_rate)
