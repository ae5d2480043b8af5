"""Run configuration: nested frozen dataclasses read from and written to an
INI file. Defaults reproduce the reference ReSpeaker setup."""

from __future__ import annotations

import configparser
import math
import typing
from dataclasses import dataclass, field, fields, replace

import numpy as np

from dsvdphat.errors import ConfigError
from dsvdphat.geometry import RESPEAKER_POSITIONS, GRID_BASES, MicArrayGeometry, build_doa_grid
from dsvdphat.stft import WINDOWS


@dataclass(frozen=True)
class GeometryConfig:
    positions: tuple = tuple(tuple(p) for p in RESPEAKER_POSITIONS)
    speed_of_sound: float = 343.0
    sample_rate: float = 16000.0


@dataclass(frozen=True)
class StftConfig:
    frame_size: int = 256
    hop_size: int = 128
    window: str = "sine"


@dataclass(frozen=True)
class GridConfig:
    refinement_level: int = 4
    base: str = "icosahedron"
    pole: str = "normal"  # "normal" (array normal) or "x y z"


@dataclass(frozen=True)
class DsvdConfig:
    alpha: float = 0.05
    delta: float = 1e-5
    backend: str = "kdtree"


@dataclass(frozen=True)
class MusicConfig:
    regularization: float = -1.0  # negative: 1e-6 of the mean noise power
    n_sources: int = 1
    band_low_hz: float = 0.0
    band_high_hz: float = math.inf
    subspace: str = "left"  # "right" avoids the coloured-noise bias of the left vectors

    def bins_for(self, frame_size: int, sample_rate: float):
        if self.band_low_hz <= 0 and math.isinf(self.band_high_hz):
            return None
        f = np.arange(frame_size // 2 + 1) * sample_rate / frame_size
        return tuple(np.nonzero((f >= self.band_low_hz) & (f <= self.band_high_hz))[0].tolist())

    @property
    def reg(self):
        return None if self.regularization < 0 else self.regularization


@dataclass(frozen=True)
class SimConfig:
    room_dimensions: tuple = (10.0, 10.0, 3.0)
    snr_list: tuple = (-10.0, 0.0, 10.0, 20.0)
    rt60_list: tuple = (0.2, 0.8)
    corpus: str = ""
    seed: int = 0
    wall_margin: float = 0.5
    min_distance: float = 1.0
    utterance_s: float = 2.0
    noise_recording_s: float = 20.0
    noise_rms: float = 0.01
    sensor_floor_db: float = -25.0
    diffuse_db: float = -math.inf
    fractional_delay: bool = True

    def noise_kwargs(self) -> dict:
        return {"rms": self.noise_rms, "sensor_floor_db": self.sensor_floor_db, "diffuse_db": self.diffuse_db}


@dataclass(frozen=True)
class EvalConfig:
    delta_theta: float = 0.2
    warmup: int = -1  # -1: ceil(1 / alpha) frames
    n_scenarios: int = 10
    # acceptance assertions checked by `evaluate`; -inf disables
    min_best_auc: float = -math.inf
    min_dsvd_gain: float = -math.inf

    def warmup_frames(self, alpha: float) -> int:
        return int(math.ceil(1 / alpha - 1e-9)) if self.warmup < 0 else self.warmup


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    dsvd: DsvdConfig = field(default_factory=DsvdConfig)
    music: MusicConfig = field(default_factory=MusicConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        validate(self)

    def geometry_obj(self) -> MicArrayGeometry:
        g = self.geometry
        return MicArrayGeometry(np.array(g.positions, dtype=np.float64), g.speed_of_sound, g.sample_rate)

    def pole(self, geom: MicArrayGeometry | None = None) -> np.ndarray:
        if self.grid.pole.strip().lower() == "normal":
            return (geom or self.geometry_obj()).normal()
        return np.array(_floats(self.grid.pole), dtype=np.float64)

    def grid_obj(self, geom: MicArrayGeometry | None = None):
        return build_doa_grid(self.grid.refinement_level, self.grid.base, self.pole(geom))

    def music_bins(self):
        return self.music.bins_for(self.stft.frame_size, self.geometry.sample_rate)


def validate(cfg: RunConfig):
    s, d = cfg.stft, cfg.dsvd
    if s.frame_size < 2 or s.frame_size & (s.frame_size - 1):
        raise ConfigError(f"frame_size must be a power of two, got {s.frame_size}")
    if not 0 < s.hop_size <= s.frame_size:
        raise ConfigError("hop_size must lie in (0, frame_size]")
    if s.window not in WINDOWS:
        raise ConfigError(f"window must be one of {WINDOWS}")
    if not 0 < d.alpha <= 1:
        raise ConfigError("alpha must lie in (0, 1]")
    if not 0 < d.delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    if d.backend not in ("kdtree", "linear"):
        raise ConfigError("backend must be kdtree or linear")
    if cfg.grid.base not in GRID_BASES or cfg.grid.refinement_level < 0:
        raise ConfigError("invalid grid settings")
    if cfg.grid.pole.strip().lower() != "normal":
        p = _floats(cfg.grid.pole)
        if len(p) != 3 or not np.linalg.norm(p) > 0:
            raise ConfigError(f"grid pole must be 'normal' or three numbers, got {cfg.grid.pole!r}")
    pos = np.array(cfg.geometry.positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 2:
        raise ConfigError("geometry needs at least two 3-D positions")
    if not 0 < cfg.eval.delta_theta <= math.pi / 2:
        raise ConfigError("delta_theta must lie in (0, pi/2]")
    if cfg.eval.n_scenarios < 1:
        raise ConfigError("n_scenarios must be >= 1")
    if cfg.music.subspace not in ("left", "right"):
        raise ConfigError("music subspace must be left or right")
    if not 0 <= cfg.music.n_sources < len(pos):
        raise ConfigError("n_sources must be smaller than the number of mics")


# --- INI round trip ---------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(repr(float(v)) for v in row) for row in value)
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse(text: str, default, name: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                return tuple(tuple(_floats(row)) for row in text.split(";") if row.strip())
            return tuple(_floats(text))
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc
    return text


def to_ini(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for sec in fields(cfg):
        sub = getattr(cfg, sec.name)
        parser[sec.name] = {f.name: _fmt(getattr(sub, f.name)) for f in fields(sub)}
    import io

    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_ini(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse INI text; missing keys fall back to ``base`` (defaults if None)."""
    base = base or RunConfig()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    known = {f.name for f in fields(base)}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for sec in fields(base):
        sub = getattr(base, sec.name)
        if sec.name not in parser:
            sections[sec.name] = sub
            continue
        names = {f.name for f in fields(sub)}
        bad = set(parser[sec.name]) - names
        if bad:
            raise ConfigError(f"[{sec.name}] unknown keys: {sorted(bad)}")
        changes = {k: _parse(v, getattr(sub, k), f"{sec.name}.{k}") for k, v in parser[sec.name].items()}
        sections[sec.name] = replace(sub, **changes)
    return RunConfig(**sections)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            return from_ini(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def override(cfg: RunConfig, assignments: typing.Iterable[str]) -> RunConfig:
    """Apply ``section.key=value`` overrides."""
    parser_text = {}
    for a in assignments:
        if "=" not in a or "." not in a.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {a!r}")
        key, value = a.split("=", 1)
        sec, name = key.split(".", 1)
        parser_text.setdefault(sec.strip(), []).append(f"{name.strip()} = {value.strip()}")
    text = "\n".join(f"[{s}]\n" + "\n".join(lines) for s, lines in parser_text.items())
    return from_ini(text, cfg)
