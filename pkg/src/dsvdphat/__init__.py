"""Noise-robust sound source localization with DSVD-PHAT and a GSVD-MUSIC baseline."""

from dsvdphat.errors import ConfigError, DomainError, SignalTooShortError, GsvdError
from dsvdphat.stft import MultichannelSignal, SpectraFrame, analyze, read_wav, write_wav
from dsvdphat.geometry import (
    MicArrayGeometry,
    DoaGrid,
    SteeringMatrix,
    build_doa_grid,
    build_steering_matrix,
    respeaker_geometry,
    tdoa_origin,
    tdoa_pair,
)
from dsvdphat.correlation import CorrelationSet, difference, estimate_noise, phat_vector, update
from dsvdphat.dsvd import (
    DoaEstimate,
    DsvdPhatLocalizer,
    SvdIndex,
    brute_force_srp,
    build_index,
    localize_frame,
    project,
    search,
)
from dsvdphat.music import (
    GsvdMusicLocalizer,
    SteeringVectorBank,
    build_steering_bank,
    gsvd_per_bin,
    localize_frame_music,
    music_spectrum,
)
from dsvdphat.config import RunConfig, from_ini, load_config, to_ini
from dsvdphat.evaluation import AucTable, RocCurve, angle_error, roc, run_condition_grid

__version__ = "0.1.0"
