import math
from dataclasses import fields, replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsvdphat.config import RunConfig, from_ini, load_config, override, to_ini
from dsvdphat.errors import ConfigError


def test_defaults_match_reference_setup(default_config):
    c = default_config
    assert c.geometry.sample_rate == 16000 and c.geometry.speed_of_sound == 343.0
    assert len(c.geometry.positions) == 4
    assert (c.stft.frame_size, c.stft.hop_size) == (256, 128)
    assert (c.dsvd.alpha, c.dsvd.delta) == (0.05, 1e-5)
    assert len(c.grid_obj()) == 1282
    assert c.eval.warmup_frames(c.dsvd.alpha) == 20
    assert c.music_bins() is None


def test_roundtrip_default(default_config):
    text = to_ini(default_config)
    assert from_ini(text) == default_config
    assert to_ini(from_ini(text)) == text


@given(
    alpha=st.floats(0.001, 1.0),
    delta=st.floats(1e-9, 0.9),
    snrs=st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=5),
    seed=st.integers(0, 2**31),
    pole=st.sampled_from(["normal", "0 0 1", "0.5 0.5 0.1"]),
    frac=st.booleans(),
    band_hi=st.sampled_from([math.inf, 4000.0]),
)
@settings(max_examples=50, deadline=None)
def test_roundtrip_random(alpha, delta, snrs, seed, pole, frac, band_hi):
    c = RunConfig()
    c = replace(c, dsvd=replace(c.dsvd, alpha=alpha, delta=delta), grid=replace(c.grid, pole=pole),
                sim=replace(c.sim, snr_list=tuple(snrs), seed=seed, fractional_delay=frac),
                music=replace(c.music, band_high_hz=band_hi))
    back = from_ini(to_ini(c))
    assert to_ini(back) == to_ini(c)
    assert back == c


def test_auto_regularization_survives_roundtrip(default_config):
    back = from_ini(to_ini(default_config))
    assert back.music.reg is None
    assert from_ini("[music]\nregularization = 0.001\n").music.reg == 0.001


def test_partial_file_and_overrides(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[dsvd]\ndelta = 0.5\n[sim]\nsnr_list = -5, 5\n")
    c = load_config(p)
    assert c.dsvd.delta == 0.5 and c.sim.snr_list == (-5.0, 5.0)
    assert c.stft == RunConfig().stft
    c2 = override(c, ["stft.window=hann", "music.band_low_hz = 300"])
    assert c2.stft.window == "hann" and c2.music.band_low_hz == 300.0
    # first bin at or above 300 Hz with 62.5 Hz spacing
    assert c2.music_bins()[0] == 5 and c2.music_bins()[-1] == 128


@pytest.mark.parametrize("text", [
    "[stft]\nframe_size = 100\n",
    "[stft]\nhop_size = 0\n",
    "[dsvd]\ndelta = 1.5\n",
    "[dsvd]\nbackend = faiss\n",
    "[grid]\npole = 1 2\n",
    "[nonsense]\nx = 1\n",
    "[dsvd]\nunknown = 1\n",
    "[dsvd]\nalpha = fast\n",
    "not an ini",
    "[music]\nsubspace = middle\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        from_ini(text)


def test_bad_override_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        override(RunConfig(), ["delta=3"])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_every_field_serialized(default_config):
    text = to_ini(default_config)
    for sec in fields(default_config):
        for f in fields(getattr(default_config, sec.name)):
            assert f"{f.name} = " in text
