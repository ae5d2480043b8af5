import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsvdphat.correlation import (
    CorrelationSet,
    difference,
    estimate_noise,
    load_correlation,
    phat_vector,
    save_correlation,
    update,
)
from dsvdphat.errors import ConfigError
from dsvdphat.stft import SpectraFrame

PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def cframe(rng, m=4, k=5):
    return rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))


def outer(x):
    return x.T[:, :, None] * x.T.conj()[:, None, :]


def random_hermitian(rng, k=5, m=4):
    a = rng.standard_normal((k, m, m)) + 1j * rng.standard_normal((k, m, m))
    return a + a.conj().transpose(0, 2, 1)


def test_alpha_one_replaces(rng):
    x = cframe(rng)
    c = update(CorrelationSet(random_hermitian(rng), 1.0), x)
    np.testing.assert_allclose(c.matrices, outer(x), atol=1e-14)
    assert c.frames_absorbed == 1


def test_zero_frame_scales(rng):
    r = random_hermitian(rng)
    c = update(CorrelationSet(r, 0.05, 3), np.zeros((4, 5)))
    np.testing.assert_allclose(c.matrices, 0.95 * r)
    assert c.frames_absorbed == 4


def test_two_step_recursion(rng):
    x = cframe(rng)
    c = CorrelationSet.zeros(4, 5, 0.05)
    c = update(update(c, x), SpectraFrame(1, x))
    np.testing.assert_allclose(c.matrices, 0.0975 * outer(x), atol=1e-14)
    assert 0.05 * 0.95 + 0.05 == pytest.approx(0.0975)


def test_update_shape_mismatch(rng):
    with pytest.raises(ConfigError):
        update(CorrelationSet.zeros(4, 5), cframe(rng, 3, 5))


@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.01, 0.99), steps=st.integers(1, 20))
@settings(max_examples=50, deadline=None)
def test_update_hermitian_psd(seed, alpha, steps):
    r = np.random.default_rng(seed)
    c = CorrelationSet.zeros(4, 5, alpha)
    for _ in range(steps):
        c = update(c, cframe(r))
    m = c.matrices
    assert np.max(np.abs(m - m.conj().transpose(0, 2, 1))) <= 1e-10
    assert np.all(np.diagonal(m, axis1=1, axis2=2).real >= -1e-12)
    assert np.min(np.linalg.eigvalsh(m)) >= -1e-10


def test_estimate_noise_single_frame_and_warning(rng):
    x = cframe(rng)
    with pytest.warns(UserWarning):
        c = estimate_noise([x], 0.05)
    np.testing.assert_allclose(c.matrices, 0.05 * outer(x))
    with pytest.raises(ConfigError):
        estimate_noise([], 0.05)


def test_estimate_noise_converges_geometrically(rng):
    x = cframe(rng)
    c = estimate_noise([x] * 200, 0.05)
    target = outer(x)
    np.testing.assert_allclose(c.matrices, (1 - 0.95**200) * target, rtol=1e-12)
    assert 0.95**200 < 1e-4
    assert np.max(np.abs(c.matrices - target)) <= 1e-4 * np.max(np.abs(target))


def test_white_noise_is_nearly_diagonal():
    r = np.random.default_rng(0)
    frames = r.standard_normal((10000, 4, 3)) + 1j * r.standard_normal((10000, 4, 3))
    # a slow rate so the estimate averages many frames
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = estimate_noise(frames, 0.001)
    diag = np.abs(np.diagonal(c.matrices, axis1=1, axis2=2))
    off = np.abs(c.matrices - np.einsum("kii->ki", c.matrices)[:, :, None] * np.eye(4))
    assert off.max() / diag.min() < 0.1


def test_difference_cases(rng):
    a, b = random_hermitian(rng), random_hermitian(rng)
    rxx, rnn = CorrelationSet(a + b), CorrelationSet(b)
    np.testing.assert_allclose(difference(rxx, rnn).matrices, a, atol=1e-12)
    np.testing.assert_array_equal(difference(rxx, CorrelationSet.zeros(4, 5)).matrices, a + b)
    assert not np.any(difference(rxx, rxx).matrices)
    with pytest.raises(ConfigError):
        difference(rxx, CorrelationSet.zeros(4, 6))


def test_phat_entries():
    m = np.zeros((2, 4, 4), dtype=complex)
    m[0, 0, 1] = 3 + 4j
    m[1, 0, 1] = 2.5
    X = phat_vector(CorrelationSet(m), PAIRS)
    assert X.shape == (12,)
    assert X[0] == pytest.approx(0.6 + 0.8j)
    assert X[1] == 1.0
    assert np.all(X[2:] == 0)
    assert not np.any(np.isnan(X))


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_phat_unit_or_zero_and_scale_invariant(seed):
    r = np.random.default_rng(seed)
    m = random_hermitian(r)
    m[0, 0, 1] = 0
    X = phat_vector(CorrelationSet(m), PAIRS)
    mag = np.abs(X)
    assert np.all((mag == 0) | (np.abs(mag - 1) <= 1e-9))
    scale = r.uniform(0.01, 100, m.shape)
    np.testing.assert_allclose(phat_vector(CorrelationSet(m * scale), PAIRS), X, atol=1e-12)


def test_phat_matches_gcc_numerator(rng):
    x = cframe(rng)
    c = update(CorrelationSet.zeros(4, 5, 1.0), x)
    X = phat_vector(c, PAIRS).reshape(6, 5)
    for p, (i, j) in enumerate(PAIRS):
        g = x[i] * np.conj(x[j])
        np.testing.assert_allclose(X[p], g / np.abs(g), atol=1e-12)


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_sidecar_roundtrip(tmp_path, rng, suffix):
    c = CorrelationSet(random_hermitian(rng), 0.05, 400)
    save_correlation(tmp_path / f"n{suffix}", c)
    back = load_correlation(tmp_path / f"n{suffix}")
    np.testing.assert_array_equal(back.matrices, c.matrices)
    assert (back.alpha, back.frames_absorbed) == (0.05, 400)
