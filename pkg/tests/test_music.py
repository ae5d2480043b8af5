import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsvdphat.correlation import CorrelationSet, update
from dsvdphat.errors import ConfigError, GsvdError
from dsvdphat.music import (
    GsvdMusicLocalizer,
    SubspaceDecomposition,
    build_steering_bank,
    gsvd_all_bins,
    gsvd_per_bin,
    localize_frame_music,
    music_spectrum,
    noise_inverse,
)


@pytest.fixture(scope="module")
def bank(geom, grid):
    return build_steering_bank(geom, grid, 256)


def random_psd(rng, m=4, k=None):
    shape = (m, m) if k is None else (k, m, m)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return a @ np.conj(np.swapaxes(a, -1, -2)) + 0.1 * np.eye(m)


def test_bank_basics(bank):
    v = bank.vectors
    assert v.shape == (1282, 129, 4)
    np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-12)
    assert np.all(v[:, 0, :] == 1)


def test_bank_conjugate_relation_to_W(bank, W, geom):
    block = W.entries.reshape(1282, 6, 129)
    for p, (i, j) in enumerate(geom.pairs):
        lhs = bank.vectors[:, :, i] * np.conj(bank.vectors[:, :, j])
        np.testing.assert_allclose(lhs, np.conj(block[:, p, :]), atol=1e-10)


def test_diagonal_case():
    d = gsvd_per_bin(np.diag([4.0, 3, 2, 1]).astype(complex), np.eye(4), regularization=0.0)
    np.testing.assert_allclose(d.singular_values, [4, 3, 2, 1], atol=1e-12)
    np.testing.assert_allclose(np.abs(d.left), np.eye(4), atol=1e-12)


def test_rank_one_with_white_noise():
    r = np.random.default_rng(0)
    a = np.exp(2j * np.pi * r.uniform(size=4))
    sigma2 = 3.0
    rxx = sigma2 * np.outer(a, a.conj()) + np.eye(4)
    d = gsvd_per_bin(rxx, np.eye(4), regularization=0.0)
    assert d.singular_values[0] == pytest.approx(sigma2 * 4 + 1)
    assert np.max(np.abs(a.conj() @ d.left[:, 1:])) <= 1e-10


def test_identical_matrices_give_unit_values():
    r = np.random.default_rng(1)
    rnn = random_psd(r)
    d = gsvd_per_bin(rnn, rnn, regularization=0.0)
    np.testing.assert_allclose(d.singular_values, 1.0, atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_decomposition_invariants(seed):
    r = np.random.default_rng(seed)
    rxx, rnn = random_psd(r), random_psd(r)
    d = gsvd_per_bin(rxx, rnn, regularization=0.0)
    product = np.linalg.solve(rnn, rxx)
    recon = d.left @ np.diag(d.singular_values) @ d.right.conj().T
    assert np.linalg.norm(product - recon) <= 1e-8 * np.linalg.norm(product)
    assert np.all(np.diff(d.singular_values) <= 0)
    np.testing.assert_allclose(d.left.conj().T @ d.left, np.eye(4), atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_white_noise_reduces_to_eigendecomposition(seed):
    rxx = random_psd(np.random.default_rng(seed))
    d = gsvd_per_bin(rxx, np.eye(4), regularization=0.0)
    np.testing.assert_allclose(d.singular_values, np.sort(np.linalg.eigvalsh(rxx))[::-1], atol=1e-9)


def test_scaling_rxx_keeps_argmax(bank):
    r = np.random.default_rng(2)
    rxx, rnn = random_psd(r, k=129), random_psd(r, k=129)
    inv, valid = noise_inverse(rnn)
    p1 = music_spectrum(gsvd_all_bins(rxx, inv, valid), bank)
    p2 = music_spectrum(gsvd_all_bins(7.5 * rxx, inv, valid), bank)
    assert np.argmax(p1) == np.argmax(p2)


def test_singular_noise_rejected():
    with pytest.raises(GsvdError):
        gsvd_per_bin(np.eye(4), np.full((4, 4), np.nan))
    inv, valid = noise_inverse(np.stack([np.eye(4), np.full((4, 4), np.inf)]).astype(complex))
    assert valid.tolist() == [True, False]


def test_spectrum_floor_saturates(bank):
    # noise subspace orthogonal to every steering vector of row q at every bin
    q = 10
    left = np.zeros((129, 4, 4), dtype=complex)
    for k in range(129):
        a = bank.vectors[q, k] / 2
        basis = np.linalg.qr(np.column_stack([a, np.eye(4)[:, :3]]))[0]
        left[k] = basis
    d = SubspaceDecomposition(np.ones((129, 4)), left, left, np.ones(129, bool))
    P = music_spectrum(d, bank, floor=1e-9)
    assert P[q] == pytest.approx(129 / 1e-9, rel=1e-3)
    assert np.argmax(P) == q


@pytest.mark.parametrize("seed", range(5))
def test_noise_only_spectrum_is_flat(bank, seed):
    # relative spread across directions when R_xx = R_nn
    rnn = random_psd(np.random.default_rng(seed), k=129)
    inv, valid = noise_inverse(rnn)
    P = music_spectrum(gsvd_all_bins(rnn, inv, valid), bank)
    assert P.std() / P.mean() < 0.10


def test_n_sources_domain(bank):
    d = SubspaceDecomposition(np.ones(4), np.eye(4), np.eye(4))
    with pytest.raises(ConfigError):
        music_spectrum(d, bank, n_sources=4)
    with pytest.raises(ConfigError):
        music_spectrum(d, bank, subspace="middle")


def _source_frames(geom, s, n, rng, noise_scale=0.05):
    from dsvdphat.geometry import origin_tdoas

    tau = origin_tdoas(geom, s[None])[0]
    k = np.arange(129)
    src = rng.standard_normal((n, 129)) + 1j * rng.standard_normal((n, 129))
    x = src[:, None, :] * np.exp(2j * np.pi * k[None, None, :] * tau[None, :, None] / 256)
    return x + noise_scale * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))


def test_localizes_with_white_noise(bank, geom, grid):
    rng = np.random.default_rng(4)
    q = 777
    noise = CorrelationSet(np.broadcast_to(0.005 * np.eye(4), (129, 4, 4)).astype(complex))
    loc = GsvdMusicLocalizer(bank, noise)
    est = loc.process(_source_frames(geom, grid.directions[q], 30, rng))[-1]
    assert est.grid_index == q


def test_streaming_matches_functional(bank, geom, grid):
    rng = np.random.default_rng(5)
    frames = _source_frames(geom, grid.directions[50], 5, rng)
    noise = CorrelationSet(random_psd(rng, k=129))
    loc = GsvdMusicLocalizer(bank, noise)
    state = CorrelationSet.zeros(4, 129)
    for l, f in enumerate(frames):
        a = loc.step(f, l)
        b, state = localize_frame_music(state, noise, f, bank)
        assert a.grid_index == b.grid_index
        assert a.amplitude == pytest.approx(b.amplitude, rel=1e-9)


def test_all_bins_failed_gives_no_estimate(bank):
    noise = CorrelationSet(np.full((129, 4, 4), np.nan, dtype=complex))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est, _ = localize_frame_music(CorrelationSet.zeros(4, 129), noise, np.ones((4, 129)), bank)
    assert est is None
    assert GsvdMusicLocalizer(bank, noise).step(np.ones((4, 129))) is None


def test_left_vectors_are_biased_by_coloured_noise(bank, geom, grid):
    """With directional noise the left singular vectors are orthogonal to
    R_nn^-1 a instead of a; the right vectors are not."""
    rng = np.random.default_rng(6)
    q_src, q_fan = 300, 1000
    fan = _source_frames(geom, grid.directions[q_fan], 400, rng, noise_scale=0.03)
    noise = CorrelationSet(np.einsum("lmk,lnk->kmn", fan, fan.conj()) / len(fan))
    a = bank.vectors[q_src, 60]
    d = gsvd_per_bin(100 * np.outer(a, a.conj()) + noise.matrices[60], noise.matrices[60])
    left_leak = np.abs(a.conj() @ d.left[:, 1:]).sum()
    right_leak = np.abs(a.conj() @ d.right[:, 1:]).sum()
    assert right_leak < 1e-3 < left_leak
