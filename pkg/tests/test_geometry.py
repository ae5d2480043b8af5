import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from dsvdphat.errors import ConfigError, DomainError
from dsvdphat.geometry import (
    DoaGrid,
    MicArrayGeometry,
    build_doa_grid,
    build_steering_matrix,
    origin_tdoas,
    pair_tdoas,
    sphere_points,
    tdoa_origin,
    tdoa_pair,
)

unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.array(v) / np.linalg.norm(v)
)


def test_table_positions(geom):
    assert geom.n_mics == 4
    assert len(geom.pairs) == 6
    np.testing.assert_allclose(np.abs(geom.positions[:, [0, 2]]), 0.029)
    assert not np.any(geom.positions[:, 1])
    np.testing.assert_allclose(geom.normal(), [0, 1, 0], atol=1e-12)


def test_tdoa_hand_values(geom):
    assert tdoa_origin(geom, (0, 1, 0), 0) == 0.0
    assert tdoa_origin(geom, (1, 0, 0), 0) == pytest.approx(16000 / 343 * 0.029, abs=1e-12)
    assert tdoa_origin(geom, (1, 0, 0), 0) == pytest.approx(1.35277, abs=1e-5)
    # mics 1 and 3 of the table are indices 0 and 2
    assert tdoa_pair(geom, (1, 0, 0), 0, 2) == pytest.approx(-2.70554, abs=1e-5)
    assert tdoa_pair(geom, (0, 0, 1), 0, 2) == 0.0


def test_tdoa_scales_with_fs_over_c(geom):
    double = MicArrayGeometry(geom.positions, 343.0, 32000.0)
    s = np.array([0.6, 0.0, 0.8])
    for m in range(4):
        assert tdoa_origin(double, s, m) == 2 * tdoa_origin(geom, s, m)


def test_tdoa_errors(geom):
    with pytest.raises(DomainError):
        tdoa_origin(geom, (1, 1, 0), 0)
    with pytest.raises(DomainError):
        tdoa_pair(geom, (1, 0, 0), 1, 1)


def test_geometry_validation():
    with pytest.raises(ConfigError):
        MicArrayGeometry(np.zeros((1, 3)))
    with pytest.raises(ConfigError):
        MicArrayGeometry(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        MicArrayGeometry(np.eye(3), speed_of_sound=0)


@given(s=unit_vectors, i=st.integers(0, 3), j=st.integers(0, 3))
@settings(max_examples=100, deadline=None)
def test_pair_is_difference_and_antisymmetric(geom, s, i, j):
    if i == j:
        return
    t = tdoa_pair(geom, s, i, j)
    assert t == pytest.approx(tdoa_origin(geom, s, j) - tdoa_origin(geom, s, i), abs=1e-12)
    assert t == pytest.approx(-tdoa_pair(geom, s, j, i), abs=1e-12)
    assert abs(t) <= 16000 / 343 * 0.058 * np.sqrt(2) + 1e-12


def test_vectorized_tdoas_match_scalar(geom, small_grid):
    o = origin_tdoas(geom, small_grid.directions)
    p = pair_tdoas(geom, small_grid.directions)
    for q in (0, 7, len(small_grid) - 1):
        s = small_grid.directions[q]
        for m in range(4):
            assert o[q, m] == pytest.approx(tdoa_origin(geom, s, m), abs=1e-12)
        for c, (i, j) in enumerate(geom.pairs):
            assert p[q, c] == pytest.approx(tdoa_pair(geom, s, i, j), abs=1e-12)


def test_grid_has_1282_points(grid):
    assert len(grid) == 1282
    assert grid.refinement_level == 4


@pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
def test_grid_invariants(level):
    pole = np.array([0.0, 1.0, 0.0])
    g = build_doa_grid(level, pole=pole)
    d = g.directions
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    assert np.all(d @ pole >= -1e-12)
    assert not cKDTree(d).query_pairs(1e-9)


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_grid_near_equidistant(level):
    d = build_doa_grid(level).directions
    dist, _ = cKDTree(d).query(d, k=2)
    spacing = 2 * np.arcsin(dist[:, 1] / 2)
    assert spacing.max() / spacing.min() <= 2.0


def test_grid_default_pole_is_upper_halfsphere():
    d = build_doa_grid(3).directions
    assert np.all(d[:, 2] >= -1e-12)


def test_level_zero_icosahedron_and_tetrahedron():
    ico = sphere_points(0, "icosahedron")
    assert len(ico) == 12
    tet = build_doa_grid(0, "tetrahedron")
    np.testing.assert_allclose(tet.directions, [[0, 0, 1]], atol=1e-12)
    # tetrahedron sphere point counts: 2 + 2 * 4**L
    for level in range(4):
        assert len(sphere_points(level, "tetrahedron")) == 2 + 2 * 4**level


def test_grid_csv_roundtrip(tmp_path, small_grid):
    small_grid.to_csv(tmp_path / "g.csv")
    back = DoaGrid.from_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(back.directions, small_grid.directions)


def test_steering_matrix_layout(geom, W, grid):
    assert W.shape == (1282, 6 * 129)
    np.testing.assert_allclose(np.abs(W.entries), 1.0, atol=1e-12)
    block = W.entries.reshape(1282, 6, 129)
    assert np.all(block[:, :, 0] == 1.0)
    # entry (q; i, j, k) = exp(+2 pi i k tau / N)
    q, p, k = 100, 4, 37
    i, j = geom.pairs[p]
    tau = tdoa_pair(geom, grid.directions[q], i, j)
    assert block[q, p, k] == pytest.approx(np.exp(2j * np.pi * k * tau / 256), abs=1e-12)


def test_steering_row_is_one_for_normal_direction(geom):
    g = DoaGrid(np.array([[0.0, 1.0, 0.0]]), -1)
    W1 = build_steering_matrix(geom, g, 256)
    np.testing.assert_allclose(W1.entries, 1.0)


def test_steering_conjugacy(geom):
    # x-flip of the source equals the x-mirrored array, which for this
    # centro-symmetric layout conjugates the row after permuting pairs;
    # directly: negating s conjugates every coefficient
    s = np.array([[0.48, 0.6, 0.64]])
    a = build_steering_matrix(geom, DoaGrid(s, -1), 256).entries
    b = build_steering_matrix(geom, DoaGrid(-s, -1), 256).entries
    np.testing.assert_allclose(b, np.conj(a), atol=1e-12)
    flipped = s * np.array([-1, 1, 1])
    c = build_steering_matrix(geom, DoaGrid(flipped, -1), 256).entries.reshape(6, 129)
    # pairs (0,2) and (1,3) are x-baselines: flipping s_x conjugates them
    ref = a.reshape(6, 129)
    for p in (1, 4):
        np.testing.assert_allclose(c[p], np.conj(ref[p]), atol=1e-12)
