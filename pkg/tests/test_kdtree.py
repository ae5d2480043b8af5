import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsvdphat.kdtree import KDTree, LinearScan, make_searcher


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 400), dim=st.integers(1, 12),
       leaf=st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_tree_is_exact(seed, n, dim, leaf):
    r = np.random.default_rng(seed)
    pts = r.standard_normal((n, dim))
    tree = KDTree(pts, leaf)
    for x in r.standard_normal((10, dim)):
        q, d = tree.query(x)
        exhaustive = np.sum((pts - x) ** 2, axis=1)
        assert d == pytest.approx(exhaustive.min(), abs=1e-12)
        assert d <= exhaustive.min() + 1e-12
        assert q == int(np.argmin(exhaustive))


def test_ties_go_to_lowest_index():
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]])
    for backend in ("kdtree", "linear"):
        s = make_searcher(pts, backend, leaf_size=1)
        assert s.query(np.zeros(2))[0] == 0
        assert s.query(np.array([2.0, 0.0]))[0] == 0


def test_duplicate_points_resolve_lowest():
    pts = np.repeat(np.eye(3), 20, axis=0)[::-1].copy()
    tree = KDTree(pts, 4)
    q, _ = tree.query(np.array([0.9, 0.1, 0.0]))
    assert q == int(np.argmin(np.sum((pts - [0.9, 0.1, 0.0]) ** 2, axis=1)))


def test_unit_sphere_embedding(index):
    # the real index: 2K-dimensional unit vectors
    from dsvdphat.dsvd import embed

    pts = embed(index.D_hat)
    tree, lin = KDTree(pts, 32), LinearScan(pts)
    r = np.random.default_rng(3)
    for z in r.standard_normal((200, pts.shape[1])):
        z /= np.linalg.norm(z)
        assert tree.query(z)[0] == lin.query(z)[0]


def test_unknown_backend():
    with pytest.raises(ValueError):
        make_searcher(np.zeros((2, 2)), "annoy")
