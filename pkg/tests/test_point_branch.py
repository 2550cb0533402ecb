import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from afford3d.data import PointCloud, generate_synthetic
from afford3d.point_branch import (
    PointEncoder, assign_to_centers, build_graph, extract_regions, farthest_point_sample,
    knn_indices, region_pool,
)


def test_fps_hand_case_on_a_line():
    coords = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0], [10, 0, 0]])
    assert farthest_point_sample(coords, 3).tolist() == [0, 3, 2]
    assert farthest_point_sample(coords, 2, start=3).tolist() == [3, 0]


def test_fps_ties_pick_lowest_index():
    square = np.array([[1.0, 1, 0], [-1, 1, 0], [-1, -1, 0], [1, -1, 0], [0, 0, 0]])
    # from the center all corners are equidistant
    assert farthest_point_sample(square, 2, start=4).tolist() == [4, 0]


def test_fps_rejects_too_many_centers():
    with pytest.raises(ValueError):
        farthest_point_sample(np.zeros((4, 3)), 5)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (30, 3), elements=st.floats(-1, 1)), st.integers(1, 30))
def test_fps_greedy_max_min(coords, m):
    idx = farthest_point_sample(coords, m)
    assert idx[0] == 0 and len(idx) == m
    for i in range(1, m):
        d = ((coords[:, None] - coords[idx[:i]][None]) ** 2).sum(-1).min(axis=1)
        assert d[idx[i]] == d.max()


def test_region_shapes_at_default_width():
    torch.manual_seed(0)
    enc = PointEncoder(512)
    cloud = generate_synthetic(seed=0, n_samples=1, n_points=2048).train[0].cloud
    with torch.no_grad():
        large = extract_regions(cloud, "large", enc)
        small = extract_regions(cloud, "small", enc)
    assert large.features.shape == (512, 64) and large.centers.shape == (64, 3)
    assert small.features.shape == (512, 128) and small.centers.shape == (128, 3)
    assert torch.isfinite(large.features).all() and torch.isfinite(small.features).all()
    assert len(set(small.geometry.center_idx.tolist())) == 128


def test_region_features_invariant_to_point_order():
    torch.manual_seed(0)
    enc = PointEncoder(64).double()
    coords = np.random.default_rng(0).uniform(-1, 1, (256, 3))
    perm = np.random.default_rng(1).permutation(256)
    shuffled = coords[perm]
    start = int(np.where(perm == 0)[0][0])
    with torch.no_grad():
        a = extract_regions(PointCloud(coords), "large", enc)
        b = extract_regions(PointCloud(shuffled), "large", enc, start=start)
    assert np.array_equal(perm[b.geometry.center_idx], a.geometry.center_idx)
    assert torch.allclose(a.features, b.features, atol=1e-10)


def test_region_pool_is_channelwise_max_and_order_free():
    feats = torch.tensor([[[1.0, 5.0, -2.0, 0.5], [0.0, -1.0, 3.0, 2.0]]])
    assign = torch.tensor([[0, 0, 1, 1]])
    out = region_pool(feats, assign, 2)
    assert torch.equal(out, torch.tensor([[[5.0, 0.5], [0.0, 3.0]]]))
    perm = torch.tensor([3, 1, 0, 2])
    assert torch.equal(region_pool(feats[..., perm], assign[:, perm], 2), out)


def test_region_assignment_covers_every_point():
    coords = np.random.default_rng(2).uniform(-1, 1, (500, 3))
    idx = farthest_point_sample(coords, 64)
    assign = assign_to_centers(coords, coords[idx])
    assert assign.shape == (500,)
    # every center belongs to its own region, so none is empty
    assert np.array_equal(assign[idx], np.arange(64))


def test_knn_includes_self_first():
    coords = np.random.default_rng(3).uniform(size=(50, 3))
    idx = knn_indices(coords, 16)
    assert idx.shape == (50, 16)
    assert np.array_equal(idx[:, 0], np.arange(50))


def test_graph_hand_case():
    feats = torch.tensor([[1.0, 2.0, 0.0, -1.0], [0.0, 0.0, 3.0, 0.0]], dtype=torch.float64)[None]
    g = build_graph(feats)
    raw = torch.tensor([[1, 1, 0, -1], [1, 1, 0, -1], [0, 0, 1, 0], [-1, -1, 0, 1.0]],
                       dtype=torch.float64)
    adj = torch.tensor([[2, 1, 0, 0], [1, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 2.0]],
                       dtype=torch.float64)
    norm = torch.tensor([[2 / 3, 1 / 3, 0, 0], [1 / 3, 2 / 3, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]],
                        dtype=torch.float64)
    assert torch.allclose(g["raw"][0], raw, atol=1e-12)
    assert torch.allclose(g["adjacency"][0], adj, atol=1e-12)
    assert torch.allclose(g["normalized"][0], norm, atol=1e-12)


def test_graph_zero_region_is_isolated_but_finite():
    feats = torch.tensor([[[1.0, 0.0, 0.5]], [[0.0, 0.0, 0.0]]], dtype=torch.float64).transpose(0, 1)
    g = build_graph(feats.reshape(1, 2, 3))
    assert torch.isfinite(g["normalized"]).all()
    assert g["normalized"][0, 1, 1] == 1.0
    assert torch.all(g["normalized"][0, 1, [0, 2]] == 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 10), elements=st.floats(-10, 10)))
def test_graph_symmetric_with_spectrum_in_unit_interval(feats):
    g = build_graph(torch.as_tensor(feats)[None])
    norm = g["normalized"][0]
    assert torch.equal(norm, norm.T)
    assert torch.all(g["adjacency"] >= 0)
    eig = torch.linalg.eigvalsh(norm)
    assert eig.abs().max() <= 1 + 1e-9
    assert eig.max() == pytest.approx(1.0, abs=1e-9)


def test_graph_at_init_is_not_fully_connected():
    torch.manual_seed(0)
    enc = PointEncoder(128)
    cloud = generate_synthetic(seed=1, n_samples=1, n_points=2048).train[0].cloud
    with torch.no_grad():
        feats = extract_regions(cloud, "large", enc).features
        raw = build_graph(feats[None])["raw"][0]
    off = raw[~torch.eye(64, dtype=torch.bool)]
    assert (off <= 0).float().mean() > 0.1


def test_fps_collinear_and_square_examples():
    line = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    assert farthest_point_sample(line, 2).tolist() == [0, 3]
    assert sorted(farthest_point_sample(line, 4).tolist()) == [0, 1, 2, 3]
    square = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    assert farthest_point_sample(square, 3).tolist() == [0, 3, 1]


def test_graph_orthonormal_and_duplicate_columns():
    g = build_graph(torch.eye(5, dtype=torch.float64)[None])
    assert torch.equal(g["raw"][0], torch.eye(5, dtype=torch.float64))
    assert torch.allclose(g["normalized"][0], torch.eye(5, dtype=torch.float64), atol=1e-15)
    g = build_graph(torch.tensor([[[0.3, 0.3], [-1.2, -1.2]]], dtype=torch.float64))
    assert torch.allclose(g["adjacency"][0], torch.tensor([[2.0, 1], [1, 2]], dtype=torch.float64))
    assert torch.allclose(g["normalized"][0],
                          torch.tensor([[2 / 3, 1 / 3], [1 / 3, 2 / 3]], dtype=torch.float64))


def test_fps_is_deterministic():
    coords = np.random.default_rng(5).normal(size=(300, 3))
    assert np.array_equal(farthest_point_sample(coords, 40, 7), farthest_point_sample(coords, 40, 7))
