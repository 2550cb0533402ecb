import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from afford3d.point_branch import build_graph, interpolation_weights
from afford3d.propagation import (
    ChannelReweight, GraphPropagation, PropagationSelection, ScaleGate, gcn_propagate,
    select_scales, upsample,
)
from gradutil import fd_relative_error, projector

F64 = torch.float64


def _sig(x):
    return 1 / (1 + np.exp(-x))


def test_reweight_zero_raw_gives_half():
    rw = ChannelReweight(4).double()
    with torch.no_grad():
        rw.linear.bias.zero_()
    fused = torch.randn(2, 4, 5, dtype=F64)
    assert torch.equal(rw(fused, torch.zeros_like(fused)), 0.5 * fused)


def test_reweight_saturated_gate_passes_fused():
    rw = ChannelReweight(4).double()
    with torch.no_grad():
        rw.linear.weight.zero_()
        rw.linear.bias.fill_(50.0)
    fused = torch.randn(1, 4, 3, dtype=F64)
    assert torch.allclose(rw(fused, torch.randn_like(fused)), fused, atol=1e-15)


def test_reweight_hand_case():
    rw = ChannelReweight(2).double()
    with torch.no_grad():
        rw.linear.weight.copy_(torch.tensor([[1.0, -2.0], [0.5, 0.0]]))
        rw.linear.bias.copy_(torch.tensor([0.1, -0.3]))
    raw = torch.tensor([[[1.0, 3.0], [0.0, -4.0]]], dtype=F64)
    fused = torch.tensor([[[2.0, -1.0], [5.0, 7.0]]], dtype=F64)
    pooled = np.array([2.0, -2.0])  # mean of raw over regions
    weight, bias = np.array([[1.0, -2.0], [0.5, 0.0]]), np.array([0.1, -0.3])
    gates = _sig(weight @ pooled + bias)
    assert np.allclose(gates, _sig(np.array([6.1, 0.7])))
    expected = fused[0].numpy() * gates[:, None]
    assert np.allclose(rw(fused, raw)[0].detach().numpy(), expected, atol=1e-12)


def test_gcn_identity_graph_one_layer():
    init = torch.randn(1, 3, 4, dtype=F64)
    out = gcn_propagate(init, torch.eye(4, dtype=F64)[None], [torch.eye(3, dtype=F64)])
    assert torch.allclose(out, torch.sigmoid(init), atol=1e-15)


def test_gcn_identical_columns_on_symmetric_doubly_stochastic_graph():
    col = torch.randn(3, 1, dtype=F64)
    init = col.expand(3, 2)[None]
    graph = torch.tensor([[[0.3, 0.7], [0.7, 0.3]]], dtype=F64)
    gcn = GraphPropagation(3).double()
    out = gcn(init, graph)
    assert torch.equal(out[..., 0], out[..., 1])


def test_gcn_three_region_hand_case():
    graph = np.array([[0.5, 0.5, 0.0], [0.5, 0.25, 0.25], [0.0, 0.25, 0.75]])
    init = np.array([[1.0, -1.0, 2.0], [0.0, 3.0, -2.0]])  # C=2 x M=3
    w = np.array([[1.0, 2.0], [-1.0, 0.5]])
    expected = _sig(graph @ init.T @ w).T
    out = gcn_propagate(torch.tensor(init)[None], torch.tensor(graph)[None], [torch.tensor(w)])
    assert np.allclose(out[0].numpy(), expected, atol=1e-12)


def test_gcn_rejects_non_finite_graph():
    graph = torch.eye(3, dtype=F64)[None].clone()
    graph[0, 1, 2] = float("nan")
    with pytest.raises(ValueError):
        gcn_propagate(torch.zeros(1, 2, 3, dtype=F64), graph, [torch.eye(2, dtype=F64)])
    with pytest.raises(ValueError):
        GraphPropagation(4, layers=0)


def test_gcn_permutation_equivariance():
    torch.manual_seed(0)
    gcn = GraphPropagation(8).double()
    feats = torch.randn(1, 8, 20, dtype=F64)
    graph = build_graph(torch.randn(1, 8, 20, dtype=F64))["normalized"]
    perm = torch.randperm(20)
    with torch.no_grad():
        a = gcn(feats, graph)
        b = gcn(feats[..., perm], graph[:, perm][:, :, perm])
    assert torch.allclose(b, a[..., perm], rtol=0, atol=1e-15)


def test_gcn_stays_in_open_unit_interval_at_depth():
    torch.manual_seed(0)
    gcn = GraphPropagation(6, layers=40).double()
    graph = build_graph(torch.randn(1, 6, 10, dtype=F64))["normalized"]
    with torch.no_grad():
        out = gcn(torch.randn(1, 6, 10, dtype=F64) * 10, graph)
    assert torch.all(out > 0) and torch.all(out < 1)


def test_interpolation_weights_one_dimensional_example():
    centers = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    idx, w = interpolation_weights(np.array([[0.25, 0, 0]]), centers, k=2)
    # inverse distances 1/0.25 = 4 and 1/0.75 = 4/3 normalize to 3/4 and 1/4
    assert idx.tolist() == [[0, 1]]
    assert np.allclose(w, [[0.75, 0.25]], atol=1e-15)


def test_interpolation_coincident_point_takes_full_weight():
    centers = np.random.default_rng(0).uniform(size=(5, 3))
    idx, w = interpolation_weights(centers[[2]], centers)
    assert idx[0, 0] == 2 and w[0].tolist() == [1.0, 0.0, 0.0]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (40, 3), elements=st.floats(-1, 1)), st.integers(1, 10))
def test_interpolation_partition_of_unity(coords, m):
    idx, w = interpolation_weights(coords, coords[:m])
    assert np.all(w >= 0)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-7)


def test_constant_field_upsamples_to_constant():
    coords = np.random.default_rng(1).uniform(size=(100, 3))
    out = []
    for m in (8, 16):
        idx, w = interpolation_weights(coords, coords[:m])
        regions = torch.full((1, 4, m), 0.37, dtype=F64)
        out.append(upsample(regions, torch.as_tensor(idx)[None], torch.as_tensor(w)[None]))
    ctx = torch.zeros(1, 4, 16, dtype=F64)
    for a in (0.1, 0.5, 0.93):
        per_point, _ = select_scales(torch.tensor([a], dtype=F64), out[0], out[1], ctx, ctx)
        assert torch.allclose(per_point, torch.full_like(per_point, 0.37), atol=1e-12)


def test_scale_gate_symmetric_and_bounded():
    torch.manual_seed(0)
    gate = ScaleGate(8).double()
    x = torch.rand(3, 8, 5, dtype=F64)
    assert torch.allclose(gate(x, x), torch.full((3,), 0.5, dtype=F64), atol=1e-15)
    alpha = gate(torch.rand(3, 8, 64, dtype=F64), torch.rand(3, 8, 128, dtype=F64) * 4)
    assert torch.all(alpha > 0) and torch.all(alpha < 1)


def test_select_shares_alpha_between_points_and_context():
    g = torch.Generator().manual_seed(0)
    pl, ps = torch.randn(2, 2, 3, 7, generator=g, dtype=F64)
    cl, cs = torch.randn(2, 2, 3, 16, generator=g, dtype=F64)
    alpha = torch.tensor([0.2, 0.9], dtype=F64)
    per_point, ctx = select_scales(alpha, pl, ps, cl, cs)
    for b, a in enumerate(alpha.tolist()):
        assert torch.allclose(per_point[b], a * pl[b] + (1 - a) * ps[b], atol=1e-15)
        assert torch.allclose(ctx[b], a * cl[b] + (1 - a) * cs[b], atol=1e-15)


def test_refine_without_propagation_returns_fused():
    torch.manual_seed(0)
    sel = PropagationSelection(4).double()
    fused = torch.randn(1, 4, 6, dtype=F64)
    assert sel.refine("large", fused, fused, torch.eye(6, dtype=F64)[None], False) is fused


def test_shared_gcn_option():
    sel = PropagationSelection(4, share_gcn=True)
    assert sel.gcn["large"] is sel.gcn["small"]
    assert PropagationSelection(4).gcn["large"] is not PropagationSelection(4).gcn["small"]


def test_end_to_end_gradient_through_reweight_gcn_select():
    torch.manual_seed(0)
    c, n = 8, 60
    sel = PropagationSelection(c).double()
    coords = np.random.default_rng(2).uniform(size=(n, 3))
    geo = {}
    for scale, m in (("large", 6), ("small", 12)):
        idx, w = interpolation_weights(coords, coords[:m])
        geo[scale] = (m, torch.as_tensor(idx)[None], torch.as_tensor(w)[None])
    g = torch.Generator().manual_seed(3)
    raw = {s: torch.randn(1, c, geo[s][0], generator=g, dtype=F64) for s in geo}
    graphs = {s: build_graph(raw[s])["normalized"] for s in geo}
    ctx = {s: torch.randn(1, c, 16, generator=g, dtype=F64) for s in geo}
    fused_small = torch.randn(1, c, 12, generator=g, dtype=F64)
    proj = projector((1, c, n))

    def fn(fused_large):
        refined = {"large": sel.refine("large", fused_large, raw["large"], graphs["large"]),
                   "small": sel.refine("small", fused_small, raw["small"], graphs["small"])}
        alpha = sel.gate(refined["large"], refined["small"])
        up = {s: upsample(refined[s], geo[s][1], geo[s][2]) for s in geo}
        per_point, _ = select_scales(alpha, up["large"], up["small"], ctx["large"], ctx["small"])
        return proj(per_point)

    x = torch.randn(1, c, 6, generator=g, dtype=F64)
    assert fd_relative_error(fn, x, generator=g) < 1e-4
