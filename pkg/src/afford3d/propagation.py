"""Graph propagation over region features and soft scale selection."""

import torch
import torch.nn as nn
import torch.nn.functional as F


class ChannelReweight(nn.Module):
    """Pool the raw region features over regions, map to channel gates, scale the fused ones."""

    def __init__(self, channels):
        super().__init__()
        self.linear = nn.Linear(channels, channels)

    def gates(self, raw):
        return torch.sigmoid(self.linear(raw.mean(dim=2))).unsqueeze(-1)

    def forward(self, fused, raw):
        return fused * self.gates(raw)


class GraphPropagation(nn.Module):
    """R <- sigmoid(A_norm R W) applied ``layers`` times; features are B x C x M."""

    def __init__(self, channels, layers=2):
        super().__init__()
        if layers < 1:
            raise ValueError("need at least one propagation layer")
        self.weights = nn.ParameterList(
            [nn.Parameter(nn.init.xavier_uniform_(torch.empty(channels, channels)))
             for _ in range(layers)])

    def forward(self, init, normalized):
        return gcn_propagate(init, normalized, list(self.weights))


def gcn_propagate(init, normalized, weights):
    """Functional form: init B x C x M, normalized B x M x M, weights list of C x C."""
    if not torch.isfinite(normalized).all():
        raise ValueError("graph contains non-finite entries")
    if len(weights) < 1:
        raise ValueError("need at least one propagation layer")
    r = init.transpose(1, 2)
    for w in weights:
        r = torch.sigmoid(normalized @ r @ w)
    return r.transpose(1, 2)


def upsample(regions, idx, weights):
    """Interpolate B x C x M region features to B x C x N points.

    idx, weights: B x N x K neighbor centers and their inverse-distance weights.
    """
    b, c, m = regions.shape
    n, k = idx.shape[1:]
    gathered = regions.gather(2, idx.reshape(b, 1, n * k).expand(b, c, n * k)).view(b, c, n, k)
    # anchored at the nearest center: equal to sum_j w_j f_j when the weights sum to one,
    # and a constant field comes back exactly
    anchor = gathered[..., :1]
    w = weights.unsqueeze(1).to(regions.dtype)[..., 1:]
    return anchor[..., 0] + ((gathered[..., 1:] - anchor) * w).sum(dim=-1)


class ScaleGate(nn.Module):
    """Shared two-layer scorer; alpha = s_large / (s_large + s_small)."""

    eps = 1e-8

    def __init__(self, channels, hidden=None):
        super().__init__()
        hidden = hidden or max(channels // 4, 4)
        self.mlp = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(), nn.Linear(hidden, 1))

    def score(self, refined):
        return F.softplus(self.mlp(refined.mean(dim=2))).squeeze(-1) + self.eps

    def forward(self, refined_large, refined_small):
        a1, a2 = self.score(refined_large), self.score(refined_small)
        return a1 / (a1 + a2)


def select_scales(alpha, point_large, point_small, context_large, context_small):
    """Convex combination of the two scales with the same alpha for points and context."""
    a = alpha.view(-1, 1, 1)
    return a * point_large + (1 - a) * point_small, a * context_large + (1 - a) * context_small


class PropagationSelection(nn.Module):
    def __init__(self, channels, layers=2, share_gcn=False, scales=("large", "small")):
        super().__init__()
        self.scales = tuple(scales)
        self.reweight = nn.ModuleDict({s: ChannelReweight(channels) for s in self.scales})
        if share_gcn:
            shared = GraphPropagation(channels, layers)
            self.gcn = nn.ModuleDict({s: shared for s in self.scales})
        else:
            self.gcn = nn.ModuleDict({s: GraphPropagation(channels, layers) for s in self.scales})
        self.gate = ScaleGate(channels)

    def refine(self, scale, fused, raw, normalized, propagate=True):
        if not propagate:
            return fused
        return self.gcn[scale](self.reweight[scale](fused, raw), normalized)
