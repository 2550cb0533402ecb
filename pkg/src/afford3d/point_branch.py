"""Multi-scale region features and region similarity graphs."""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.spatial import cKDTree

SCALES = {"large": 64, "small": 128}
KNN = 16


def farthest_point_sample(coords, m, start=0):
    """Greedy max-min selection of ``m`` indices; ties go to the lowest index."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if m > n:
        raise ValueError(f"cannot sample {m} centers from {n} points")
    if not 0 <= start < n:
        raise IndexError(f"start index {start} out of range for {n} points")
    chosen = np.empty(m, dtype=np.int64)
    dist = np.full(n, np.inf)
    last = start
    for i in range(m):
        chosen[i] = last
        dist = np.minimum(dist, ((coords - coords[last]) ** 2).sum(axis=1))
        last = int(np.argmax(dist))
    return chosen


def assign_to_centers(coords, centers):
    """Index of the nearest center for every point (lowest index on ties)."""
    d = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d, axis=1)


def interpolation_weights(coords, centers, k=3):
    """Inverse-distance weights over the ``k`` nearest centers.

    Returns (idx (N, k), weights (N, k)); weights are nonnegative and sum to 1. A point
    lying exactly on a center puts all of its weight there.
    """
    coords = np.asarray(coords, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    k = min(k, centers.shape[0])
    d = np.sqrt(((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1))
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    dk = np.take_along_axis(d, idx, axis=1)
    hit = dk[:, 0] == 0
    with np.errstate(divide="ignore"):
        inv = 1.0 / dk
    inv[hit] = 0.0
    inv[hit, 0] = 1.0
    weights = inv / inv.sum(axis=1, keepdims=True)
    return idx, weights


@dataclass
class RegionGeometry:
    """Weight-independent region structure of one cloud at one scale."""
    center_idx: np.ndarray  # (M,)
    centers: np.ndarray  # (M, 3)
    assignment: np.ndarray  # (N,)
    interp_idx: np.ndarray  # (N, 3)
    interp_w: np.ndarray  # (N, 3)

    @property
    def m(self):
        return self.centers.shape[0]


@dataclass
class RegionSet:
    geometry: RegionGeometry
    features: torch.Tensor  # C x M
    scale: str

    @property
    def centers(self):
        return self.geometry.centers

    @property
    def assignment(self):
        return self.geometry.assignment


def region_geometry(coords, m, start=0):
    coords = np.asarray(coords, dtype=np.float64)
    idx = farthest_point_sample(coords, m, start)
    centers = coords[idx]
    interp_idx, interp_w = interpolation_weights(coords, centers)
    return RegionGeometry(idx, centers, assign_to_centers(coords, centers), interp_idx, interp_w)


def knn_indices(coords, k=KNN):
    coords = np.asarray(coords, dtype=np.float64)
    k = min(k, coords.shape[0])
    _, idx = cKDTree(coords).query(coords, k=k)
    return idx.reshape(coords.shape[0], k).astype(np.int64)


def _gather(x, idx):
    """x: B x N x D, idx: B x N x K -> B x N x K x D."""
    b, n, k = idx.shape
    flat = idx.reshape(b, n * k, 1).expand(b, n * k, x.shape[-1])
    return x.gather(1, flat).view(b, n, k, x.shape[-1])


class PointEncoder(nn.Module):
    """Two-level set-abstraction over k-NN neighborhoods; returns B x C x N."""

    def __init__(self, channels=512):
        super().__init__()
        h1, h2 = max(channels // 8, 16), max(channels // 4, 16)
        self.h1 = h1
        self.local1 = nn.Sequential(nn.Linear(6, h1), nn.ReLU(), nn.Linear(h1, h1), nn.ReLU())
        self.local2 = nn.Linear(h1 + 3, h2)
        self.head = nn.Linear(h2, channels)
        # per-cloud channel standardization; without it every region shares one dominant
        # direction and the cosine graph is fully connected
        self.norm = nn.InstanceNorm1d(channels, affine=True)

    def forward(self, coords, knn):
        nbr = _gather(coords, knn)
        center = coords.unsqueeze(2).expand_as(nbr)
        f1 = self.local1(torch.cat([nbr - center, center], dim=-1)).amax(dim=2)
        # local2([f_j, p_j - p_i]) with the shared per-point part computed once
        w_f, w_p = self.local2.weight[:, :self.h1], self.local2.weight[:, self.h1:]
        per_point = f1 @ w_f.T + coords @ w_p.T
        pre = _gather(per_point, knn) - (coords @ w_p.T).unsqueeze(2) + self.local2.bias
        f2 = torch.relu(pre).amax(dim=2)
        return self.norm(self.head(f2).transpose(1, 2))


def region_pool(point_feats, assignment, m):
    """Max-pool B x C x N point features into B x C x M regions."""
    b, c, n = point_feats.shape
    index = assignment.unsqueeze(1).expand(b, c, n)
    out = point_feats.new_zeros(b, c, m)
    return out.scatter_reduce(2, index, point_feats, reduce="amax", include_self=False)


def build_graph(features):
    """Cosine-similarity region graph.

    features: B x C x M. Returns raw (B x M x M inner products of L2-normalized columns),
    adjacency ReLU(raw) + I, and normalized D^-1/2 A D^-1/2.
    """
    unit = F.normalize(features, dim=1, eps=1e-12)
    raw = unit.transpose(1, 2) @ unit
    raw = 0.5 * (raw + raw.transpose(1, 2))
    eye = torch.eye(raw.shape[-1], dtype=raw.dtype, device=raw.device)
    adjacency = torch.relu(raw) + eye
    d = adjacency.sum(dim=-1).rsqrt()
    # the outer product commutes elementwise, so the result is exactly symmetric
    normalized = (d.unsqueeze(-1) * d.unsqueeze(-2)) * adjacency
    return {"raw": raw, "adjacency": adjacency, "normalized": normalized}


class PointBranch(nn.Module):
    def __init__(self, channels=512):
        super().__init__()
        self.encoder = PointEncoder(channels)

    def forward(self, coords, knn, assignments):
        """assignments: {scale: (B x N long, M)}; returns point features and per-scale regions."""
        point_feats = self.encoder(coords, knn)
        out = {"point_feats": point_feats}
        for scale, (assign, m) in assignments.items():
            feats = region_pool(point_feats, assign, m)
            out[f"regions_{scale}"] = feats
            out[f"graph_{scale}"] = build_graph(feats)
        return out


def extract_regions(cloud, scale, encoder, start=0, knn=KNN):
    """RegionSet for one cloud at scale 'large' (64 regions) or 'small' (128 regions)."""
    coords = np.asarray(cloud.coords, dtype=np.float64)
    geom = region_geometry(coords, SCALES[scale], start)
    dtype = next(encoder.parameters()).dtype
    x = torch.as_tensor(coords, dtype=dtype)[None]
    nbr = torch.as_tensor(knn_indices(coords, knn))[None]
    point_feats = encoder(x, nbr)
    feats = region_pool(point_feats, torch.as_tensor(geom.assignment)[None], geom.m)[0]
    return RegionSet(geom, feats, scale)
