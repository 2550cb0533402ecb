"""2D context-aware affordance feature: encoder, ROI-align, entity attention, scene gate."""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import CrossAttention

EMBED_GRID = 7
ROI_SIZE = 4


class ImageEncoder(nn.Module):
    """Compact strided conv stack, adaptively pooled to C x 7 x 7."""

    kernel, stride, padding = 3, 2, 1

    def __init__(self, channels=512, grid=EMBED_GRID):
        super().__init__()
        widths = [3, max(channels // 16, 8), max(channels // 8, 8), max(channels // 4, 8), channels]
        layers = []
        for i, (cin, cout) in enumerate(zip(widths[:-1], widths[1:])):
            layers.append(nn.Conv2d(cin, cout, self.kernel, self.stride, self.padding))
            if i < len(widths) - 2:
                layers.append(nn.ReLU())
        self.body = nn.Sequential(*layers)
        self.n_convs = len(widths) - 1
        self.grid = grid

    def forward(self, pixels, resize_to=None):
        if pixels.shape[-1] == 0 or pixels.shape[-2] == 0:
            raise ValueError(f"degenerate image of shape {tuple(pixels.shape)}")
        if resize_to is not None and tuple(pixels.shape[-2:]) != (resize_to, resize_to):
            pixels = F.interpolate(pixels, size=(resize_to, resize_to), mode="bilinear",
                                   align_corners=False)
        return F.adaptive_avg_pool2d(self.body(pixels), self.grid)

    def feature_size(self, size):
        for _ in range(self.n_convs):
            size = (size + 2 * self.padding - self.kernel) // self.stride + 1
        return size

    def receptive_field(self, row, col, size):
        """Inclusive pixel ranges ((r0, r1), (c0, c1)) that can affect output cell (row, col)."""
        last = self.feature_size(size)

        def span(i):
            lo = (i * last) // self.grid
            hi = -((-(i + 1) * last) // self.grid) - 1
            for _ in range(self.n_convs):
                lo = lo * self.stride - self.padding
                hi = hi * self.stride - self.padding + self.kernel - 1
            return max(lo, 0), min(hi, size - 1)

        return span(row), span(col)


def encode_image(encoder, image, resize_to=224):
    """Embed one InteractionImage; returns a C x 7 x 7 tensor."""
    pixels = torch.as_tensor(np.asarray(image.pixels), dtype=next(encoder.parameters()).dtype)
    if pixels.ndim != 3 or min(pixels.shape[1:]) == 0:
        raise ValueError(f"degenerate image of shape {tuple(pixels.shape)}")
    return encoder(pixels[None], resize_to)[0]


def boxes_to_grid(boxes, grid_h, grid_w, min_size=1.0):
    """Map boxes given as image fractions (x0, y0, x1, y1) onto continuous grid coordinates.

    Cell (i, j) is centered at integer coordinate (i, j). Boxes narrower than
    ``min_size`` cells are widened symmetrically about their center.
    """
    x0 = boxes[:, 0] * grid_w - 0.5
    x1 = boxes[:, 2] * grid_w - 0.5
    y0 = boxes[:, 1] * grid_h - 0.5
    y1 = boxes[:, 3] * grid_h - 0.5
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    half_w = torch.clamp(x1 - x0, min=min_size) / 2
    half_h = torch.clamp(y1 - y0, min=min_size) / 2
    return torch.stack([cx - half_w, cy - half_h, cx + half_w, cy + half_h], dim=1)


def _bilinear(feat, ys, xs):
    """Sample B x C x H x W at per-batch coordinates ys, xs (B x P) with border clamping."""
    b, c, h, w = feat.shape
    ys = ys.clamp(0, h - 1)
    xs = xs.clamp(0, w - 1)
    y0 = ys.floor().long().clamp(max=h - 1)
    x0 = xs.floor().long().clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)
    x1 = (x0 + 1).clamp(max=w - 1)
    ly, lx = (ys - y0).unsqueeze(1), (xs - x0).unsqueeze(1)
    flat = feat.reshape(b, c, h * w)

    def at(yi, xi):
        idx = (yi * w + xi).unsqueeze(1).expand(b, c, yi.shape[1])
        return flat.gather(2, idx)

    return ((1 - ly) * (1 - lx) * at(y0, x0) + (1 - ly) * lx * at(y0, x1)
            + ly * (1 - lx) * at(y1, x0) + ly * lx * at(y1, x1))


def roi_align(feat, boxes, output_size=ROI_SIZE, sampling_ratio=2):
    """Bilinear ROI-align.

    feat: B x C x H x W; boxes: B x 4 grid coordinates (x0, y0, x1, y1).
    Each of the output_size**2 bins averages sampling_ratio**2 bilinear samples placed
    uniformly inside the bin. Returns B x C x output_size x output_size.
    """
    b, c = feat.shape[:2]
    s, r = output_size, sampling_ratio
    steps = (torch.arange(s * r, dtype=feat.dtype) + 0.5) / (s * r)
    x0, y0, x1, y1 = (boxes[:, i:i + 1] for i in range(4))
    xs = x0 + steps * (x1 - x0)  # B x (s*r)
    ys = y0 + steps * (y1 - y0)
    grid_y = ys[:, :, None].expand(b, s * r, s * r).reshape(b, -1)
    grid_x = xs[:, None, :].expand(b, s * r, s * r).reshape(b, -1)
    vals = _bilinear(feat, grid_y, grid_x).view(b, c, s, r, s, r)
    return vals.mean(dim=(3, 5))


def scene_weight(scene_mask, grid=EMBED_GRID):
    """Area-average a H x W scene mask down to the embedding grid."""
    mask = torch.as_tensor(np.asarray(scene_mask), dtype=torch.float64)
    return F.adaptive_avg_pool2d(mask[None, None], grid)[0]


class ImageBranch(nn.Module):
    """Image -> context-aware affordance feature (B x C x 16)."""

    def __init__(self, channels=512, heads=4, resize_to=224):
        super().__init__()
        self.resize_to = resize_to
        self.encoder = ImageEncoder(channels)
        self.entity_attn = CrossAttention(channels, heads)
        self.scene_attn = CrossAttention(channels, heads)
        self.gate = nn.Linear(channels, channels)
        self.fuse = nn.Linear(channels, channels)

    def roi_pool(self, embed, box_object, box_subject, scene_w):
        """Pool object, subject and mask-weighted scene features to B x C x 16 each."""
        b = embed.shape[0]
        h, w = embed.shape[-2:]
        full = embed.new_tensor([[0.0, 0.0, 1.0, 1.0]]).expand(b, 4)

        def pool(feat, boxes):
            return roi_align(feat, boxes_to_grid(boxes, h, w)).flatten(2)

        return {
            "f_object": pool(embed, box_object),
            "f_subject": pool(embed, box_subject),
            "f_scene": pool(embed * scene_w.to(embed.dtype), full),
        }

    def fuse_entities(self, f_object, f_subject, f_scene):
        return self.entity_attn(f_object, f_subject), self.scene_attn(f_object, f_scene)

    def scene_gate(self, f_e, f_s, gated=True):
        if gated:
            g = torch.sigmoid(self.gate(f_s.transpose(1, 2))).transpose(1, 2)
            mixed = f_e + g * f_s
        else:
            mixed = f_e + f_s
        return torch.relu(self.fuse(mixed.transpose(1, 2))).transpose(1, 2)

    def forward(self, pixels, box_object, box_subject, scene_w, gated=True):
        embed = self.encoder(pixels, self.resize_to)
        ents = self.roi_pool(embed, box_object, box_subject, scene_w)
        f_e, f_s = self.fuse_entities(ents["f_object"], ents["f_subject"], ents["f_scene"])
        f_i = self.scene_gate(f_e, f_s, gated)
        return dict(embed=embed, **ents, f_e=f_e, f_s=f_s, f_context=f_i)


def gate_values(branch, f_s):
    """Scene-gate activations in (0, 1), B x C x 16."""
    return torch.sigmoid(branch.gate(f_s.transpose(1, 2))).transpose(1, 2)


__all__ = ["ImageEncoder", "ImageBranch", "encode_image", "roi_align", "boxes_to_grid",
           "scene_weight", "gate_values", "EMBED_GRID", "ROI_SIZE"]
