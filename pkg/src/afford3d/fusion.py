"""Cross-modal fusion between the image context tokens and the region features."""

from dataclasses import dataclass

import torch.nn as nn

from .attention import CrossAttention


@dataclass
class FusedFeatures:
    region_large: object  # B x C x 64, None when single-scale
    region_small: object  # B x C x 128
    context_large: object  # B x C x 16
    context_small: object  # B x C x 16


class CrossModalFusion(nn.Module):
    """Regions attend to context tokens, then context tokens attend to fused regions.

    Each scale has its own pair of attention blocks; residual connections add each
    query to its attention output.
    """

    def __init__(self, channels=512, heads=4, residual=True, scales=("large", "small")):
        super().__init__()
        self.scales = tuple(scales)
        self.to_region = nn.ModuleDict(
            {s: CrossAttention(channels, heads, residual) for s in self.scales})
        self.to_context = nn.ModuleDict(
            {s: CrossAttention(channels, heads, residual) for s in self.scales})

    def fuse_scale(self, scale, context, regions):
        fused = self.to_region[scale](regions, context)
        return fused, self.to_context[scale](context, fused)

    def forward(self, context, regions):
        """context: B x C x 16; regions: {scale: B x C x M}. Returns FusedFeatures."""
        out = {}
        for scale in self.scales:
            if regions.get(scale) is None:
                out[scale] = (None, None)
                continue
            out[scale] = self.fuse_scale(scale, context, regions[scale])
        large, small = out.get("large", (None, None)), out.get("small", (None, None))
        return FusedFeatures(large[0], small[0], large[1], small[1])
