"""End-to-end network: image context, region features, fusion, propagation, heads."""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .fusion import CrossModalFusion
from .heads import NUM_CLASSES, ClassHead, MaskHead, Prediction
from .image_branch import EMBED_GRID, ImageBranch, scene_weight
from .point_branch import KNN, PointBranch, knn_indices, region_geometry
from .propagation import PropagationSelection, select_scales, upsample


@dataclass(frozen=True)
class Wiring:
    """Which contributions are active. All False gives the 'Blind' variant."""
    multi_scale: bool = True  # msi
    propagate: bool = True  # gfpm
    coupled_heads: bool = True  # cgc
    scene_gate: bool = True  # sg

    @property
    def is_blind(self):
        return not (self.multi_scale or self.propagate or self.coupled_heads or self.scene_gate)


@dataclass
class CloudGeometry:
    knn: np.ndarray
    scales: dict  # name -> RegionGeometry


def prepare_geometry(coords, scale_sizes=(64, 128), knn=KNN, start=0):
    coords = np.asarray(coords, dtype=np.float64)
    large, small = scale_sizes
    return CloudGeometry(
        knn=knn_indices(coords, knn),
        scales={"large": region_geometry(coords, large, start),
                "small": region_geometry(coords, small, start)},
    )


@dataclass
class Batch:
    pixels: torch.Tensor
    box_object: torch.Tensor
    box_subject: torch.Tensor
    scene_w: torch.Tensor
    coords: torch.Tensor
    knn: torch.Tensor
    regions: dict  # scale -> dict(assign, idx, w, m)
    gt_mask: torch.Tensor = None
    labels: torch.Tensor = None

    def __len__(self):
        return self.coords.shape[0]


def _image_tensor(image, resize_to, dtype):
    px = torch.as_tensor(np.asarray(image.pixels), dtype=dtype)[None]
    if min(px.shape[-2:]) == 0:
        raise ValueError("degenerate image")
    if tuple(px.shape[-2:]) != (resize_to, resize_to):
        px = F.interpolate(px, size=(resize_to, resize_to), mode="bilinear", align_corners=False)
    return px[0]


def _box_fraction(box, image):
    x0, y0, x1, y1 = box
    return [x0 / image.width, y0 / image.height, x1 / image.width, y1 / image.height]


def collate(items, resize_to, dtype=torch.float32, grid=EMBED_GRID):
    """items: list of (cloud, image, geometry, gt_mask or None, label or None)."""
    pixels, box_o, box_s, scene, coords, knn = [], [], [], [], [], []
    regions = {k: {"assign": [], "idx": [], "w": [], "m": None} for k in ("large", "small")}
    masks, labels = [], []
    for cloud, image, geom, gt, label in items:
        pixels.append(_image_tensor(image, resize_to, dtype))
        box_o.append(_box_fraction(image.box_object, image))
        box_s.append(_box_fraction(image.box_subject, image))
        scene.append(scene_weight(image.scene_mask, grid).to(dtype))
        coords.append(torch.as_tensor(np.asarray(cloud.coords), dtype=dtype))
        knn.append(torch.as_tensor(geom.knn))
        for name, g in geom.scales.items():
            regions[name]["assign"].append(torch.as_tensor(g.assignment))
            regions[name]["idx"].append(torch.as_tensor(g.interp_idx))
            regions[name]["w"].append(torch.as_tensor(g.interp_w, dtype=dtype))
            regions[name]["m"] = g.m
        if gt is not None:
            masks.append(torch.as_tensor(np.asarray(gt), dtype=dtype))
        if label is not None:
            labels.append(int(label))
    regions = {name: {"assign": torch.stack(r["assign"]), "idx": torch.stack(r["idx"]),
                      "w": torch.stack(r["w"]), "m": r["m"]} for name, r in regions.items()}
    return Batch(
        pixels=torch.stack(pixels),
        box_object=torch.tensor(box_o, dtype=dtype),
        box_subject=torch.tensor(box_s, dtype=dtype),
        scene_w=torch.stack(scene),
        coords=torch.stack(coords),
        knn=torch.stack(knn),
        regions=regions,
        gt_mask=torch.stack(masks) if masks else None,
        labels=torch.tensor(labels, dtype=torch.long) if labels else None,
    )


class AffordanceNet(nn.Module):
    """Every sub-module is built regardless of wiring so that parameter initialization
    under a fixed seed does not depend on the ablation flags."""

    def __init__(self, channels=512, heads=4, gcn_layers=2, residual=True, share_gcn=False,
                 resize_to=224, n_classes=NUM_CLASSES, wiring=Wiring()):
        super().__init__()
        self.wiring = wiring
        self.channels = channels
        self.image = ImageBranch(channels, heads, resize_to)
        self.points = PointBranch(channels)
        self.fusion = CrossModalFusion(channels, heads, residual)
        self.propagation = PropagationSelection(channels, gcn_layers, share_gcn)
        self.mask_head = MaskHead(channels)
        self.class_head = ClassHead(channels, n_classes)

    @property
    def resize_to(self):
        return self.image.resize_to

    def forward(self, batch, return_activations=False):
        w = self.wiring
        acts = {}
        img = self.image(batch.pixels, batch.box_object, batch.box_subject, batch.scene_w,
                         gated=w.scene_gate)
        acts.update(img)

        scales = ("large", "small") if w.multi_scale else ("small",)
        assign = {s: (batch.regions[s]["assign"], batch.regions[s]["m"]) for s in scales}
        pts = self.points(batch.coords, batch.knn, assign)
        acts.update(pts)

        regions = {s: pts[f"regions_{s}"] for s in scales}
        fused = self.fusion(img["f_context"], regions)
        acts.update(fused_large=fused.region_large, fused_small=fused.region_small,
                    context_large=fused.context_large, context_small=fused.context_small)

        up = {}
        for s in scales:
            refined = self.propagation.refine(
                s, getattr(fused, f"region_{s}"), regions[s], pts[f"graph_{s}"]["normalized"],
                propagate=w.propagate)
            acts[f"refined_{s}"] = refined
            up[s] = upsample(refined, batch.regions[s]["idx"], batch.regions[s]["w"])

        if w.multi_scale:
            alpha = self.propagation.gate(acts["refined_large"], acts["refined_small"])
            per_point, context = select_scales(alpha, up["large"], up["small"],
                                               fused.context_large, fused.context_small)
        else:
            alpha = None
            per_point, context = up["small"], fused.context_small
        acts.update(alpha=alpha, per_point=per_point, context_final=context)

        mask, mask_logits = self.mask_head(per_point)
        class_in = self.class_head.features(context, per_point, mask, w.coupled_heads)
        logits = self.class_head.mlp(class_in)
        acts.update(mask=mask, class_input=class_in, class_logits=logits)
        pred = Prediction(mask, mask_logits, logits, logits.softmax(dim=-1))
        return (pred, acts) if return_activations else pred
