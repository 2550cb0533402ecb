"""Cascaded grounding -> classification heads and the training objective."""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

NUM_CLASSES = 17


@dataclass
class Prediction:
    mask: torch.Tensor  # B x N in [0, 1]
    mask_logits: torch.Tensor  # B x N
    class_logits: torch.Tensor  # B x 17
    class_probs: torch.Tensor  # B x 17


@dataclass
class LossReport:
    total: torch.Tensor
    grounding: torch.Tensor
    classification: torch.Tensor
    lambda_c: float

    def as_dict(self):
        return {"total": float(self.total), "grounding": float(self.grounding),
                "classification": float(self.classification), "lambda_c": self.lambda_c}


class MaskHead(nn.Module):
    """Pointwise two-layer MLP with sigmoid output."""

    def __init__(self, channels, hidden=None):
        super().__init__()
        hidden = hidden or max(channels // 4, 4)
        self.mlp = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(), nn.Linear(hidden, 1))

    def forward(self, per_point):
        logits = self.mlp(per_point.transpose(1, 2)).squeeze(-1)
        return torch.sigmoid(logits), logits


def pool_local(per_point, mask=None):
    """Average of mask-scaled point features (plain mean when ``mask`` is None)."""
    if mask is None:
        return per_point.mean(dim=2)
    return (per_point * mask.unsqueeze(1)).mean(dim=2)


class ClassHead(nn.Module):
    def __init__(self, channels, n_classes=NUM_CLASSES, hidden=None):
        super().__init__()
        hidden = hidden or max(channels // 2, 8)
        self.mlp = nn.Sequential(nn.Linear(2 * channels, hidden), nn.ReLU(),
                                 nn.Linear(hidden, n_classes))

    def features(self, context, per_point, mask, coupled=True):
        return torch.cat([context.mean(dim=2), pool_local(per_point, mask if coupled else None)],
                         dim=1)

    def forward(self, context, per_point, mask, coupled=True):
        logits = self.mlp(self.features(context, per_point, mask, coupled))
        return logits, logits.softmax(dim=-1)


def _check_unit_range(x, name):
    if not torch.isfinite(x).all() or x.min() < 0 or x.max() > 1:
        raise ValueError(f"{name} must lie in [0, 1]")


def focal_loss(pred, gt, gamma=2.0, alpha=0.25, eps=1e-6):
    """Binary focal loss with soft targets, averaged over all points."""
    p = pred.clamp(eps, 1 - eps)
    pos = -alpha * gt * (1 - p) ** gamma * torch.log(p)
    neg = -(1 - alpha) * (1 - gt) * p ** gamma * torch.log(1 - p)
    return (pos + neg).mean()


def dice_loss(pred, gt, smooth=1e-6):
    """Soft Dice loss; per-sample over the last axis, then averaged."""
    inter = (pred * gt).sum(dim=-1)
    denom = pred.sum(dim=-1) + gt.sum(dim=-1)
    return (1 - (2 * inter + smooth) / (denom + smooth)).mean()


def grounding_loss(pred_mask, gt_mask, gamma=2.0, alpha=0.25, smooth=1e-6, binarize=False):
    _check_unit_range(pred_mask, "predicted mask")
    _check_unit_range(gt_mask, "ground-truth mask")
    if binarize:
        gt_mask = (gt_mask >= 0.5).to(pred_mask.dtype)
    return focal_loss(pred_mask, gt_mask, gamma, alpha) + dice_loss(pred_mask, gt_mask, smooth)


def total_loss(pred, gt_mask, labels, lambda_c=0.3, binarize=False):
    grounding = grounding_loss(pred.mask, gt_mask, binarize=binarize)
    classification = F.cross_entropy(pred.class_logits, labels)
    return LossReport(grounding + lambda_c * classification, grounding, classification, lambda_c)
