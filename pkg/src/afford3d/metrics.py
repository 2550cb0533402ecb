"""Point-wise grounding metrics (AUC, aIoU, SIM, MAE) and classification accuracy.

Ground-truth masks are binarized at 0.5 for AUC and aIoU. Samples whose binarized
ground truth is degenerate are skipped for those metrics and counted in the report.
"""

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

GT_THRESHOLD = 0.5
IOU_THRESHOLDS = np.arange(1, 100) / 100.0


def _flat(x):
    return np.asarray(x, dtype=np.float64).ravel()


def auc(pred, gt):
    """ROC area in percent from a sweep over all distinct prediction values.

    Returns NaN when the binarized ground truth is all-positive or all-negative.
    """
    pred, gt = _flat(pred), _flat(gt)
    pos = gt >= GT_THRESHOLD
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    order = np.argsort(-pred, kind="mergesort")
    p_sorted, y_sorted = pred[order], pos[order]
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(p_sorted))[0], p_sorted.size - 1]
    tps = np.cumsum(y_sorted)[ends]
    fps = (ends + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2) * 100.0)


def iou_at(pred, gt, threshold):
    pred, gt = _flat(pred), _flat(gt)
    p = pred >= threshold
    g = gt >= GT_THRESHOLD
    tp = np.sum(p & g)
    union = np.sum(p | g)
    return float(tp / union) if union else float("nan")


def aiou(pred, gt, thresholds=IOU_THRESHOLDS):
    """IoU in percent averaged over prediction thresholds 0.01 .. 0.99.

    NaN when the ground truth has no foreground.
    """
    pred, gt = _flat(pred), _flat(gt)
    g = gt >= GT_THRESHOLD
    if not g.any():
        return float("nan")
    p = pred[None, :] >= np.asarray(thresholds)[:, None]
    tp = (p & g).sum(axis=1)
    union = (p | g).sum(axis=1)
    return float(np.mean(tp / union) * 100.0)


def sim(pred, gt):
    """Histogram intersection of the two maps after each is normalized to sum 1."""
    pred, gt = _flat(pred), _flat(gt)
    if (pred < 0).any() or (gt < 0).any():
        raise ValueError("SIM needs nonnegative maps")
    sp, sg = pred.sum(), gt.sum()
    if sp <= 0 or sg <= 0:
        raise ValueError("SIM is undefined for an all-zero map")
    return float(np.minimum(pred / sp, gt / sg).sum())


def mae(pred, gt):
    pred, gt = _flat(pred), _flat(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.abs(pred - gt)))


def acc(pred_labels, gt_labels):
    pred_labels, gt_labels = np.asarray(pred_labels), np.asarray(gt_labels)
    if pred_labels.size == 0:
        raise ValueError("accuracy of an empty label list is undefined")
    if pred_labels.shape != gt_labels.shape:
        raise ValueError("label lists differ in length")
    return float(np.mean(pred_labels == gt_labels) * 100.0)


@dataclass
class MetricReport:
    auc: float
    aiou: float
    sim: float
    mae: float
    acc: float
    aiou_threshold_avg: float
    aiou_sample_avg: float
    n_samples: int
    n_skipped_auc: int
    n_skipped_aiou: int
    n_skipped_sim: int

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def write(self, path, echo=True):
        text = self.to_text()
        Path(path).write_text(text)
        if echo:
            print(text, end="")
        return path


def _mean(values):
    values = [v for v in values if not np.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


def evaluate_predictions(pred_masks, gt_masks, pred_labels, gt_labels):
    """Average per-sample metrics over non-skipped samples."""
    if len(pred_masks) != len(gt_masks):
        raise ValueError("prediction and ground-truth counts differ")
    aucs = [auc(p, g) for p, g in zip(pred_masks, gt_masks)]
    aious = [aiou(p, g) for p, g in zip(pred_masks, gt_masks)]
    ious_half = [iou_at(p, g, 0.5) * 100.0 if (_flat(g) >= GT_THRESHOLD).any() else float("nan")
                 for p, g in zip(pred_masks, gt_masks)]
    sims = []
    for p, g in zip(pred_masks, gt_masks):
        try:
            sims.append(sim(p, g))
        except ValueError:
            sims.append(float("nan"))
    aiou_avg = _mean(aious)
    return MetricReport(
        auc=_mean(aucs),
        aiou=aiou_avg,
        sim=_mean(sims),
        mae=_mean([mae(p, g) for p, g in zip(pred_masks, gt_masks)]),
        acc=acc(pred_labels, gt_labels),
        aiou_threshold_avg=aiou_avg,
        aiou_sample_avg=_mean(ious_half),
        n_samples=len(pred_masks),
        n_skipped_auc=int(np.sum(np.isnan(aucs))),
        n_skipped_aiou=int(np.sum(np.isnan(aious))),
        n_skipped_sim=int(np.sum(np.isnan(sims))),
    )
