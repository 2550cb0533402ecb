"""Training loop, checkpoints, evaluation driver and prediction export."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..data import AFFORDANCES, pair_for_training, write_ply
from ..heads import total_loss
from ..metrics import evaluate_predictions
from ..model import AffordanceNet, collate, prepare_geometry
from .config import TrainConfig, apply_ablation

log = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    pass


class VocabularyMismatchError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_state: dict
    optimizer_state: dict
    epoch: int
    config: dict
    seed: int
    affordances: tuple = AFFORDANCES
    loss_trace: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def train_config(self):
        return TrainConfig(**self.config)

    def save(self, path):
        torch.save(self.__dict__, path)
        return path

    @classmethod
    def load(cls, path):
        return cls(**torch.load(path, weights_only=False))

    def build_model(self):
        model = build_model(self.train_config, n_classes=len(self.affordances))
        model.load_state_dict(self.model_state)
        return model.eval()


def build_model(config, n_classes=len(AFFORDANCES)):
    torch.manual_seed(config.seed)
    return AffordanceNet(
        channels=config.channels, heads=config.heads, gcn_layers=config.gcn_layers,
        residual=config.residual, share_gcn=config.share_gcn, resize_to=config.resize_to,
        n_classes=n_classes, wiring=apply_ablation(config),
    )


class GeometryCache:
    """Per-cloud FPS / neighborhood / interpolation structure, computed once."""

    def __init__(self, config):
        self.scale_sizes, self.knn = config.scale_sizes, config.knn
        self._cache = {}

    def __call__(self, sample):
        key = sample.cloud_id or id(sample.cloud)
        if key not in self._cache:
            self._cache[key] = prepare_geometry(sample.cloud.coords, self.scale_sizes, self.knn)
        return self._cache[key]

    def for_cloud(self, cloud):
        return prepare_geometry(cloud.coords, self.scale_sizes, self.knn)


def _dump_batch(out_dir, step, batch_ids, report):
    if out_dir is None:
        return None
    path = Path(out_dir) / f"nonfinite_step{step}.txt"
    path.write_text(f"step={step}\nsamples={','.join(batch_ids)}\n"
                    f"grounding={report.grounding.item()}\n"
                    f"classification={report.classification.item()}\n")
    return path


def train(config, split, out_dir=None, eval_split=None, on_epoch=None):
    """Optimize the full network on ``split.train``; returns the final Checkpoint."""
    if not split.train:
        raise ValueError("training split is empty")
    model = build_model(config, n_classes=len(split.affordances))
    optim = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    sched = None
    if config.cosine_decay:
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(optim, T_max=config.epochs)
    geometry = GeometryCache(config)
    order_gen = torch.Generator().manual_seed(config.seed)
    eval_samples = (eval_split.test if eval_split is not None else split.test)
    loss_trace, history = [], []
    step = 0
    for epoch in range(config.epochs):
        model.train()
        pairs = pair_for_training(split, seed=config.seed, epoch=epoch)
        order = torch.randperm(len(pairs), generator=order_gen).tolist()
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [pairs[i] for i in order[start:start + config.batch_size]]
            batch = collate([(s.cloud, img, geometry(s), s.gt_mask, s.label) for s, img in chunk],
                            config.resize_to)
            pred = model(batch)
            report = total_loss(pred, batch.gt_mask, batch.labels, config.lambda_c,
                                binarize=config.binarize_gt)
            if not torch.isfinite(report.total):
                ids = [s.sample_id for s, _ in chunk]
                dump = _dump_batch(out_dir, step, ids, report)
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} step {step} (batch {ids}); dump: {dump}")
            optim.zero_grad()
            report.total.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optim.step()
            loss_trace.append(report.total.item())
            epoch_losses.append(report.total.item())
            step += 1
        if sched is not None:
            sched.step()
        entry = {"epoch": epoch + 1, "loss": float(np.mean(epoch_losses))}
        if eval_samples and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            rep = evaluate_model(model, eval_samples, config, geometry)
            entry.update({k: getattr(rep, k) for k in ("auc", "aiou", "sim", "mae", "acc")})
        history.append(entry)
        log.info("epoch %d %s", epoch + 1,
                 " ".join(f"{k}={v:.4f}" for k, v in entry.items() if k != "epoch"))
        # a callback returning True ends training after this epoch
        if on_epoch is not None and on_epoch(entry, model):
            break
    ckpt = Checkpoint(
        model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
        optimizer_state=optim.state_dict(),
        epoch=len(history),
        config=config.to_dict(),
        seed=config.seed,
        affordances=tuple(split.affordances),
        loss_trace=loss_trace,
        history=history,
    )
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        ckpt.save(Path(out_dir) / "checkpoint.pt")
    return ckpt


@torch.no_grad()
def predict(model, samples, config, geometry=None, batch_size=None):
    """Returns (masks list of (N,) arrays, class-probability array (S, classes))."""
    model.eval()
    geometry = geometry or GeometryCache(config)
    batch_size = batch_size or config.batch_size
    masks, probs = [], []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        batch = collate([(s.cloud, s.image, geometry(s), None, None) for s in chunk],
                        config.resize_to)
        pred = model(batch)
        masks.extend(pred.mask.double().numpy())
        probs.append(pred.class_probs.double().numpy())
    return masks, np.concatenate(probs) if probs else np.zeros((0, 0))


def evaluate_model(model, samples, config, geometry=None):
    masks, probs = predict(model, samples, config, geometry)
    return evaluate_predictions(masks, [s.gt_mask for s in samples], probs.argmax(axis=1),
                                [int(s.label) for s in samples])


def evaluate(ckpt, split, samples=None):
    """Score a checkpoint on ``split.test`` (or the explicit ``samples``)."""
    if tuple(ckpt.affordances) != tuple(split.affordances):
        raise VocabularyMismatchError(
            f"checkpoint has {len(ckpt.affordances)} affordance classes, "
            f"split has {len(split.affordances)}")
    samples = split.test if samples is None else samples
    if not samples:
        raise ValueError("nothing to evaluate")
    return evaluate_model(ckpt.build_model(), list(samples), ckpt.train_config)


def mask_colors(mask):
    mask = np.asarray(mask, dtype=np.float64)
    red = np.rint(255 * mask).astype(np.int64)
    blue = np.rint(255 * (1 - mask)).astype(np.int64)
    return np.stack([red, np.zeros_like(red), blue], axis=1)


def export_prediction(ckpt, cloud, image, out_path):
    """Write a colored PLY of the predicted mask plus a ``label=<class>`` sidecar."""
    out_path = Path(out_path)
    if not out_path.parent.is_dir():
        raise OSError(f"cannot write to {out_path}: directory does not exist")
    config = ckpt.train_config
    model = ckpt.build_model()
    geom = GeometryCache(config).for_cloud(cloud)
    with torch.no_grad():
        pred = model(collate([(cloud, image, geom, None, None)], config.resize_to))
    mask = pred.mask[0].double().numpy()
    label = int(pred.class_probs[0].argmax())
    write_ply(out_path, cloud.coords, mask_colors(mask))
    sidecar = out_path.with_suffix(".label")
    sidecar.write_text(f"label={label}\naffordance={ckpt.affordances[label]}\n")
    return out_path, sidecar, mask, label


def sweep_lambda(config, split, values=(0.1, 0.3, 0.5, 0.7), out_dir=None):
    """Train and evaluate once per lambda_c; returns {lambda_c: MetricReport}."""
    results = {}
    for lam in values:
        sub = None if out_dir is None else Path(out_dir) / f"lambda_{lam:g}"
        ckpt = train(config.with_overrides(lambda_c=float(lam)), split, out_dir=sub)
        samples = split.test or split.train
        results[lam] = evaluate(ckpt, split, samples)
        log.info("lambda_c=%g auc=%.2f aiou=%.2f acc=%.2f", lam, results[lam].auc,
                 results[lam].aiou, results[lam].acc)
    return results


__all__ = ["Checkpoint", "build_model", "train", "evaluate", "predict", "export_prediction",
           "sweep_lambda", "NonFiniteLossError", "VocabularyMismatchError"]
