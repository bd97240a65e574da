"""Mini-batch SGD with Nesterov momentum, and top-k evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import SkeletonDataset
from .layers import ModelConfig, STGCN

log = logging.getLogger(__name__)


class TrainingDivergedError(ArithmeticError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 50
    seed: int = 0
    lr_schedule: str = "step"  # "step" or "fixed"
    lr_decay_factor: float = 0.1
    lr_decay_epochs: tuple[int, ...] | None = None  # default: 50% and 75% of epochs

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")
        if self.lr_schedule not in ("step", "fixed"):
            raise ValueError(f"lr_schedule must be 'step' or 'fixed', got {self.lr_schedule!r}")
        if self.lr_decay_epochs is not None:
            self.lr_decay_epochs = tuple(int(e) for e in self.lr_decay_epochs)

    def decay_epochs(self) -> tuple[int, ...]:
        if self.lr_decay_epochs is not None:
            return self.lr_decay_epochs
        return (self.epochs // 2, (3 * self.epochs) // 4)

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "fixed":
            return self.learning_rate
        drops = sum(epoch >= e for e in self.decay_epochs())
        return self.learning_rate * self.lr_decay_factor**drops


class NesterovSGD:
    """``v <- mu v - lr (g + wd p);  p <- p + mu v - lr (g + wd p)``."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 1e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
        mu, wd = self.momentum, self.weight_decay
        out = {}
        for name, p in params.items():
            d = grads[name] + wd * p
            v = mu * self.velocity.get(name, np.zeros_like(p)) - lr * d
            self.velocity[name] = v
            out[name] = p + mu * v - lr * d
        return out


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    loss: float
    train_accuracy: float


def train(model: STGCN | ModelConfig, dataset: SkeletonDataset, cfg: TrainConfig,
          params: dict[str, np.ndarray] | None = None) -> tuple[dict[str, np.ndarray], list[EpochRecord]]:
    """Run ``cfg.epochs`` epochs; returns final parameters and per-epoch history."""
    if not isinstance(model, STGCN):
        model = STGCN(model)
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    params = model.init_params() if params is None else {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    model.check_params(params)
    opt = NesterovSGD(cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(dataset))
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            labels = dataset.labels[idx]
            loss, probs, grads = model.loss_and_grads(params, dataset.features[idx], labels)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, b, loss)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=-1) == labels))
            params = opt.step(params, grads, lr)
        rec = EpochRecord(epoch, lr, loss_sum / len(dataset), correct / len(dataset))
        log.debug("epoch %d lr %.4g loss %.6f acc %.3f", epoch, lr, rec.loss, rec.train_accuracy)
        history.append(rec)
    return params, history


def format_history(history: list[EpochRecord]) -> str:
    lines = ["epoch,learning_rate,loss,train_accuracy"]
    lines += [f"{r.epoch},{r.learning_rate!r},{r.loss!r},{r.train_accuracy!r}" for r in history]
    return "\n".join(lines) + "\n"


# -- evaluation ---------------------------------------------------------------------

@dataclass
class EvalReport:
    top1: float
    top5: float
    support: np.ndarray  # samples per true class
    correct: np.ndarray  # top-1 hits per true class
    confusion: np.ndarray = field(repr=False)  # [true, predicted]

    def format(self) -> str:
        lines = [f"samples {int(self.support.sum())}", f"top1 {self.top1:.6f}", f"top5 {self.top5:.6f}",
                 "class,support,correct"]
        lines += [f"{c},{int(s)},{int(k)}" for c, (s, k) in enumerate(zip(self.support, self.correct))]
        lines.append("confusion (rows = true class, columns = predicted)")
        lines += [" ".join(str(int(v)) for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"


def rank_classes(probs: np.ndarray) -> np.ndarray:
    """Class indices by decreasing probability; equal probabilities keep the lower index first."""
    return np.argsort(-np.asarray(probs), axis=-1, kind="stable")


def report_from_probabilities(probs: np.ndarray, labels: np.ndarray, class_count: int) -> EvalReport:
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, class_count)
    labels = np.asarray(labels, dtype=np.int64)
    ranked = rank_classes(probs)
    top1_hit = ranked[:, 0] == labels
    top5_hit = np.any(ranked[:, :5] == labels[:, None], axis=1)
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (labels, ranked[:, 0]), 1)
    n = max(len(labels), 1)
    return EvalReport(
        top1=float(top1_hit.sum() / n),
        top5=float(top5_hit.sum() / n),
        support=np.bincount(labels, minlength=class_count),
        correct=np.bincount(labels[top1_hit], minlength=class_count),
        confusion=confusion,
    )


def predict(model: STGCN, params, dataset: SkeletonDataset, batch_size: int = 64) -> np.ndarray:
    if dataset.shape[0] != model.config.topology.joint_count or dataset.shape[2] != model.config.in_channels:
        raise ValueError(f"dataset samples {dataset.shape} (N, F, C) do not fit the model")
    if len(dataset) == 0:
        return np.zeros((0, model.config.class_count))
    return np.concatenate([model.forward(params, dataset.features[s : s + batch_size])
                           for s in range(0, len(dataset), batch_size)])


def evaluate(model: STGCN | ModelConfig, params, dataset: SkeletonDataset) -> EvalReport:
    if not isinstance(model, STGCN):
        model = STGCN(model)
    if dataset.class_count != model.config.class_count:
        raise ValueError(f"dataset has {dataset.class_count} classes, model has {model.config.class_count}")
    return report_from_probabilities(predict(model, params, dataset), dataset.labels, dataset.class_count)
