"""Minibatch training loop, k-fold splitting (random and subject-wise),
evaluation, and the derived metric suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .arch import Model, ModelSpec, build_model, model_backward, model_forward
from .data import Dataset, augment_dataset, normalize_batch
from .errors import DataFormatError, NumericInstabilityError
from .losses import AdamState, FocalLossConfig, adam_step, focal_loss
from .tensor import SeededRng, one_hot

_VAL_SPLIT_TAG = 0x76616C  # stream tag for the internal validation split


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    lr: float = 0.001
    gamma: float = 2.0
    seed: int = 0
    dtype_name: str = "float32"
    val_fraction: float = 0.1
    patience: int | None = None  # early stop on stalled validation loss; off by default
    augment: bool = False  # applied to the training side only, after any split
    class_weights: tuple[float, float] | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")

    @property
    def dtype(self):
        return np.float32 if self.dtype_name == "float32" else np.float64


class CvMode(str, Enum):
    RANDOM = "random"
    SUBJECT = "subject"


@dataclass
class FoldPlan:
    k: int
    mode: CvMode
    folds: list[np.ndarray]  # disjoint index arrays covering the dataset


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None
    val_accuracy: float | None
    seconds: float


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    matrix: ConfusionMatrix
    degenerate: tuple[str, ...] = ()  # metrics whose denominator was zero


def split_kfold(dataset: Dataset, k: int, mode: CvMode, seed: int) -> FoldPlan:
    """Deterministic k-fold plan.

    Random mode deals a seeded shuffle round-robin, so fold sizes differ by
    at most one. Subject-wise mode assigns whole subjects greedily, largest
    subject first into the currently smallest fold, so no subject ever spans
    two folds.
    """
    mode = CvMode(mode)
    n = len(dataset)
    if mode is CvMode.RANDOM:
        if n < k:
            raise DataFormatError(f"cannot make {k} folds from {n} samples")
        order = np.arange(n)
        SeededRng(seed).shuffle(order)
        folds = [order[i::k].copy() for i in range(k)]
        return FoldPlan(k, mode, folds)

    groups: dict[str, list[int]] = {}
    for i, subject in enumerate(dataset.subjects):
        groups.setdefault(subject, []).append(i)
    if len(groups) < k:
        raise DataFormatError(f"cannot make {k} subject-wise folds from {len(groups)} subjects")
    fold_members: list[list[int]] = [[] for _ in range(k)]
    for subject in sorted(groups, key=lambda s: (-len(groups[s]), s)):
        target = min(range(k), key=lambda f: (len(fold_members[f]), f))
        fold_members[target].extend(groups[subject])
    return FoldPlan(k, mode, [np.array(sorted(m), dtype=np.int64) for m in fold_members])


def _forward_epoch_metrics(
    model: Model, ds: Dataset, focal_cfg: FocalLossConfig, dtype, batch_size: int = 64
) -> tuple[float, float]:
    """Mean loss and accuracy over a dataset without touching parameters."""
    total_loss = 0.0
    correct = 0
    for start in range(0, len(ds), batch_size):
        sel = slice(start, start + batch_size)
        x = normalize_batch(ds.images[sel], dtype)
        labels = ds.labels[sel]
        probs, _ = model_forward(model, x)
        loss, _ = focal_loss(probs, one_hot(labels, probs.shape[1], probs.dtype), focal_cfg)
        total_loss += loss * len(labels)
        correct += int(np.sum(np.argmax(probs, axis=1) == labels))
    return total_loss / len(ds), correct / len(ds)


def train_model(
    model: Model, train_set: Dataset, val_set: Dataset | None, cfg: TrainConfig
) -> tuple[Model, list[EpochLog]]:
    """Train in place: per epoch, reshuffle with the seeded stream, then run
    minibatches of forward -> focal loss -> backward -> Adam.

    val_set=None carves a seed-derived validation split (cfg.val_fraction)
    off the training side; pass an empty Dataset to disable validation.
    Augmentation, when enabled, happens after that split, training side only.
    """
    if len(train_set) == 0:
        raise DataFormatError("training set is empty")
    if val_set is None:
        n_val = int(round(cfg.val_fraction * len(train_set)))
        if n_val >= 1:
            order = np.arange(len(train_set))
            SeededRng(cfg.seed ^ _VAL_SPLIT_TAG).shuffle(order)
            val_set = train_set.select(order[:n_val])
            train_set = train_set.select(order[n_val:])
        else:
            val_set = Dataset.empty(model.spec.input_size)
    if cfg.augment:
        train_set = augment_dataset(train_set)

    dtype = model.spec.dtype
    focal_cfg = FocalLossConfig(cfg.gamma, cfg.class_weights)
    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    rng = SeededRng(cfg.seed)
    logs: list[EpochLog] = []
    n = len(train_set)
    best_val = np.inf
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = np.arange(n)
        rng.shuffle(order)
        epoch_loss = 0.0
        correct = 0
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            sel = order[start : start + cfg.batch_size]
            x = normalize_batch(train_set.images[sel], dtype)
            labels = train_set.labels[sel]
            probs, caches = model_forward(model, x, train_mode=True)
            loss, grad_logits = focal_loss(
                probs, one_hot(labels, probs.shape[1], probs.dtype), focal_cfg
            )
            if not np.isfinite(loss):
                raise NumericInstabilityError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            grads = model_backward(model, caches, grad_logits)
            adam_step(params, grads, state)
            epoch_loss += loss * len(labels)
            correct += int(np.sum(np.argmax(probs, axis=1) == labels))
        val_loss = val_acc = None
        if len(val_set):
            val_loss, val_acc = _forward_epoch_metrics(model, val_set, focal_cfg, dtype)
        logs.append(
            EpochLog(
                epoch,
                epoch_loss / n,
                correct / n,
                val_loss,
                val_acc,
                time.perf_counter() - t0,
            )
        )
        if cfg.patience is not None and val_loss is not None:
            if val_loss < best_val - 1e-12:
                best_val, stale = val_loss, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return model, logs


def evaluate(model: Model, dataset: Dataset, batch_size: int = 64) -> ConfusionMatrix:
    """Confusion counts with the tumor class (label 1) as positive."""
    if len(dataset) == 0:
        raise DataFormatError("cannot evaluate on an empty dataset")
    cm = ConfusionMatrix()
    dtype = model.spec.dtype
    for start in range(0, len(dataset), batch_size):
        sel = slice(start, start + batch_size)
        probs, _ = model_forward(model, normalize_batch(dataset.images[sel], dtype))
        preds = np.argmax(probs, axis=1)
        labels = dataset.labels[sel]
        cm.tp += int(np.sum((preds == 1) & (labels == 1)))
        cm.tn += int(np.sum((preds == 0) & (labels == 0)))
        cm.fp += int(np.sum((preds == 1) & (labels == 0)))
        cm.fn += int(np.sum((preds == 0) & (labels == 1)))
    return cm


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, precision, recall and F1 from the counts; zero-denominator
    cases yield 0 and are flagged by name."""
    if cm.total < 1:
        raise ValueError("empty confusion matrix")
    degenerate = []

    def ratio(num: int, denom: int, name_: str) -> float:
        if denom == 0:
            degenerate.append(name_)
            return 0.0
        return num / denom

    accuracy = (cm.tp + cm.tn) / cm.total
    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        degenerate.append("f1")
        f1 = 0.0
    return MetricsReport(accuracy, precision, recall, f1, cm, tuple(degenerate))


@dataclass
class CvResult:
    reports: list[MetricsReport]
    mean: dict[str, float] = field(default_factory=dict)
    stddev: dict[str, float] = field(default_factory=dict)


def cross_validate(
    spec: ModelSpec, dataset: Dataset, cfg: TrainConfig, plan: FoldPlan
) -> CvResult:
    """Train a fresh model per fold (seed XOR fold index), evaluate on the
    held-out fold, and aggregate mean / population stddev per metric."""
    n = len(dataset)
    covered = np.concatenate(plan.folds) if plan.folds else np.array([], dtype=np.int64)
    if sorted(covered.tolist()) != list(range(n)):
        raise DataFormatError("fold plan does not partition the dataset")
    reports = []
    for fold_index, fold in enumerate(plan.folds):
        fold_cfg = replace(cfg, seed=cfg.seed ^ fold_index)
        keep = np.setdiff1d(np.arange(n), fold)
        model = build_model(spec, SeededRng(fold_cfg.seed))
        train_model(model, dataset.select(keep), Dataset.empty(spec.input_size), fold_cfg)
        reports.append(metrics(evaluate(model, dataset.select(fold))))
    table = {
        name: np.array([getattr(r, name) for r in reports])
        for name in ("accuracy", "precision", "recall", "f1")
    }
    return CvResult(
        reports,
        {name: float(v.mean()) for name, v in table.items()},
        {name: float(v.std()) for name, v in table.items()},
    )
