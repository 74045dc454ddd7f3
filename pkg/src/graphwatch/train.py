"""Mini-batch training with early stopping on the weighted F-score, plus evaluation metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine.checkpoint import checkpoint_dict
from .engine.layers import GraphBatch
from .engine.model import GcnModel
from .engine.optim import Adam
from .engine.tensor import nll_loss

log = logging.getLogger(__name__)

N_CLASSES = 4


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-3
    patience: int = 10
    max_epochs: int = 300
    train_size: int = 2500
    val_size: int = 800
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "train_size", "val_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0 or self.patience < 0:
            raise ValueError("lr must be positive and patience non-negative")


def confusion_matrix(y_true, y_pred, n_classes=N_CLASSES):
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def per_class_scores(cm):
    cm = np.asarray(cm, dtype=float)
    tp = np.diag(cm)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def weighted_f_score(cm) -> float:
    """Per-class F1 averaged with weights equal to class support / total."""
    cm = np.asarray(cm)
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    _, _, f1 = per_class_scores(cm)
    support = cm.sum(axis=1)
    return float((f1 * support).sum() / total)


@dataclass
class EvalResult:
    confusion: np.ndarray
    f_score: float
    proportions: np.ndarray
    recall: np.ndarray
    loss: float


def evaluate(model: GcnModel, samples, batch_size: int = 512) -> EvalResult:
    """Eval-mode predictions over ``samples``; parameters are left untouched."""
    if len(samples) == 0:
        raise ValueError("nothing to evaluate")
    labels = np.array([s.label for s in samples])
    graphs = [s.graph for s in samples]
    logp = np.concatenate([
        model.forward(model.batch(graphs[i:i + batch_size])).data
        for i in range(0, len(graphs), batch_size)
    ])
    pred = np.argmax(logp, axis=1)
    cm = confusion_matrix(labels, pred)
    _, recall, _ = per_class_scores(cm)
    loss = float(-logp[np.arange(len(labels)), labels].mean())
    return EvalResult(cm, weighted_f_score(cm), cm / cm.sum(), recall, loss)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_f: float
    val_f: float


@dataclass
class TrainResult:
    best_checkpoint: dict
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    @property
    def best_val_f(self):
        return self.best_checkpoint["metrics"]["val_f"]


def check_balanced(samples):
    counts = np.bincount([s.label for s in samples], minlength=N_CLASSES)
    if (counts == 0).any() or len(set(counts.tolist())) != 1:
        raise ValueError(f"training set must hold the same number of samples per class, got {counts.tolist()}")
    return counts


def train(model: GcnModel, train_set: Sequence, val_set: Sequence, cfg: TrainConfig = TrainConfig(),
          on_epoch=None) -> TrainResult:
    """Train with Adam on the NLL loss; keep the epoch with the best validation F-score.

    Stops after ``patience`` consecutive epochs without a strict improvement
    (the first non-improving epoch when ``patience`` is 0) or at ``max_epochs``.
    """
    check_balanced(train_set)
    model.fit_standardizer([s.graph for s in train_set])
    parts = [model.graph_parts(s.graph) for s in train_set]
    labels = np.array([s.label for s in train_set])
    opt = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 0x7261696E])))

    history = []
    best, best_f, wait = None, -np.inf, 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(parts))
        total = 0.0
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch = GraphBatch.from_parts([parts[i] for i in idx])
            try:
                loss = nll_loss(model.forward(batch, training=True, rng=rng), labels[idx])
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        train_eval = evaluate(model, train_set)
        val_eval = evaluate(model, val_set)
        rec = EpochRecord(epoch, total / len(parts), val_eval.loss, train_eval.f_score, val_eval.f_score)
        history.append(rec)
        log.info("epoch %d loss %.4f val_loss %.4f train_f %.4f val_f %.4f",
                 epoch, rec.train_loss, rec.val_loss, rec.train_f, rec.val_f)
        if on_epoch is not None:
            on_epoch(rec)
        if rec.val_f > best_f:
            best_f, wait = rec.val_f, 0
            best = checkpoint_dict(model, opt, epoch, rng.bit_generator.state,
                                   {"val_f": rec.val_f, "train_f": rec.train_f, "val_loss": rec.val_loss})
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    return TrainResult(best, history, best["epoch"], history[-1].epoch)
