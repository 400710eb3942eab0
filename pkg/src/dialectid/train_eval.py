"""Mini-batch training with early stopping, and confusion-matrix metrics.

Training monitors validation loss when a validation set is present, training
loss otherwise. An epoch counts as an improvement only if the monitored loss
drops below the best by more than 1e-9; after `patience` consecutive
non-improvements training stops and the best-epoch parameters are restored.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from dialectid.corpus import LabeledCorpus
from dialectid.nn import Adam, clip_global_norm
from dialectid.nn.ops import cross_entropy, softmax_cross_entropy_grad

IMPROVEMENT_TOLERANCE = 1e-9

EVAL_BATCH = 64


class TrainingError(RuntimeError):
    """Training could not complete."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if not 1 <= self.patience < self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs)")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    monitored: str = "val_loss"
    best_epoch: int = 0
    best_loss: float = float("inf")
    stopped_epoch: int = 0
    wall_time_s: float = 0.0


class EarlyStopping:
    """Keras-style monitor: wait counts consecutive non-improving epochs."""

    def __init__(self, patience: int, tolerance: float = IMPROVEMENT_TOLERANCE):
        self.patience = patience
        self.tolerance = tolerance
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.wait = 0

    def observe(self, epoch: int, loss: float) -> bool:
        """Record one epoch's monitored loss; True means stop now."""
        if loss < self.best_loss - self.tolerance:
            self.best_loss = loss
            self.best_epoch = epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience

    @property
    def improved(self) -> bool:
        return self.wait == 0


def _batched_probs(model, x: np.ndarray) -> np.ndarray:
    chunks = [
        model.forward(x[start : start + EVAL_BATCH], train=False)
        for start in range(0, len(x), EVAL_BATCH)
    ]
    return np.concatenate(chunks, axis=0)


def _loss_and_accuracy(model, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    probs = _batched_probs(model, x)
    loss = cross_entropy(probs, y)
    accuracy = float((probs.argmax(axis=1) == y).mean())
    return loss, accuracy


def train(
    model,
    train_set: LabeledCorpus,
    val_set: LabeledCorpus | None,
    config: TrainConfig = TrainConfig(),
):
    """Train a model in place; returns (model, TrainHistory).

    Batches are drawn from a fresh seeded shuffle each epoch; the final
    partial batch is kept. The returned model carries the parameters of the
    best monitored epoch.
    """
    x_train, y_train = train_set.as_arrays()
    has_val = val_set is not None and len(val_set) > 0
    if has_val:
        x_val, y_val = val_set.as_arrays()

    shuffle_seed, dropout_seed = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(shuffle_seed)
    model.reseed_dropout(dropout_seed)

    params = model.parameters()
    optimizer = Adam(params, config.learning_rate,
                     config.beta1, config.beta2, config.eps)
    stopper = EarlyStopping(config.patience)
    history = TrainHistory(monitored="val_loss" if has_val else "train_loss")
    best_snapshot = model.snapshot()
    n = len(x_train)
    started = time.perf_counter()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        hits = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            probs = model.forward(xb, train=True)
            loss_sum += cross_entropy(probs, yb) * len(idx)
            hits += int((probs.argmax(axis=1) == yb).sum())
            model.backward(softmax_cross_entropy_grad(probs, yb))
            if model.grad_clip_norm is not None:
                clip_global_norm([p.grad for p in params], model.grad_clip_norm)
            optimizer.step()

        history.train_loss.append(loss_sum / n)
        history.train_accuracy.append(hits / n)
        if has_val:
            vl, va = _loss_and_accuracy(model, x_val, y_val)
            history.val_loss.append(vl)
            history.val_accuracy.append(va)
            monitored_loss = vl
        else:
            monitored_loss = history.train_loss[-1]

        stop = stopper.observe(epoch, monitored_loss)
        if stopper.improved:
            best_snapshot = model.snapshot()
        history.stopped_epoch = epoch
        if stop:
            break

    model.restore(best_snapshot)
    history.best_epoch = stopper.best_epoch
    history.best_loss = stopper.best_loss
    history.wall_time_s = time.perf_counter() - started
    return model, history


@dataclass(frozen=True)
class Metrics:
    """Confusion matrix (rows actual, columns predicted) and the scores
    derived from it. Undefined precision/recall/F1 are reported as 0."""

    confusion: np.ndarray
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def micro_recall(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0


def compute_metrics(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have the same length")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    diag = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    actual = confusion.sum(axis=1).astype(np.float64)
    precision = np.divide(diag, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(diag, actual, out=np.zeros(n_classes), where=actual > 0)
    pr = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr, out=np.zeros(n_classes), where=pr > 0)
    return Metrics(confusion=confusion, accuracy=accuracy,
                   precision=precision, recall=recall, f1=f1)


def evaluate(model, test_set: LabeledCorpus) -> Metrics:
    """Run the model over a test corpus and score argmax predictions.
    Probability ties resolve to the lowest class index."""
    x, y = test_set.as_arrays()
    probs = _batched_probs(model, x)
    return compute_metrics(y, probs.argmax(axis=1), model.n_classes)
