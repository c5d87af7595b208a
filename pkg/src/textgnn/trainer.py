"""Mini-batch training with early stopping on validation loss, and evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backprop import backward
from .errors import ConfigError, DivergenceError
from .graph import GraphBatch, TextGraph
from .model import ModelConfig, Params, forward, predict
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 32
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    decay_bias: bool = True
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay non-negative")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size, patience and max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    test_accuracy: Optional[float] = None
    wall_clock: float = 0.0

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tval_loss\tval_acc"]
        lines += [f"{r.epoch}\t{r.train_loss:.6f}\t{r.val_loss:.6f}\t{r.val_acc:.6f}" for r in self.epochs]
        if self.test_accuracy is not None:
            lines.append(f"test_acc\t{self.test_accuracy:.6f}")
        return "\n".join(lines) + "\n"


class EarlyStopping:
    """Tracks the best validation loss; stops after ``patience`` epochs without a decrease."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        if loss < self.best_loss:
            self.best_loss, self.best_epoch, self.bad_epochs = loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def iter_batches(graphs: Sequence[TextGraph], size: int, order=None):
    order = range(len(graphs)) if order is None else order
    order = list(order)
    for i in range(0, len(order), size):
        yield GraphBatch.from_graphs([graphs[j] for j in order[i:i + size]])


def evaluate(params: Params, graphs: Sequence[TextGraph], config: ModelConfig,
             batch_size: int = 256) -> tuple[float, float]:
    """Mean loss and accuracy with dropout off."""
    if not graphs:
        raise ValueError("cannot evaluate on an empty document list")
    total_loss, correct = 0.0, 0
    for batch in iter_batches(graphs, batch_size):
        cache = forward(batch, params, config)
        total_loss += float(cache.losses.sum())
        correct += int((cache.logits.argmax(axis=1) == batch.labels).sum())
    return total_loss / len(graphs), correct / len(graphs)


def evaluate_accuracy(params: Params, graphs: Sequence[TextGraph], config: ModelConfig,
                      batch_size: int = 256) -> float:
    if not graphs:
        raise ValueError("cannot evaluate on an empty document list")
    correct = 0
    for batch in iter_batches(graphs, batch_size):
        correct += int((predict(batch, params, config) == batch.labels).sum())
    return correct / len(graphs)


def train_step(batch: GraphBatch, params: Params, optimizer: Adam, config: ModelConfig,
               rng: np.random.Generator) -> float:
    cache = forward(batch, params, config, train_mode=True, rng=rng)
    loss = cache.loss
    if not np.isfinite(loss):
        raise DivergenceError("non-finite training loss")
    optimizer.step(backward(cache, params))
    return loss


def train(params: Params, train_graphs: Sequence[TextGraph], val_graphs: Sequence[TextGraph],
          test_graphs: Sequence[TextGraph] = (), config: TrainConfig = TrainConfig()):
    """Train in place; returns (best-validation params, report).

    Each epoch reshuffles the training graphs with the seeded rng. The
    parameters from the epoch with the lowest validation loss are restored
    before the single test evaluation.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(params, config.lr, config.weight_decay, decay_bias=config.decay_bias)
    stopper = EarlyStopping(config.patience)
    report = TrainReport()
    best = params.copy()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_graphs))
        losses = []
        for b, batch in enumerate(iter_batches(train_graphs, config.batch_size, order)):
            try:
                losses.append(train_step(batch, params, optimizer, config.model, rng))
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}, batch {b}: {exc}") from exc
        val_loss, val_acc = evaluate(params, val_graphs, config.model, config.eval_batch_size)
        report.epochs.append(EpochRecord(epoch, float(np.mean(losses)), val_loss, val_acc))
        logger.info("epoch %d train %.4f val %.4f acc %.4f", epoch, np.mean(losses), val_loss, val_acc)
        if stopper.update(epoch, val_loss):
            best = params.copy()
        if stopper.should_stop:
            logger.info("early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break

    for name in Params.GROUPS:
        getattr(params, name)[...] = getattr(best, name)
    report.best_epoch = stopper.best_epoch
    if test_graphs:
        report.test_accuracy = evaluate_accuracy(params, test_graphs, config.model, config.eval_batch_size)
    report.wall_clock = time.perf_counter() - start
    return params, report
