"""Training loop: Adam on mini-batches, plateau decay, early stopping, best-checkpoint retention."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import checkpoint
from .autodiff import ops
from .autodiff.tensor import Tape, Tensor
from .dataset import Dataset, SplitSpec, batch_iter, stratified_split
from .optim import AdamState, PlateauState, adam_step, early_stop_check, plateau_update
from .zoo import Model

logger = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite training loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    plateau_factor: float = 0.1
    plateau_patience: int = 12
    min_lr: float = 1e-7
    early_stop_patience: int = 20
    batch_size: int = 32
    max_epochs: int = 500
    seed: int = 0
    validation_fraction: float = 0.1

    def validate(self) -> None:
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.min_lr <= 0:
            raise ValueError("min_lr must be positive")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class History:
    epoch: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def trajectory(self) -> Tuple:
        """Everything except wall time, for reproducibility comparisons."""
        return (self.epoch, self.train_loss, self.val_loss, self.val_accuracy, self.lr)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "lr", "seconds"])
            for row in zip(self.epoch, self.train_loss, self.val_loss, self.lr, self.seconds):
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), f"{row[4]:.3f}"])
        return path


@dataclass
class TrainResult:
    history: History
    checkpoint: Optional[Path]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool


def predict_proba(model: Model, iq: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Softmax outputs for ``iq`` of shape ``(N, T, 2)``, evaluated without a tape."""
    out = []
    for start in range(0, len(iq), batch_size):
        out.append(model.forward(Tensor(iq[start : start + batch_size])).data)
    if not out:
        return np.zeros((0, model.spec.n_classes), dtype=np.float32)
    return np.concatenate(out)


def evaluate_loss(model: Model, ds: Dataset, batch_size: int = 256) -> Tuple[float, float]:
    """Mean cross-entropy and accuracy over ``ds``."""
    total, correct = 0.0, 0
    for x, y, _ in batch_iter(ds, batch_size):
        logits = model.logits(x)
        total += ops.softmax_cross_entropy(logits, y).item() * len(y)
        correct += int((logits.data.argmax(axis=-1) == y).sum())
    return total / len(ds), correct / len(ds)


def train_step(model: Model, x: Tensor, y: np.ndarray, adam: AdamState, lr: float) -> float:
    model.zero_grad()
    with Tape() as tape:
        loss = ops.softmax_cross_entropy(model.logits(x), y)
    value = loss.item()
    if math.isfinite(value):
        tape.backward(loss)
        params = model.parameters()
        adam_step([p.value.data for p in params], [p.grad for p in params], adam, lr)
    return value


def train(
    model: Model,
    train_set: Dataset,
    cfg: TrainConfig,
    out_dir=None,
    val_set: Optional[Dataset] = None,
) -> TrainResult:
    """Fit ``model`` on ``train_set``.

    Unless ``val_set`` is given, a stratified ``validation_fraction`` slice of
    ``train_set`` is held out. The best-validation weights are restored into
    ``model`` at the end and, with ``out_dir``, saved as ``best.amcw`` next to
    ``history.csv``.
    """
    cfg.validate()
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if val_set is None:
        fit_set, val_set = stratified_split(train_set, SplitSpec(cfg.validation_fraction, cfg.seed))
    else:
        fit_set = train_set
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "best.amcw" if out is not None else None

    params = model.parameters()
    adam = AdamState.zeros_like([p.value.data for p in params])
    plateau = PlateauState(lr=cfg.lr0, factor=cfg.plateau_factor, patience=cfg.plateau_patience, min_lr=cfg.min_lr)
    history = History()
    best_state = {k: v.copy() for k, v in model.state().items()}
    best_loss, best_epoch, since_best = math.inf, 0, 0
    stopped = False

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        lr = plateau.lr
        running, seen = 0.0, 0
        batches = batch_iter(fit_set, cfg.batch_size, shuffle=True, seed=(cfg.seed * 1_000_003 + epoch) & 0xFFFFFFFF)
        for b, (x, y, _) in enumerate(batches):
            value = train_step(model, x, y, adam, lr)
            if not math.isfinite(value):
                raise TrainingAborted(epoch, b, value)
            running += value * len(y)
            seen += len(y)
        val_loss, val_acc = evaluate_loss(model, val_set)
        if not math.isfinite(val_loss):
            raise TrainingAborted(epoch, -1, val_loss)
        history.epoch.append(epoch)
        history.train_loss.append(running / seen)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        history.lr.append(lr)
        history.seconds.append(time.perf_counter() - t0)
        logger.info("epoch %d train %.4f val %.4f acc %.4f lr %.1e", epoch, running / seen, val_loss, val_acc, lr)

        if val_loss < best_loss:
            best_loss, best_epoch, since_best = val_loss, epoch, 0
            best_state = {k: v.copy() for k, v in model.state().items()}
            if ckpt is not None:
                checkpoint.save_weights(best_state, ckpt)
        else:
            since_best += 1
        plateau_update(plateau, val_loss)
        if early_stop_check(since_best, cfg.early_stop_patience):
            stopped = True
            break

    model.load_state(best_state)
    if out is not None:
        history.to_csv(out / "history.csv")
    return TrainResult(history, ckpt, best_epoch, best_loss, stopped)
