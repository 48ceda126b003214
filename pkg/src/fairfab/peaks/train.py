"""Mini-batch SGD training of the tiny regressor.

Deterministic given the seed: the train/validation split uses substream 0,
weight initialization substream 1, and the shuffle for epoch e (1-based)
substream 1 + e. Training arithmetic stays in float32 end to end so two
runs with the same seed produce identical weight bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..rng import Xoshiro256StarStar
from . import tinynet
from .patches import PeakPatch, patches_to_arrays


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 512
    learning_rate: float = 1e-3
    momentum: float = 0.9
    patience: int = 10
    validation_fraction: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValidationError(
                f"validation fraction must be in (0, 1), got {self.validation_fraction}")
        if not (self.learning_rate > 0):
            raise ValidationError(f"learning rate must be positive: {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValidationError(f"momentum must be in [0, 1): {self.momentum}")


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    stopped_early: bool = False

    def to_document(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "stopped_epoch": self.stopped_epoch, "stopped_early": self.stopped_early}


def _validation_metrics(weights: tinynet.TinyNetWeights, x: np.ndarray,
                        truths: np.ndarray) -> tuple[float, float]:
    pred = tinynet.forward(weights, x, "strict-f32").astype(np.float64)
    sq = ((pred - truths.astype(np.float64)) ** 2).sum(axis=1)
    return float(sq.mean()), float(np.sqrt(sq).mean())


def train_tiny(dataset: list[PeakPatch], config: TrainConfig) -> tuple:
    """Train on patches with truths; returns (best weights, TrainLog)."""
    config.validate()
    if not dataset:
        raise ValidationError("empty dataset")
    x, truths = patches_to_arrays(dataset)
    if np.isnan(truths).any():
        raise ValidationError("every training patch needs a truth position")

    n = x.shape[0]
    val_count = max(1, int(n * config.validation_fraction))
    if n - val_count < 1:
        raise ValidationError(f"dataset of {n} leaves no training items "
                              f"after a validation split of {val_count}")
    order = list(range(n))
    Xoshiro256StarStar.substream(config.seed, 0).shuffle(order)
    val_idx = np.array(order[:val_count])
    train_idx = np.array(order[val_count:])
    x_val, t_val = x[val_idx], truths[val_idx]
    x_train, t_train = x[train_idx], truths[train_idx]

    weights = tinynet.init_weights(Xoshiro256StarStar.substream(config.seed, 1))
    velocity = np.zeros_like(weights.values)
    lr = np.float32(config.learning_rate)
    momentum = np.float32(config.momentum)

    log = TrainLog()
    best_loss = float("inf")
    best_values = weights.values.copy()
    bad_epochs = 0

    for epoch in range(1, config.epochs + 1):
        epoch_order = list(range(len(train_idx)))
        Xoshiro256StarStar.substream(config.seed, 1 + epoch).shuffle(epoch_order)
        epoch_order = np.array(epoch_order)

        train_losses = []
        for start in range(0, len(epoch_order), config.batch_size):
            batch = epoch_order[start:start + config.batch_size]
            params = tinynet.unflatten(weights.values)
            loss, grads = tinynet.loss_and_grads(params, x_train[batch], t_train[batch])
            train_losses.append(loss * len(batch))
            grad_flat = tinynet.flatten(grads)
            velocity = momentum * velocity - lr * grad_flat
            weights = tinynet.TinyNetWeights(values=weights.values + velocity)

        val_loss, val_mean_error = _validation_metrics(weights, x_val, t_val)
        log.epochs.append({
            "epoch": epoch,
            "train_loss": float(sum(train_losses) / len(train_idx)),
            "val_loss": val_loss,
            "val_mean_error_px": val_mean_error,
        })
        log.stopped_epoch = epoch

        if val_loss < best_loss:
            best_loss = val_loss
            best_values = weights.values.copy()
            log.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                log.stopped_early = True
                break

    return tinynet.TinyNetWeights(values=best_values), log
