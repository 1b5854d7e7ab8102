"""Training and evaluation of the SoH estimator."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..synth import category_of
from .features import FeatureTensor, fit_stats
from .model import GruShape, SohEstimator, init_params, mse_loss_and_grad

SPLIT_RULES = ("chronological", "by-cell", "none")


class TrainingError(RuntimeError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-2
    dropout: float = 0.1
    hidden: int = 96
    layers: int = 2
    head_hidden: int = 64
    seed: int = 0
    split: str = "chronological"
    # chronological split: fractions of each cell's cycles, oldest last
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    grad_clip: float = 1.0
    # float32 roughly halves training time; gradient checks use float64
    dtype: str = "float32"

    def __post_init__(self):
        if self.split not in SPLIT_RULES:
            raise SplitError(f"split must be one of {SPLIT_RULES}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


Sample = tuple[FeatureTensor, float]


def split_dataset(samples: Sequence[Sample], cfg: TrainConfig):
    """``(train, val, test)`` lists under the configured split rule.

    ``by-cell`` holds out whole cells: within each lifespan category (cell id
    prefix) the last cell in sorted order goes to test and the one before it
    to validation. ``chronological`` keeps the oldest cycles of every cell for
    validation and test. ``none`` trains on everything.
    """
    by_cell: dict[str, list[Sample]] = {}
    for s in samples:
        by_cell.setdefault(s[0].cell_id, []).append(s)
    for rows in by_cell.values():
        rows.sort(key=lambda s: s[0].cycle_index)
    train, val, test = [], [], []
    if cfg.split == "none":
        train = [s for cell in sorted(by_cell) for s in by_cell[cell]]
    elif cfg.split == "by-cell":
        cats: dict[str, list[str]] = {}
        for cell in sorted(by_cell):
            cats.setdefault(category_of(cell), []).append(cell)
        for cells in cats.values():
            if len(cells) < 3:
                raise SplitError(f"by-cell split needs >= 3 cells per category, "
                                 f"got {cells}")
            for cell in cells[:-2]:
                train += by_cell[cell]
            val += by_cell[cells[-2]]
            test += by_cell[cells[-1]]
    else:
        for cell in sorted(by_cell):
            rows = by_cell[cell]
            n = len(rows)
            n_test = int(round(cfg.test_fraction * n))
            n_val = int(round(cfg.val_fraction * n))
            if n - n_test - n_val < 1:
                raise SplitError(f"cell {cell!r} has too few cycles to split")
            cut = n - n_test - n_val
            train += rows[:cut]
            val += rows[cut:cut + n_val]
            test += rows[cut + n_val:]
    if not train:
        raise SplitError("empty training split")
    return train, val, test


class AdamW:
    def __init__(self, params, lr=1e-3, weight_decay=1e-2,
                 betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, *betas, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            p = params[k]
            p *= 1.0 - self.lr * self.wd
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _clip(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def train_soh(samples: Sequence[Sample], cfg: TrainConfig | None = None,
              capacity_Ah: float = 1.1, log=None) -> SohEstimator:
    """Fit the estimator and return the parameters with the best validation
    loss (training loss when the validation split is empty)."""
    cfg = cfg or TrainConfig()
    train, val, _ = split_dataset(samples, cfg)
    stats = fit_stats([f for f, _ in train])
    channels = train[0][0].n_channels
    shape = GruShape(channels, cfg.hidden, cfg.layers, cfg.head_hidden)
    params = {k: v.astype(cfg.dtype) for k, v in init_params(shape, cfg.seed).items()}
    y_train = np.array([y for _, y in train], dtype=cfg.dtype)
    # start the output at the mean label
    mu = float(np.clip(y_train.mean(), 1e-3, 1 - 1e-3))
    params["b2"][:] = math.log(mu / (1.0 - mu))
    est = SohEstimator(shape, params, stats.mean, stats.std, capacity_Ah, cfg.dropout)
    x_train = est._batch([f for f, _ in train])
    x_val = est._batch([f for f, _ in val]) if val else None
    y_val = np.array([y for _, y in val], dtype=cfg.dtype)

    rng = np.random.default_rng(cfg.seed + 1)
    opt = AdamW(params, cfg.lr, cfg.weight_decay)
    best, best_loss = copy.deepcopy(params), math.inf
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss, grads = mse_loss_and_grad(params, x_train[idx], y_train[idx],
                                            cfg.dropout, rng)
            if not math.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch + 1}")
            _clip(grads, cfg.grad_clip)
            opt.step(params, grads)
            total += loss * idx.size
        train_loss = total / len(order)
        if x_val is not None:
            pred = est.predict_array(x_val)
            monitor = float(np.mean((pred - y_val) ** 2))
        else:
            monitor = train_loss
        if not math.isfinite(monitor):
            raise TrainingError(f"validation loss diverged at epoch {epoch + 1}")
        history.append((train_loss, monitor))
        if monitor < best_loss:
            best_loss = monitor
            best = copy.deepcopy(params)
        if log is not None:
            log(f"epoch {epoch + 1:4d}  train {train_loss:.3e}  val {monitor:.3e}")
    est.params = best
    est.meta = {"epochs": cfg.epochs, "seed": cfg.seed, "split": cfg.split,
                "best_val_mse": best_loss, "train_size": len(train),
                "val_size": len(val)}
    est.history = history
    return est


def evaluate_soh(est: SohEstimator, samples: Sequence[Sample]) -> tuple[float, float]:
    """``(MAE, RMSE)`` of the predictions against the labels."""
    if not samples:
        raise ValueError("no samples to evaluate")
    pred = est.predict([f for f, _ in samples])
    err = pred - np.array([y for _, y in samples])
    return float(np.mean(np.abs(err))), float(math.sqrt(np.mean(err ** 2)))
