"""Seeded training loops: full training with early stopping, and fine-tuning.

Optimization is adaptive-moment gradient descent (betas 0.9/0.999,
eps 1e-8); only the learning rate varies per task. Batch order, dropout and
initialization all derive from the config seed, so a (seed, config, data)
triple reproduces the final parameters exactly.
"""

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from .metrics import to_db
from .models import nmse_loss
from .utils import rng_for


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 50
    patience: int = 50
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split must sum to 1, got {self.split}")
        if self.patience > self.epochs:
            raise ValueError("patience must be <= epochs")
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be >= 1")


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)  # per-epoch train/val NMSE dB
    best_val_db: float = float("inf")
    best_epoch: int = 0
    epochs_run: int = 0


def split_indices(n: int, split: tuple[float, float, float], seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic train/val/test index partition."""
    perm = rng_for(seed, "split").permutation(n)
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def _batches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch):
        yield order[i:i + batch]


def evaluate_model(model, inputs: np.ndarray, targets: np.ndarray,
                   rescale: bool = False, batch: int = 1024) -> float:
    """Mean linear NMSE ratio over a dataset (eval mode, no grad)."""
    dtype = next(model.parameters()).dtype
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(inputs), batch):
            x = torch.as_tensor(inputs[i:i + batch], dtype=dtype)
            t = torch.as_tensor(targets[i:i + batch], dtype=dtype)
            ratio = nmse_loss(model(x), t, rescale)
            total += float(ratio.item()) * len(x)
            count += len(x)
    return total / count


def evaluate_model_db(model, inputs, targets, rescale: bool = False) -> float:
    return to_db(evaluate_model(model, inputs, targets, rescale))


def train(
    model,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    rescale: bool = False,
) -> TrainResult:
    """Train with early stopping; the model is left at the best-validation
    parameters. History records per-epoch train/val NMSE in dB."""
    x_train, t_train = train_data
    x_val, t_val = val_data
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("empty training or validation split")

    dtype = next(model.parameters()).dtype
    torch.manual_seed(cfg.seed)  # dropout masks
    batch_rng = rng_for(cfg.seed, "batches")
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8)

    result = TrainResult()
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    frozen = cfg.lr == 0.0  # control mode: no updates, not even BN statistics
    for epoch in range(1, cfg.epochs + 1):
        model.train(mode=not frozen)
        running, seen = 0.0, 0
        for idx in _batches(len(x_train), cfg.batch, batch_rng):
            x = torch.as_tensor(x_train[idx], dtype=dtype)
            t = torch.as_tensor(t_train[idx], dtype=dtype)
            opt.zero_grad(set_to_none=True)
            loss = nmse_loss(model(x), t, rescale)
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch starting at sample {idx[0]}"
                )
            loss.backward()
            opt.step()
            running += float(loss.item()) * len(idx)
            seen += len(idx)

        val_ratio = evaluate_model(model, x_val, t_val, rescale)
        result.history.append({
            "epoch": epoch,
            "train_nmse_db": to_db(running / seen),
            "val_nmse_db": to_db(val_ratio),
        })
        result.epochs_run = epoch
        if to_db(val_ratio) < result.best_val_db - 1e-12:
            result.best_val_db = to_db(val_ratio)
            result.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    model.load_state_dict(best_state)
    return result


def fine_tune(
    model,
    adapt_data: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    rescale: bool = False,
) -> TrainResult:
    """Adapt all layers on a small target budget (no validation split; runs
    the configured epoch count). Raises when the budget is below one batch's
    worth of usable data (empty)."""
    x_adapt, t_adapt = adapt_data
    if len(x_adapt) < 1:
        raise ValueError("fine-tuning budget is below one batch (no samples)")

    dtype = next(model.parameters()).dtype
    torch.manual_seed(cfg.seed)
    batch_rng = rng_for(cfg.seed, "finetune-batches")
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8)

    result = TrainResult()
    frozen = cfg.lr == 0.0  # frozen-model control: reproduces zero-shot NMSE exactly
    for epoch in range(1, cfg.epochs + 1):
        model.train(mode=not frozen)
        running, seen = 0.0, 0
        for idx in _batches(len(x_adapt), cfg.batch, batch_rng):
            x = torch.as_tensor(x_adapt[idx], dtype=dtype)
            t = torch.as_tensor(t_adapt[idx], dtype=dtype)
            opt.zero_grad(set_to_none=True)
            loss = nmse_loss(model(x), t, rescale)
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at fine-tune epoch {epoch}"
                )
            loss.backward()
            opt.step()
            running += float(loss.item()) * len(idx)
            seen += len(idx)
        result.history.append({"epoch": epoch, "train_nmse_db": to_db(running / seen)})
        result.epochs_run = epoch
    return result


def budget_from_fraction(n_total: int, fraction: float) -> int:
    """Adaptation sample count for a fractional budget."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"target fraction must lie in (0, 1), got {fraction}")
    budget = int(round(fraction * n_total))
    if budget < 1:
        raise ValueError(
            f"fraction {fraction} of {n_total} samples yields less than one batch"
        )
    return budget
