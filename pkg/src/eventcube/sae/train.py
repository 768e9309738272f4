"""Training loop: seeded minibatches, LR-on-plateau, early stopping.

The plateau/early-stop logic lives in :class:`ImprovementTracker` so its
firing rules are testable without running an actual fit. "No improvement"
means the validation loss failed to drop below the best seen minus a small
absolute tolerance. The learning rate divides by ``plateau_factor`` once the
stall exceeds ``plateau_patience`` epochs (the plateau counter restarts after
each cut); training stops once the stall reaches ``early_stop_patience``, and
the best-validation weights are restored.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DivergedLoss, EmptySplit
from .arch import ArchSpec
from .model import SaeModel, backward, forward, init_model, loss_gradients, sae_loss
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lambda_sparsity: float = 0.1
    batch_size: int = 1024
    max_epochs: int = 200
    lr: float = 0.01
    plateau_factor: float = 10.0
    plateau_patience: int = 10
    early_stop_patience: int = 25
    seed: int = 0
    min_improvement: float = 1e-6

    def __post_init__(self) -> None:
        if self.lambda_sparsity < 0:
            raise ValueError("lambda_sparsity must be >= 0")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")


@dataclass
class TrackerDecision:
    improved: bool
    reduce_lr: bool
    stop: bool


@dataclass
class ImprovementTracker:
    plateau_patience: int
    early_stop_patience: int
    min_improvement: float = 1e-6
    best: float = math.inf
    stall: int = 0
    plateau_wait: int = 0

    def update(self, val_loss: float) -> TrackerDecision:
        if val_loss < self.best - self.min_improvement:
            self.best = val_loss
            self.stall = 0
            self.plateau_wait = 0
            return TrackerDecision(improved=True, reduce_lr=False, stop=False)
        self.stall += 1
        self.plateau_wait += 1
        reduce_lr = self.plateau_wait > self.plateau_patience
        if reduce_lr:
            self.plateau_wait = 0
        stop = self.stall >= self.early_stop_patience
        return TrackerDecision(improved=False, reduce_lr=reduce_lr, stop=stop)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_total: float
    train_recon: float
    train_l1: float
    val_total: float
    val_recon: float
    val_l1: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class TrainResult:
    model: SaeModel
    history: list[EpochRecord]
    best_epoch: int
    best_val_loss: float


def evaluate(model: SaeModel, data: np.ndarray, lam: float, batch_size: int):
    """Mean loss over a dataset in infer mode."""
    n = data.shape[0]
    total = recon = l1 = 0.0
    for start in range(0, n, batch_size):
        xb = data[start : start + batch_size]
        res = forward(model, xb, mode="infer")
        lv = sae_loss(xb.astype(model.dtype), res.x_hat, res.z, lam)
        w = xb.shape[0]
        total += lv.total * w
        recon += lv.recon_mse * w
        l1 += lv.l1_term * w
    return total / n, recon / n, l1 / n


def train(
    train_data: np.ndarray,
    val_data: np.ndarray,
    arch: ArchSpec,
    cfg: TrainConfig = TrainConfig(),
    dtype=np.float32,
) -> TrainResult:
    """Fit a sparse autoencoder and return the best-validation weights."""
    train_data = np.asarray(train_data)
    val_data = np.asarray(val_data)
    if train_data.shape[0] == 0 or val_data.shape[0] == 0:
        raise EmptySplit("both train and validation splits must be nonempty")

    model = init_model(arch, seed=cfg.seed, dtype=dtype)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    opt = AdamState(model)
    tracker = ImprovementTracker(
        plateau_patience=cfg.plateau_patience,
        early_stop_patience=cfg.early_stop_patience,
        min_improvement=cfg.min_improvement,
    )
    lr = cfg.lr
    lam = cfg.lambda_sparsity
    n = train_data.shape[0]
    history: list[EpochRecord] = []
    best_snapshot = model.state_snapshot()
    best_epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        ep_total = ep_recon = ep_l1 = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = train_data[idx].astype(model.dtype)
            res = forward(model, xb, mode="train")
            lv = sae_loss(xb, res.x_hat, res.z, lam)
            if not math.isfinite(lv.total):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            d_xhat, d_z = loss_gradients(xb, res.x_hat, res.z, lam)
            grads = backward(model, res.cache, d_xhat, d_z)
            adam_step(model, grads, opt, lr)
            w = xb.shape[0]
            ep_total += lv.total * w
            ep_recon += lv.recon_mse * w
            ep_l1 += lv.l1_term * w

        val_total, val_recon, val_l1 = evaluate(model, val_data, lam, cfg.batch_size)
        if not math.isfinite(val_total):
            raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
        history.append(
            EpochRecord(
                epoch=epoch,
                lr=lr,
                train_total=ep_total / n,
                train_recon=ep_recon / n,
                train_l1=ep_l1 / n,
                val_total=val_total,
                val_recon=val_recon,
                val_l1=val_l1,
            )
        )
        decision = tracker.update(val_total)
        if decision.improved:
            best_snapshot = model.state_snapshot()
            best_epoch = epoch
        if decision.reduce_lr:
            lr = lr / cfg.plateau_factor
            log.info("epoch %d: val loss plateaued, lr -> %g", epoch, lr)
        log.debug(
            "epoch %d: train %.6g val %.6g (best %.6g @ %d)",
            epoch, ep_total / n, val_total, tracker.best, best_epoch,
        )
        if decision.stop:
            log.info("early stop at epoch %d (no improvement for %d epochs)", epoch, tracker.stall)
            break

    model.load_snapshot(best_snapshot)
    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_val_loss=tracker.best,
    )
