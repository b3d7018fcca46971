"""Training loops: plain BCE, mixup with Beta-drawn per-sample weights, temperature
softmax on the two logits, stepped learning-rate decay and best-checkpoint selection.

Models are duck-typed: ``params``/``grads`` dicts of arrays, ``forward(X) -> (m, 2)``
logits and ``backward(dlogits)``. An optional ``constrain()`` runs after each step.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .errors import BatchTooSmallError, InvalidParameterError, NonFiniteLossError
from .fusion import auc
from .numerics import Adam, Rng, bce_loss, margin_bce, sample_beta, softmax_with_temperature

log = logging.getLogger(__name__)

# Temperatures and mixup strength per modality (alpha, tau).
MODALITY_HPARAMS = {
    "breathing": (0.4, 0.001),
    "cough": (0.4, 0.1),
    "speech": (0.4, 0.01),
}


@dataclass
class MiniBatch:
    X: np.ndarray
    Y: np.ndarray  # mixed (possibly fractional) targets
    lam: np.ndarray  # (m,)
    perm: np.ndarray
    Y_m: np.ndarray
    Y_n: np.ndarray


@dataclass(frozen=True)
class LrSchedule:
    lr0: float = 0.001
    factor: float = 0.9085
    step_epochs: int = 2
    total_epochs: int = 48

    def __post_init__(self):
        if self.lr0 < 0 or not 0 < self.factor <= 1 or self.step_epochs < 1 or self.total_epochs < 1:
            raise InvalidParameterError(f"bad schedule {self}")

    def epoch_reaching(self, fraction: float) -> int | None:
        """First epoch at which lr <= fraction * lr0, or None if the factor never gets there."""
        if self.factor >= 1:
            return None
        steps = math.ceil(math.log(fraction) / math.log(self.factor) - 1e-9)
        return steps * self.step_epochs


def lr_at(epoch: int, sched: LrSchedule) -> float:
    """lr0 * factor ** floor(epoch / step_epochs)."""
    if not 0 <= epoch < sched.total_epochs:
        raise InvalidParameterError(f"epoch {epoch} outside [0, {sched.total_epochs})")
    return sched.lr0 * sched.factor ** (epoch // sched.step_epochs)


def schedule_note(sched: LrSchedule) -> str:
    """Where the schedule reaches a tenth of its start, against the 24-epoch reading."""
    tenth = sched.epoch_reaching(0.1)
    if tenth is None:
        return "lr schedule: constant, never reaches lr0/10"
    per_epoch = LrSchedule(sched.lr0, sched.factor, 1, sched.total_epochs).epoch_reaching(0.1)
    note = (
        f"lr schedule: factor {sched.factor} every {sched.step_epochs} epoch(s) reaches lr0/10 "
        f"at epoch {tenth}"
    )
    if sched.step_epochs != 1 and tenth != 24:
        note += (
            f"; a 24-epoch decade is only met by stepping every epoch (epoch {per_epoch}), "
            "set lr_step_epochs=1 for that reading"
        )
    return note


@dataclass
class TrainConfig:
    alpha: float | None = None  # mixup Beta parameter; None trains without mixup
    tau: float = 1.0
    lr0: float = 0.001
    lr_factor: float = 0.9085
    lr_step_epochs: int = 2
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    force_lambda: float | None = None  # pins every mixup weight (testing / ablation)
    lr_scale: dict = field(default_factory=dict)  # per-parameter multipliers

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidParameterError("alpha must be positive")
        if not self.tau > 0:
            raise InvalidParameterError("tau must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParameterError("epochs and batch_size must be positive")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr0, self.lr_factor, self.lr_step_epochs, self.epochs)

    @property
    def mixup(self) -> bool:
        return self.alpha is not None or self.force_lambda is not None

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


# -- mixup ---------------------------------------------------------------------


def mixup_batch(X, Y, alpha: float, rng: Rng, lam=None) -> MiniBatch:
    """Convex-combine each sample with a shuffled partner, inputs and targets alike.

    One weight per sample is drawn from Beta(alpha, alpha) unless ``lam`` pins it.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    m = X.shape[0]
    if m < 2:
        raise BatchTooSmallError("mixup needs at least two samples per batch")
    if lam is None:
        lam = sample_beta(alpha, rng, m)
    else:
        lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (m,)).copy()
    perm = rng.permutation(m)
    lx = lam.reshape((m,) + (1,) * (X.ndim - 1))
    Xm = lx * X + (1.0 - lx) * X[perm]
    Ym = lam * Y + (1.0 - lam) * Y[perm]
    return MiniBatch(Xm, Ym, lam, perm, Y, Y[perm])


def mixup_loss(y_hat, Y_m, Y_n, lam) -> float:
    """Batch mean of lam * BCE(y_hat, Y_m) + (1 - lam) * BCE(y_hat, Y_n)."""
    lam = np.asarray(lam, dtype=np.float64)
    return float(np.mean(lam * bce_loss(y_hat, Y_m) + (1.0 - lam) * bce_loss(y_hat, Y_n)))


# -- loops ---------------------------------------------------------------------


def positive_margin(logits: np.ndarray, tau: float) -> np.ndarray:
    """log-odds of the positive class under softmax(logits / tau)."""
    return (logits[:, 1] - logits[:, 0]) / tau


def logits_loss(logits: np.ndarray, target: np.ndarray, tau: float):
    """Mean BCE of softmax(logits / tau)[:, 1] against ``target`` and its logit gradient."""
    loss, du = margin_bce(positive_margin(logits, tau), target)
    m = logits.shape[0]
    g = du / (tau * m)
    return float(np.mean(loss)), np.stack([-g, g], axis=1)


def _batches(n: int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return np.array_split(order, max(1, math.ceil(n / batch_size)))


def _step(model, opt: Adam, X, target, tau, lr, cfg, bi, lam=None) -> float:
    logits = model.forward(X)
    loss, dlogits = logits_loss(logits, target, tau)
    if not math.isfinite(loss):
        msg = f"non-finite loss at batch {bi}"
        if lam is not None:
            msg += f" (lambda min {lam.min():.3g} mean {lam.mean():.3g} max {lam.max():.3g})"
        raise NonFiniteLossError(msg)
    model.backward(dlogits)
    opt.step(model.params, model.grads, lr, cfg.lr_scale)
    if hasattr(model, "constrain"):
        model.constrain()
    return loss


def train_epoch_plain(model, data, cfg: TrainConfig, rng: Rng, opt: Adam, lr: float) -> float:
    X, y = data
    losses = []
    for bi, idx in enumerate(_batches(len(y), cfg.batch_size, rng.derive(0))):
        losses.append(_step(model, opt, X[idx], y[idx], cfg.tau, lr, cfg, bi))
    return float(np.mean(losses))


def train_epoch_mixup(model, data, cfg: TrainConfig, rng: Rng, opt: Adam, lr: float) -> float:
    """One pass of mixup training; batch order matches ``train_epoch_plain`` for the same rng."""
    X, y = data
    mix_rng = rng.derive(1)
    losses = []
    for bi, idx in enumerate(_batches(len(y), cfg.batch_size, rng.derive(0))):
        mb = mixup_batch(X[idx], y[idx], cfg.alpha, mix_rng, lam=cfg.force_lambda)
        # BCE is linear in the target, so the mixed target gives the two-term mixup loss.
        losses.append(_step(model, opt, mb.X, mb.Y, cfg.tau, lr, cfg, bi, mb.lam))
    return float(np.mean(losses))


def predict_logits(model, X, batch_size: int = 64) -> np.ndarray:
    out = [model.forward(X[i : i + batch_size]) for i in range(0, len(X), batch_size)]
    return np.concatenate(out, axis=0)


def positive_scores(logits: np.ndarray) -> np.ndarray:
    """Positive-class probability at unit temperature, the exported score."""
    return softmax_with_temperature(logits, 1.0)[:, 1]


@dataclass
class EpochRecord:
    epoch: int
    split: str
    loss: float
    auc: float
    lr: float


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_val_loss: float
    notes: list[str]


def _snapshot(model) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.params.items()}


def _restore(model, snap) -> None:
    for k, v in snap.items():
        model.params[k][...] = v


def evaluate(model, data, tau: float) -> tuple[float, float]:
    X, y = data
    logits = predict_logits(model, X)
    loss, _ = logits_loss(logits, y, tau)
    try:
        a = auc(positive_scores(logits), y)
    except ValueError:
        a = float("nan")
    return loss, a


def fit(model, train, val, cfg: TrainConfig, log_path=None) -> TrainResult:
    """Train for ``cfg.epochs``; keeps the parameters with the lowest validation loss."""
    sched = cfg.schedule
    note = schedule_note(sched)
    log.info(note)
    opt = Adam()
    run_rng = Rng(cfg.seed)
    history: list[EpochRecord] = []
    best = (math.inf, -1, None)
    epoch_fn = train_epoch_mixup if cfg.mixup else train_epoch_plain
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, sched)
        loss = epoch_fn(model, train, cfg, run_rng.derive(epoch), opt, lr)
        history.append(EpochRecord(epoch, "train", loss, float("nan"), lr))
        if val is not None:
            vloss, vauc = evaluate(model, val, cfg.tau)
            history.append(EpochRecord(epoch, "val", vloss, vauc, lr))
            if vloss < best[0]:
                best = (vloss, epoch, _snapshot(model))
    if best[2] is not None:
        _restore(model, best[2])
    if log_path is not None:
        write_train_log(log_path, history)
    return TrainResult(history, best[1], best[0], [note])


def write_train_log(path, history: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epoch", "split", "loss", "auc", "lr"])
        for r in history:
            wr.writerow([r.epoch, r.split, repr(r.loss), repr(r.auc), repr(r.lr)])
