"""Adam + L2 training loop with patience-based early stopping and learning-rate sweeps."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ArrayDataset, AugmentationConfig, batches
from .models import ModelGraph, build_model, forward, predict

log = logging.getLogger(__name__)

CURVE_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
SUMMARY_HEADER = ["lr", "best_val_acc", "best_epoch", "stopped_epoch", "stop_reason", "flag"]
# a finished run whose final val accuracy is below this multiple of chance is flagged
NEAR_CHANCE_FACTOR = 1.5
LR_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


class DivergedTrainingError(RuntimeError):
    def __init__(self, epoch: int, loss: float, history: "TrainingHistory | None" = None):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss
        self.history = history


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 200
    batch_size: int = 32
    patience: int = 15
    early_stop: bool = True
    l2_lambda: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augmentation: AugmentationConfig | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    stop_reason: str = ""
    best_epoch: int = 0

    def append(self, train_loss, train_acc, val_loss, val_acc) -> None:
        self.train_loss.append(float(train_loss))
        self.train_acc.append(float(train_acc))
        self.val_loss.append(float(val_loss))
        self.val_acc.append(float(val_acc))
        self.stopped_epoch = len(self.val_loss)
        self.best_epoch = int(np.argmin(self.val_loss)) + 1

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CURVE_HEADER)
            for i in range(len(self.val_loss)):
                w.writerow([i + 1] + [f"{v:.6g}" for v in (
                    self.train_loss[i], self.train_acc[i], self.val_loss[i], self.val_acc[i])])


# ----------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], m: Sequence[np.ndarray],
              v: Sequence[np.ndarray], t: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place Adam update with bias correction; ``t`` counts from 1."""
    if t < 1:
        raise ValueError("Adam step count t starts at 1")
    bc1 = 1 - beta1 ** t
    bc2 = 1 - beta2 ** t
    for p, g, mi, vi in zip(params, grads, m, v, strict=True):
        if not (p.shape == g.shape == mi.shape == vi.shape):
            raise ad.DimensionError(f"Adam shapes disagree: {p.shape} {g.shape} {mi.shape} {vi.shape}")
        mi *= beta1
        mi += (1 - beta1) * g
        vi *= beta2
        vi += (1 - beta2) * g * g
        p -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)


class Adam:
    def __init__(self, tensors: Mapping[str, Tensor], cfg: TrainConfig):
        self.names = list(tensors)
        self.tensors = [tensors[k] for k in self.names]
        self.cfg = cfg
        self.state = AdamState([np.zeros_like(t.data) for t in self.tensors],
                               [np.zeros_like(t.data) for t in self.tensors])

    def step(self) -> None:
        self.state.t += 1
        live = [i for i, t in enumerate(self.tensors) if t.grad is not None]
        c = self.cfg
        adam_step([self.tensors[i].data for i in live],
                  [self.tensors[i].grad.astype(self.tensors[i].dtype, copy=False) for i in live],
                  [self.state.m[i] for i in live], [self.state.v[i] for i in live],
                  self.state.t, c.learning_rate, c.beta1, c.beta2, c.eps)


# ----------------------------------------------------------------- loss pieces


def l2_weights(model: ModelGraph) -> list[Tensor]:
    """Conv and dense kernels; biases and batch-norm parameters are not penalized."""
    return [t for k, t in model.trainable().items() if k.endswith(".weight")]


def regularized_loss(data_loss, weights: Sequence[Tensor], lam: float):
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0 or not weights:
        return data_loss
    penalty = None
    for w in weights:
        sq = ad.tsum(ad.mul(w, w))
        penalty = sq if penalty is None else ad.add(penalty, sq)
    return ad.add(data_loss, ad.mul(penalty, lam))


def should_stop(val_losses: Sequence[float], patience: int) -> bool:
    """True once the last ``patience`` epochs all failed to beat the running best strictly."""
    if patience < 1:
        raise ValueError("patience must be >= 1")
    best = math.inf
    stale = 0
    for loss in val_losses:
        if loss < best:
            best = loss
            stale = 0
        else:
            stale += 1
    return stale >= patience


# ----------------------------------------------------------------- fit


def evaluate_loss(model: ModelGraph, data: ArrayDataset, batch_size: int = 32) -> tuple[float, float]:
    """Mean data loss and accuracy in eval mode."""
    logits = predict(model, data.images, batch_size)
    logp = ad.log_softmax(logits.astype(np.float64))
    loss = -logp[np.arange(len(data)), data.labels].mean()
    acc = float((logits.argmax(axis=1) == data.labels).mean())
    return float(loss), acc


EvalHook = Callable[[ModelGraph, int], tuple[float, float]]


def fit(model: ModelGraph, train_set: ArrayDataset, val_set: ArrayDataset | None, cfg: TrainConfig,
        eval_hook: EvalHook | None = None, progress: Callable[[int, TrainingHistory], None] | None = None
        ) -> TrainingHistory:
    """Train ``model`` in place.

    ``eval_hook(model, epoch)`` replaces the validation pass when given. On
    early stop the parameters and batch-norm statistics of the best epoch
    are restored.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if val_set is None and eval_hook is None:
        raise ValueError("need a validation set or an eval hook")
    if val_set is not None and len(val_set) == 0:
        raise ValueError("validation set is empty")
    model.dropout_rng = np.random.default_rng([cfg.seed, 7])
    opt = Adam(model.trainable(), cfg)
    weights = l2_weights(model)
    hist = TrainingHistory()
    best_loss, best_state = math.inf, None

    for epoch in range(1, cfg.max_epochs + 1):
        tot_loss, correct, seen = 0.0, 0, 0
        for xb, yb in batches(train_set, cfg.batch_size, cfg.seed, augmentation=cfg.augmentation,
                              epoch=epoch):
            model.zero_grad()
            # overflow on the way to a non-finite loss is reported below, not warned about
            with np.errstate(over="ignore", invalid="ignore"):
                logits = forward(model, xb, training=True)
                data_loss, probs = ad.softmax_cross_entropy(logits, yb)
                loss = regularized_loss(data_loss, weights, cfg.l2_lambda)
                lv = float(data_loss.data)
                if not math.isfinite(float(loss.data)):
                    raise DivergedTrainingError(epoch, float(loss.data), hist)
                loss.backward()
                opt.step()
            tot_loss += lv * len(yb)
            correct += int((probs.argmax(axis=1) == yb).sum())
            seen += len(yb)
        with np.errstate(over="ignore", invalid="ignore"):
            if eval_hook is not None:
                val_loss, val_acc = eval_hook(model, epoch)
            else:
                val_loss, val_acc = evaluate_loss(model, val_set, cfg.batch_size)
        if not math.isfinite(val_loss):
            raise DivergedTrainingError(epoch, val_loss, hist)
        hist.append(tot_loss / seen, correct / seen, val_loss, val_acc)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = model.state_dict() if cfg.early_stop else None
        if progress:
            progress(epoch, hist)
        if cfg.early_stop and should_stop(hist.val_loss, cfg.patience):
            hist.stop_reason = "early_stop"
            if best_state is not None:
                model.load_state_dict(best_state)
            log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
            return hist
    hist.stop_reason = "max_epochs"
    return hist


# ----------------------------------------------------------------- sweep


def _lr_tag(lr: float) -> str:
    return f"{lr:.0e}".replace("+", "")


def lr_sweep(arch: str, grid: Sequence[float], cfg: TrainConfig, train_set: ArrayDataset,
             val_set: ArrayDataset, out_dir: str | Path | None = None, model_kwargs: dict | None = None
             ) -> dict[float, TrainingHistory | None]:
    """Independent seeded runs per learning rate; a failing run doesn't stop the others.

    Writes ``curve_lr<lr>.csv`` per run and ``summary.csv`` when ``out_dir`` is given.
    Diverged runs map to ``None`` and show ``diverged`` as their stop reason; the
    summary's ``flag`` column marks them, and finished runs that ended near chance.
    """
    if not grid:
        raise ValueError("learning-rate grid is empty")
    model_kwargs = dict(model_kwargs or {})
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    results: dict[float, TrainingHistory | None] = {}
    summary = []
    chance = 1.0 / max(len(val_set.class_names), int(val_set.labels.max()) + 1, 2)
    for lr in grid:
        run_cfg = TrainConfig(**{**cfg.__dict__, "learning_rate": lr})
        model = build_model(arch, seed=cfg.seed, **model_kwargs)
        try:
            hist = fit(model, train_set, val_set, run_cfg)
        except DivergedTrainingError as e:
            log.warning("lr=%g: %s", lr, e)
            results[lr] = None
            partial = e.history or TrainingHistory()
            best = f"{max(partial.val_acc):.6g}" if partial.val_acc else "nan"
            summary.append([f"{lr:g}", best, partial.best_epoch, e.epoch, "diverged", "diverged"])
            if out is not None:
                partial.write_csv(out / f"curve_lr{_lr_tag(lr)}.csv")
            continue
        results[lr] = hist
        best = max(hist.val_acc)
        flag = "near_chance" if hist.val_acc[-1] < NEAR_CHANCE_FACTOR * chance else ""
        summary.append([f"{lr:g}", f"{best:.6g}", hist.best_epoch, hist.stopped_epoch, hist.stop_reason,
                        flag])
        if out is not None:
            hist.write_csv(out / f"curve_lr{_lr_tag(lr)}.csv")
    if out is not None:
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER)
            w.writerows(summary)
    return results


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
