"""Adam with decoupled weight decay, learning-rate schedules and the fit loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLossError, NonFiniteUpdateError
from .field import SequenceDataset
from .loss import LossWeights, compute_loss
from .rng import stream
from .shred import ModelParams, ShredModel, backward, forward, save_params

log = logging.getLogger(__name__)

PLATEAU_REL_TOL = 1e-6
LR_FACTOR = 0.5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    epoch_step: int = 50
    scheduler: str = "plateau"
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps_adam: float = 1e-8

    def __post_init__(self):
        for name in ("epochs", "batch_size", "patience", "epoch_step"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.scheduler not in ("plateau", "step"):
            raise ValueError("scheduler must be 'plateau' or 'step'")


@dataclass
class TrainState:
    params: ModelParams
    lr_current: float
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    best_params: ModelParams | None = None
    best_val_loss: float = float("inf")
    epochs_since_improve: int = 0
    epoch: int = 0
    sched_best: float = float("inf")
    sched_bad: int = 0

    @classmethod
    def start(cls, params: ModelParams, lr: float) -> "TrainState":
        named = params.named()
        return cls(
            params=params,
            lr_current=lr,
            m={k: np.zeros_like(t) for k, t in named.items()},
            v={k: np.zeros_like(t) for k, t in named.items()},
            best_params=params.copy(),
        )


def adam_step(state: TrainState, grads: ModelParams, lr: float | None = None,
              betas=(0.9, 0.999), eps_adam: float = 1e-8, weight_decay: float = 0.0) -> TrainState:
    """In-place Adam update with decoupled decay ``theta -= lr * w * theta``."""
    lr = state.lr_current if lr is None else lr
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    g_named = grads.named()
    for name, theta in state.params.named().items():
        g = g_named[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps_adam)
        if weight_decay:
            theta -= lr * weight_decay * theta
        theta -= update
        if not np.all(np.isfinite(theta)):
            raise NonFiniteUpdateError(f"parameter {name} became non-finite")
    return state


def _improved(value: float, best: float) -> bool:
    if not np.isfinite(best):
        return value < best
    return value < best - PLATEAU_REL_TOL * abs(best)


def scheduler_step(state: TrainState, val_loss: float, cfg: TrainConfig) -> TrainState:
    """Halve the learning rate on plateau, or every ``epoch_step`` epochs."""
    if cfg.scheduler == "step":
        if state.epoch > 0 and state.epoch % cfg.epoch_step == 0:
            state.lr_current *= LR_FACTOR
        return state
    if _improved(val_loss, state.sched_best):
        state.sched_best = val_loss
        state.sched_bad = 0
    else:
        state.sched_bad += 1
        if state.sched_bad >= cfg.epoch_step:
            state.lr_current *= LR_FACTOR
            state.sched_bad = 0
    return state


def evaluate_loss(params: ModelParams, inputs, targets, weights: LossWeights):
    pred = forward(inputs, params, mode="eval")
    return compute_loss(pred, targets, params, weights)


@dataclass
class History:
    rows: list = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, lr, mean_snr):
        self.rows.append((epoch, train_loss, val_loss, lr, mean_snr))

    def __len__(self):
        return len(self.rows)

    def to_text(self) -> str:
        lines = ["epoch\ttrain_loss\tval_loss\tlr\tmean_snr"]
        lines += [f"{e}\t{t!r}\t{v!r}\t{lr!r}\t{s!r}" for e, t, v, lr, s in self.rows]
        return "\n".join(lines) + "\n"


def fit(model: ShredModel, train_ds: SequenceDataset, val_ds: SequenceDataset,
        cfg: TrainConfig, weights: LossWeights, dump_path=None):
    """Train ``model`` and return ``(model_with_best_params, history)``.

    Validation runs every epoch; training stops once ``patience``
    consecutive validations fail to beat the best loss.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation sets must be non-empty")
    per_batch = model.recovery and model.recovery_mode == "every-forward"
    x_train = train_ds.inputs if per_batch else model.prepare(train_ds.inputs, train_ds.missing)
    x_val = model.prepare(val_ds.inputs, val_ds.missing)
    y_train, y_val = train_ds.targets, val_ds.targets

    state = TrainState.start(model.params.copy(), cfg.lr)
    shuffle_rng = stream(cfg.seed, "shuffle")
    dropout_rng = stream(cfg.seed, "dropout")
    history = History()
    n = len(train_ds)

    for epoch in range(1, cfg.epochs + 1):
        state.epoch = epoch
        lr_epoch = state.lr_current
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if per_batch:
                miss = None if train_ds.missing is None else train_ds.missing[idx]
                xb = model.prepare(x_train[idx], miss)
            else:
                xb = x_train[idx]
            try:
                grads, loss, _ = backward(xb, y_train[idx], state.params, weights,
                                          mode="train", rng=dropout_rng)
            except NonFiniteLossError:
                if dump_path is not None:
                    save_params(dump_path, state.params, {"epoch": epoch, "error": "NonFiniteLoss"})
                raise
            adam_step(state, grads, state.lr_current, cfg.betas, cfg.eps_adam, weights.weight_decay)
            total += loss * len(idx)
        val_loss, parts = evaluate_loss(state.params, x_val, y_val, weights)
        history.append(epoch, total / n, val_loss, lr_epoch, parts["snr_db"])
        log.debug("epoch %d train %.6g val %.6g lr %.3g", epoch, total / n, val_loss, lr_epoch)

        if val_loss < state.best_val_loss:
            state.best_val_loss = val_loss
            state.best_params = state.params.copy()
            state.epochs_since_improve = 0
        else:
            state.epochs_since_improve += 1
        scheduler_step(state, val_loss, cfg)
        if state.epochs_since_improve >= cfg.patience:
            log.info("early stop at epoch %d (best val %.6g)", epoch, state.best_val_loss)
            break

    best = ShredModel(state.best_params, model.recovery, model.solver, model.recovery_mode, model.cache)
    return best, history
