"""Mini-batch training: Adam with bias correction, seeded shuffles, an
optional validation split, and a learning-rate schedule (halving on plateau,
or cosine decay down to min_lr). With restore_best the weights and running
statistics from the best watched-loss epoch are put back at the end, so a
late bad epoch cannot spoil the returned model. A non-finite batch loss
aborts with the epoch index rather than training onward on NaNs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from .network import mse_loss


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 1000
    lr: float = 1e-3
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    plateau_rtol: float = 1e-3
    min_lr: float = 1e-5
    val_fraction: float = 0.1
    schedule: str = "plateau"
    restore_best: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.schedule not in ("plateau", "cosine"):
            raise ValueError(
                f"schedule must be 'plateau' or 'cosine', got {self.schedule!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not (math.isfinite(self.lr) and self.lr > 0.0):
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.plateau_factor <= 1.0:
            raise ValueError(f"plateau_factor must be in (0, 1], got {self.plateau_factor}")
        if self.plateau_patience < 1:
            raise ValueError(f"plateau_patience must be at least 1, got {self.plateau_patience}")
        if not 0.0 <= self.plateau_rtol < 1.0:
            raise ValueError(f"plateau_rtol must be in [0, 1), got {self.plateau_rtol}")
        if not 0.0 < self.min_lr <= self.lr:
            raise ValueError(f"min_lr must be in (0, lr], got {self.min_lr}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass
class TrainResult:
    """Per-epoch loss history. ``val_loss`` mirrors ``train_loss`` when no
    validation split was requested; ``val_indices`` are the dataset rows that
    were held out (empty array for val_fraction=0)."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    val_indices: np.ndarray = field(default_factory=lambda: np.empty(0, int))

    @property
    def final_loss(self):
        return self.train_loss[-1] if self.train_loss else None


class _Adam:
    _BETA1 = 0.9
    _BETA2 = 0.999
    _EPS = 1e-8

    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float):
        self.t += 1
        c1 = 1.0 - self._BETA1 ** self.t
        c2 = 1.0 - self._BETA2 ** self.t
        for k, g in grads.items():
            m = self.m[k] = self._BETA1 * self.m[k] + (1.0 - self._BETA1) * g
            v = self.v[k] = self._BETA2 * self.v[k] + (1.0 - self._BETA2) * (g * g)
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self._EPS)


def _cosine_lr(cfg: TrainConfig, epoch: int) -> float:
    if cfg.epochs <= 1:
        return cfg.lr
    phase = math.pi * epoch / (cfg.epochs - 1)
    return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + math.cos(phase))


def _snapshot(params: dict, state: dict) -> tuple:
    return ({k: v.copy() for k, v in params.items()},
            {k: np.copy(v) for k, v in state.items()})


def _restore(params: dict, state: dict, snap: tuple) -> None:
    saved_params, saved_state = snap
    for k, v in saved_params.items():
        params[k][...] = v
    for k, v in saved_state.items():
        state[k] = np.copy(v)


def _epoch_loss(model, x, y, batch_size):
    """Loss in eval mode, streamed in batches to bound memory."""
    total = 0.0
    for lo in range(0, x.shape[0], batch_size):
        xb = x[lo:lo + batch_size]
        yb = y[lo:lo + batch_size]
        out = model.forward(xb, train=False)
        total += float(np.sum((out - yb) ** 2))
    return total / y.size


def train(model, x, y, cfg: TrainConfig) -> TrainResult:
    """Train ``model`` in place on (x, y) and return the loss history.

    ``model`` is anything exposing trainable_params / forward_cached /
    backward (a Network or a composed network). The validation split, the
    shuffles, and therefore the trained weights are fully determined by
    cfg.seed.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"need matching 2-d x, y; got {x.shape}, {y.shape}")
    n = x.shape[0]
    if n == 0:
        raise ValueError("training set is empty")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(n * cfg.val_fraction))
    if n_val >= n:
        n_val = n - 1
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    x_tr, y_tr = x[tr_idx], y[tr_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    params = model.trainable_params()
    state = getattr(model, "state", {})
    opt = _Adam(params)
    lr = cfg.lr
    best = math.inf
    best_watched = math.inf
    best_snap = None
    stall = 0
    result = TrainResult(val_indices=val_idx.copy())

    for epoch in range(cfg.epochs):
        if cfg.schedule == "cosine":
            lr = _cosine_lr(cfg, epoch)
        order = rng.permutation(x_tr.shape[0])
        running = 0.0
        for lo in range(0, order.size, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            out, caches = model.forward_cached(x_tr[idx], train=True)
            loss, dy = mse_loss(out, y_tr[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}", epoch=epoch
                )
            running += loss * idx.size
            grads, _ = model.backward(caches, dy)
            opt.step(params, grads, lr)
        result.train_loss.append(running / x_tr.shape[0])
        watched = (_epoch_loss(model, x_val, y_val, cfg.batch_size)
                   if n_val else result.train_loss[-1])
        result.val_loss.append(watched)
        result.lr.append(lr)

        if cfg.restore_best and watched < best_watched:
            best_watched = watched
            best_snap = _snapshot(params, state)

        if cfg.schedule == "plateau":
            # A "plateau" is relative: progress slower than plateau_rtol per
            # improvement does not reset the stall counter, so the halving
            # fires during slow drifts, not only on exact stagnation.
            if watched < best * (1.0 - cfg.plateau_rtol) - 1e-300:
                best = watched
                stall = 0
            else:
                best = min(best, watched)
                stall += 1
                if stall >= cfg.plateau_patience:
                    lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                    stall = 0
    if best_snap is not None:
        _restore(params, state, best_snap)
    return result


def smoothed_decreasing(history, window: int = 10, slack: float = 0.05) -> bool:
    """Whether a loss history trends downward once smoothed: every moving
    average over ``window`` epochs may exceed the best average seen so far by
    at most a factor (1 + slack), and the last average improves on the first."""
    vals = np.asarray(history, dtype=np.float64)
    if vals.size < 2 * window:
        return bool(vals[-1] <= vals[0])
    ma = np.convolve(vals, np.ones(window) / window, mode="valid")
    best = np.minimum.accumulate(ma)
    if np.any(ma > best * (1.0 + slack)):
        return False
    return bool(ma[-1] < ma[0])
