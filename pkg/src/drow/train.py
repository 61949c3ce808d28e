"""Training loop for the window classifier/regressor."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import SensorConfig
from .nn.loss import drow_loss
from .nn.model import Model, drow_cnn, init
from .nn.optim import AdaDelta
from .preprocess import PreprocessConfig, cut_windows, flip_batch, jitter_batch, make_targets

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batches_per_epoch: int = 40
    batch_size: int = 1024
    object_fraction: float = 0.5  # share of object windows in every batch
    flip_prob: float = 0.5
    noise_scale: float = 0.05
    rho: float = 0.95
    eps: float = 1e-7
    patience: int = 6  # epochs without validation improvement before stopping
    min_delta: float = 1e-4
    valid_windows: int = 4096
    seed: int = 0
    max_seconds: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WindowSet:
    x: np.ndarray  # (N, n) float32
    labels: np.ndarray
    offsets: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "WindowSet":
        return WindowSet(self.x[idx], self.labels[idx], self.offsets[idx], self.mask[idx])


def build_windows(frames, pre: PreprocessConfig, sensor: SensorConfig) -> WindowSet:
    xs, ls, os_, ms = [], [], [], []
    for f in frames:
        xs.append(cut_windows(f.scan, pre, sensor).astype(np.float32))
        lab, off, m = make_targets(f.scan, f.annotations, sensor, pre.offset_mode)
        ls.append(lab)
        os_.append(off)
        ms.append(m)
    n = pre.n
    if not xs:
        return WindowSet(np.zeros((0, n), np.float32), np.zeros(0, np.int64), np.zeros((0, 2)),
                         np.zeros(0, bool))
    return WindowSet(np.concatenate(xs), np.concatenate(ls), np.concatenate(os_), np.concatenate(ms))


def _balanced_indices(labels, size, fraction, rng):
    obj = np.flatnonzero(labels > 0)
    bg = np.flatnonzero(labels == 0)
    if len(obj) == 0 or len(bg) == 0:
        return rng.integers(0, len(labels), size)
    n_obj = int(round(size * fraction))
    return np.concatenate([rng.choice(obj, n_obj), rng.choice(bg, size - n_obj)])


def evaluate_loss(model: Model, ws: WindowSet, batch_size: int = 4096) -> float:
    total = 0.0
    for i in range(0, len(ws), batch_size):
        sl = slice(i, i + batch_size)
        out = model.forward(ws.x[sl])
        total += drow_loss(out, ws.labels[sl], ws.offsets[sl], ws.mask[sl])[0] * len(ws.x[sl])
    return total / max(len(ws), 1)


@dataclass
class History:
    train_loss: list
    valid_loss: list
    seconds: float
    best_epoch: int
    stopped_early: bool


def train(train_set: WindowSet, valid_set: WindowSet | None, spec=None, cfg: TrainConfig = TrainConfig(),
          input_length: int = 48, model: Model | None = None, offset_mode: str = "local",
          on_epoch=None):
    """Train from scratch (or continue ``model``); returns ``(model, history)``.

    Batches are class balanced between background and object windows and augmented by
    random flips and multiplicative target noise.  The parameters with the lowest
    validation loss are restored at the end.
    """
    rng = np.random.default_rng(cfg.seed)
    model = model or init(spec or drow_cnn(), cfg.seed, input_length)
    opt = AdaDelta(cfg.rho, cfg.eps)
    params = dict(model.named_params())

    if valid_set is not None and len(valid_set):
        vrng = np.random.default_rng([cfg.seed, 1])
        vidx = _balanced_indices(valid_set.labels, min(cfg.valid_windows, len(valid_set)),
                                 cfg.object_fraction, vrng)
        valid_sub = valid_set.take(np.sort(vidx))
    else:
        valid_sub = None

    start = time.perf_counter()
    tr_hist, va_hist = [], []
    best, best_epoch, best_state, bad = np.inf, -1, model.state(), 0
    stopped = False
    for epoch in range(cfg.epochs):
        losses = []
        for _ in range(cfg.batches_per_epoch):
            idx = _balanced_indices(train_set.labels, cfg.batch_size, cfg.object_fraction, rng)
            b = train_set.take(idx)
            x, off = flip_batch(b.x, b.offsets, rng.random(len(idx)) < cfg.flip_prob,
                                 offset_mode)
            if cfg.noise_scale > 0:
                off = jitter_batch(off, b.mask, rng, cfg.noise_scale)
            out = model.forward(x, train=True)
            value, dout = drow_loss(out, b.labels, off, b.mask)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}; "
                                    f"max |output| = {np.nanmax(np.abs(out)):.3g}")
            opt.step(params, model.backward(dout))
            losses.append(value)
        tr_hist.append(float(np.mean(losses)))
        vloss = evaluate_loss(model, valid_sub) if valid_sub is not None else tr_hist[-1]
        va_hist.append(vloss)
        log.info("epoch %d train %.4f valid %.4f (%.0fs)", epoch, tr_hist[-1], vloss,
                 time.perf_counter() - start)
        if on_epoch is not None:
            on_epoch(epoch, tr_hist[-1], vloss)
        if vloss < best - cfg.min_delta:
            best, best_epoch, best_state, bad = vloss, epoch, model.state(), 0
        else:
            bad += 1
            if bad >= cfg.patience:
                stopped = epoch < cfg.epochs - 1
                break
        if cfg.max_seconds is not None and time.perf_counter() - start > cfg.max_seconds:
            stopped = epoch < cfg.epochs - 1
            break
    model.load_state(best_state)
    return model, History(tr_hist, va_hist, time.perf_counter() - start, best_epoch, stopped)

