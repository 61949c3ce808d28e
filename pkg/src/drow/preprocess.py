"""Depth-normalised windows around every beam and their training targets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataio import Klass
from .geometry import (LocalFrame, Scan, SensorConfig, beam_angles, polar_offset,
                       scan_points, to_local_many, window_angle)

# Maximum center distance for a window to be labelled with an annotation's class.
LABEL_RADIUS = {Klass.WHEELCHAIR: 0.6, Klass.WALKER: 0.4}


@dataclass(frozen=True)
class PreprocessConfig:
    l: float = 1.66
    n: int = 48
    clamp_hull: float = 1.0
    do_center: bool = True
    do_clamp: bool = True
    do_resample: bool = True
    pad_value: float | None = None  # None means the sensor's range_max
    offset_mode: str = "local"  # "local" -> (dx, dy); "polar" -> (dphi, r)

    def __post_init__(self):
        if self.l <= 0 or self.n < 2 or self.clamp_hull <= 0:
            raise ValueError(f"invalid preprocessing config {self}")
        if self.offset_mode not in ("local", "polar"):
            raise ValueError(f"unknown offset_mode {self.offset_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(**d)


ABLATIONS = {
    "drow": PreprocessConfig(),
    "no-centering": PreprocessConfig(do_center=False),
    "no-clamping": PreprocessConfig(do_clamp=False),
    "no-resampling": PreprocessConfig(do_resample=False),
    "raw-window": PreprocessConfig(do_center=False, do_clamp=False, do_resample=False),
    "polar-offsets": PreprocessConfig(do_center=False, offset_mode="polar"),
    "window-1.10": PreprocessConfig(l=1.10),
    "window-2.20": PreprocessConfig(l=2.20),
}


@dataclass
class Window:
    samples: np.ndarray
    center_beam: int
    center_range: float
    frame: LocalFrame


@dataclass
class TrainingTarget:
    klass: Klass
    offset: tuple
    regression_mask: bool


def _normalize(values: np.ndarray, center: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    if cfg.do_center:
        values = values - center
    if cfg.do_clamp:
        h = cfg.clamp_hull
        values = np.clip(values, -h, h) / h
    return values


def cut_windows(scan: Scan, cfg: PreprocessConfig, sensor: SensorConfig) -> np.ndarray:
    """Windows for every beam of ``scan``, shape (num_beams, n)."""
    r = scan.ranges
    pad = sensor.range_max if cfg.pad_value is None else cfg.pad_value
    nb = len(r)
    if cfg.do_resample:
        phi = beam_angles(sensor)
        half = window_angle(cfg.l, r) / 2
        u = np.linspace(-1.0, 1.0, cfg.n)
        angles = phi[:, None] + half[:, None] * u[None, :]
        values = np.interp(angles.ravel(), phi, r, left=pad, right=pad).reshape(nb, cfg.n)
    else:
        idx = np.arange(nb)[:, None] + (np.arange(cfg.n) - cfg.n // 2)[None, :]
        inside = (idx >= 0) & (idx < nb)
        values = np.where(inside, r[np.clip(idx, 0, nb - 1)], pad)
    return _normalize(values, r[:, None], cfg)


def cut_window(scan: Scan, cfg: PreprocessConfig, i: int, sensor: SensorConfig | None = None) -> Window:
    sensor = sensor or SensorConfig(num_beams=len(scan.ranges))
    if not 0 <= i < len(scan.ranges):
        raise IndexError(f"beam index {i} out of range")
    # a one-beam computation would need the same interpolation table, so reuse the batch path
    samples = cut_windows(scan, cfg, sensor)[i]
    r = float(scan.ranges[i])
    return Window(samples, i, r, LocalFrame.at_beam(sensor, i, r))


def window_frames(scan: Scan, sensor: SensorConfig):
    """Origins (num_beams, 2) and rotations (num_beams,) of every window's local frame."""
    return scan_points(scan, sensor), beam_angles(sensor)


def encode_offsets(origins, rotations, points, mode: str = "local") -> np.ndarray:
    if mode == "local":
        return to_local_many(origins, rotations, points)
    return polar_offset(rotations, points)


def make_targets(scan: Scan, annotations, sensor: SensorConfig, mode: str = "local"):
    """Labels, regression offsets and regression mask for every beam of ``scan``.

    Each window takes the class of the annotation closest to its center point if that
    annotation lies within the class radius (0.6 m wheelchair, 0.4 m walker).
    """
    origins, rotations = window_frames(scan, sensor)
    nb = len(origins)
    labels = np.zeros(nb, dtype=np.int64)
    offsets = np.zeros((nb, 2))
    if not annotations:
        return labels, offsets, np.zeros(nb, dtype=bool)
    pos = np.array([a.position for a in annotations], dtype=np.float64)
    cls = np.array([int(a.klass) for a in annotations])
    radius = np.array([LABEL_RADIUS[Klass(c)] for c in cls])
    d = np.hypot(origins[:, None, 0] - pos[None, :, 0], origins[:, None, 1] - pos[None, :, 1])
    nearest = np.argmin(d, axis=1)
    hit = d[np.arange(nb), nearest] <= radius[nearest]
    labels[hit] = cls[nearest[hit]]
    offsets[hit] = encode_offsets(origins[hit], rotations[hit], pos[nearest[hit]], mode)
    return labels, offsets, hit


def make_target(window: Window, annotations, mode: str = "local") -> TrainingTarget:
    origin = np.asarray(window.frame.origin, dtype=np.float64)[None]
    if not annotations:
        return TrainingTarget(Klass.BACKGROUND, (0.0, 0.0), False)
    pos = np.array([a.position for a in annotations], dtype=np.float64)
    d = np.hypot(*(pos - origin).T)
    j = int(np.argmin(d))
    a = annotations[j]
    if d[j] > LABEL_RADIUS[a.klass]:
        return TrainingTarget(Klass.BACKGROUND, (0.0, 0.0), False)
    off = encode_offsets(origin, np.array([window.frame.rotation]), pos[j:j + 1], mode)[0]
    return TrainingTarget(a.klass, (float(off[0]), float(off[1])), True)


def _tangential(mode: str) -> int:
    return 1 if mode == "local" else 0


def flip(window: Window, target: TrainingTarget, mode: str = "local"):
    """Mirror a window about its center beam; the tangential offset changes sign."""
    w = replace(window, samples=np.asarray(window.samples)[::-1].copy())
    off = list(target.offset)
    off[_tangential(mode)] = -off[_tangential(mode)]
    return w, replace(target, offset=tuple(off))


def jitter_target(target: TrainingTarget, rng: np.random.Generator, noise_scale: float = 0.05):
    if noise_scale < 0:
        raise ValueError("noise_scale must be nonnegative")
    if not target.regression_mask or noise_scale == 0:
        return target
    f = rng.uniform(1 - noise_scale, 1 + noise_scale, size=2)
    return replace(target, offset=(target.offset[0] * f[0], target.offset[1] * f[1]))


# Batched augmentation used by the training loop.

def flip_batch(x: np.ndarray, offsets: np.ndarray, which: np.ndarray, mode: str = "local"):
    x = x.copy()
    offsets = offsets.copy()
    x[which] = x[which, ::-1]
    offsets[which, _tangential(mode)] *= -1
    return x, offsets


def jitter_batch(offsets: np.ndarray, mask: np.ndarray, rng: np.random.Generator, noise_scale: float):
    f = rng.uniform(1 - noise_scale, 1 + noise_scale, size=offsets.shape)
    return np.where(mask[:, None], offsets * f, offsets)
