"""Sensor geometry: beam angles, polar/cartesian conversion and window-local frames.

Local frame convention: the x-axis points radially away from the sensor along the
center beam, the y-axis points in the direction of increasing beam angle.  With this
convention mirroring a window about its center beam is exactly ``dy -> -dy``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SensorConfig:
    num_beams: int = 450
    fov: float = math.radians(225.0)
    range_min: float = 0.05
    range_max: float = 30.0

    def __post_init__(self):
        if int(self.num_beams) != self.num_beams or self.num_beams < 2:
            raise ValueError(f"num_beams must be an integer >= 2, got {self.num_beams}")
        if not 0.0 < self.fov <= 2.0 * math.pi:
            raise ValueError(f"fov must lie in (0, 2*pi], got {self.fov}")
        if not 0.0 < self.range_min < self.range_max:
            raise ValueError(
                f"need 0 < range_min < range_max, got {self.range_min}, {self.range_max}")

    @property
    def increment(self) -> float:
        return self.fov / (self.num_beams - 1)

    def to_dict(self) -> dict:
        return {"num_beams": self.num_beams, "fov": self.fov,
                "range_min": self.range_min, "range_max": self.range_max}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorConfig":
        return cls(int(d["num_beams"]), float(d["fov"]),
                   float(d["range_min"]), float(d["range_max"]))


@dataclass
class Scan:
    ranges: np.ndarray
    seq_id: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=np.float64)

    def sanitized(self, cfg: SensorConfig) -> "Scan":
        """Copy with non-finite and out-of-range returns replaced by ``range_max``."""
        return Scan(sanitize_ranges(self.ranges, cfg), self.seq_id, self.timestamp)


def sanitize_ranges(ranges, cfg: SensorConfig) -> np.ndarray:
    r = np.array(ranges, dtype=np.float64)
    bad = ~np.isfinite(r) | (r < cfg.range_min) | (r > cfg.range_max)
    r[bad] = cfg.range_max
    return r


def beam_angle(cfg: SensorConfig, i: int) -> float:
    if not 0 <= i < cfg.num_beams:
        raise IndexError(f"beam index {i} out of range [0, {cfg.num_beams})")
    return (i / (cfg.num_beams - 1) - 0.5) * cfg.fov


def beam_angles(cfg: SensorConfig) -> np.ndarray:
    """All beam angles, strictly increasing and symmetric about zero."""
    return (np.arange(cfg.num_beams) / (cfg.num_beams - 1) - 0.5) * cfg.fov


def polar_to_cart(r, phi):
    r = np.asarray(r, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    x, y = r * np.cos(phi), r * np.sin(phi)
    if x.ndim == 0:
        return float(x), float(y)
    return np.stack([x, y], axis=-1)


def scan_points(scan: Scan, cfg: SensorConfig) -> np.ndarray:
    """Hit points of every beam in the sensor frame, shape (num_beams, 2)."""
    return polar_to_cart(scan.ranges, beam_angles(cfg))


def window_angle(l, r):
    """Angular width of a window of real-world extent ``l`` seen at range ``r``.

    The arcsine argument is clamped to 1, so windows closer than ``l/2`` span pi.
    """
    arg = np.minimum(1.0, np.asarray(l, dtype=np.float64) / (2.0 * np.asarray(r, dtype=np.float64)))
    a = 2.0 * np.arcsin(arg)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class LocalFrame:
    origin: tuple = (0.0, 0.0)
    rotation: float = 0.0

    @classmethod
    def at_beam(cls, cfg: SensorConfig, i: int, r: float) -> "LocalFrame":
        phi = beam_angle(cfg, i)
        return cls(polar_to_cart(r, phi), phi)


def _rotate(xy: np.ndarray, angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    x, y = xy[..., 0], xy[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def to_local(frame: LocalFrame, point):
    p = np.asarray(point, dtype=np.float64) - np.asarray(frame.origin, dtype=np.float64)
    out = _rotate(p, -frame.rotation)
    return tuple(float(v) for v in out) if out.ndim == 1 else out


def from_local(frame: LocalFrame, point):
    p = _rotate(np.asarray(point, dtype=np.float64), frame.rotation)
    out = p + np.asarray(frame.origin, dtype=np.float64)
    return tuple(float(v) for v in out) if out.ndim == 1 else out


# Vectorised variants used by the pipeline: one frame per row.

def to_local_many(origins: np.ndarray, rotations: np.ndarray, points: np.ndarray) -> np.ndarray:
    return _rotate(np.asarray(points) - origins, -np.asarray(rotations))


def from_local_many(origins: np.ndarray, rotations: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return _rotate(np.asarray(offsets, dtype=np.float64), np.asarray(rotations)) + origins


def polar_offset(phi_center, points: np.ndarray) -> np.ndarray:
    """(angle offset, absolute range) of ``points`` seen from the sensor, relative to ``phi_center``."""
    points = np.asarray(points, dtype=np.float64)
    dphi = np.arctan2(points[..., 1], points[..., 0]) - phi_center
    dphi = (dphi + np.pi) % (2 * np.pi) - np.pi
    return np.stack([dphi, np.hypot(points[..., 0], points[..., 1])], axis=-1)


def from_polar_offset(phi_center, offsets: np.ndarray) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=np.float64)
    return polar_to_cart(offsets[..., 1], phi_center + offsets[..., 0])
