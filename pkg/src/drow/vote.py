"""Weighted centroid voting, Gaussian blurring and non-maximum suppression.

Grids are conceptually dense squares over ``[-extent, extent]^2``.  Only the
rectangular block that can hold nonzero values is materialised; everything outside
it is zero, so results are identical to the dense computation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import correlate1d

from .dataio import Klass
from .geometry import SensorConfig, from_local_many, from_polar_offset

DEFAULT_CLASS_WEIGHTS = (0.38, 0.60, 0.49)


@dataclass(frozen=True)
class VoteConfig:
    threshold: float = 0.5
    class_weights: tuple = DEFAULT_CLASS_WEIGHTS
    resolution: float = 0.1
    sigma: float = 2.93  # grid cells
    extent: float = 30.5  # half side length of the grid, meters
    fov: float | None = None  # votes farther than fov_margin outside this wedge are dropped
    fov_margin: float = 0.5

    def __post_init__(self):
        if self.resolution <= 0 or self.sigma < 0 or self.extent <= 0:
            raise ValueError(f"invalid vote config {self}")
        if len(self.class_weights) != 3 or min(self.class_weights) <= 0:
            raise ValueError("class weights must be three positive numbers")

    @classmethod
    def for_sensor(cls, sensor: SensorConfig, **kw) -> "VoteConfig":
        return cls(extent=sensor.range_max + 0.5, fov=sensor.fov, **kw)

    @property
    def cells(self) -> int:
        return int(math.ceil(2 * self.extent / self.resolution - 1e-9))

    def with_threshold(self, t: float) -> "VoteConfig":
        return replace(self, threshold=t)


@dataclass
class Detection:
    position: tuple
    klass: Klass
    score: float


@dataclass
class VotingGrids:
    """Block ``[row0:row0+h, col0:col0+w]`` of the dense grids (rows index x, columns y)."""

    agnostic: np.ndarray
    per_class: np.ndarray  # (2, h, w): wheelchair, walker
    row0: int
    col0: int
    cells: int
    resolution: float
    extent: float
    dropped: int = 0
    cast: int = 0

    def dense(self):
        full = np.zeros((3, self.cells, self.cells))
        h, w = self.agnostic.shape
        full[0, self.row0:self.row0 + h, self.col0:self.col0 + w] = self.agnostic
        full[1:, self.row0:self.row0 + h, self.col0:self.col0 + w] = self.per_class
        return full[0], full[1:]

    def cell_center(self, i, j):
        b = self.resolution
        return -self.extent + (np.asarray(i) + 0.5) * b, -self.extent + (np.asarray(j) + 0.5) * b


def reweight(p, w) -> np.ndarray:
    """Class-weighted probabilities ``w_c p_c / sum_i w_i p_i``."""
    q = np.asarray(p, dtype=np.float64) * np.asarray(w, dtype=np.float64)
    return q / q.sum(axis=-1, keepdims=True)


def vote_positions(origins, rotations, offsets, mode: str = "local") -> np.ndarray:
    """World-frame vote targets from per-window predicted offsets."""
    if mode == "local":
        return from_local_many(origins, rotations, offsets)
    return from_polar_offset(rotations, offsets)


def _in_fov(pos: np.ndarray, fov: float, margin: float) -> np.ndarray:
    ang = np.arctan2(pos[:, 1], pos[:, 0])
    inside = np.abs(ang) <= fov / 2
    dist = np.full(len(pos), np.inf)
    for edge in (fov / 2, -fov / 2):
        u = np.array([math.cos(edge), math.sin(edge)])
        t = np.maximum(pos @ u, 0.0)
        dist = np.minimum(dist, np.hypot(*(pos - t[:, None] * u).T))
    return inside | (dist <= margin)


def cast_votes(positions, probs, cfg: VoteConfig) -> VotingGrids:
    """Accumulate votes of all windows whose reweighted object probability exceeds the threshold.

    Accumulation order is canonicalised (sorted by cell and weights), so the grids do
    not depend on the order of the windows.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    p = reweight(probs, cfg.class_weights).reshape(-1, 3)
    p_obj = p[:, 1] + p[:, 2]
    sel = p_obj > cfg.threshold
    n_cast = int(sel.sum())
    pos, p, p_obj = positions[sel], p[sel], p_obj[sel]

    n, b = cfg.cells, cfg.resolution
    ij = np.floor((pos + cfg.extent) / b).astype(np.int64)
    ok = np.all((ij >= 0) & (ij < n), axis=1)
    if cfg.fov is not None and cfg.fov < 2 * np.pi:
        ok &= _in_fov(pos, cfg.fov, cfg.fov_margin)
    dropped = int((~ok).sum())
    ij, p, p_obj = ij[ok], p[ok], p_obj[ok]
    if len(ij) == 0:
        return VotingGrids(np.zeros((0, 0)), np.zeros((2, 0, 0)), 0, 0, n, b, cfg.extent, dropped, n_cast)

    r0, c0 = ij.min(axis=0)
    h, w = ij.max(axis=0) - (r0, c0) + 1
    lin = (ij[:, 0] - r0) * w + (ij[:, 1] - c0)
    order = np.lexsort((p[:, 2], p[:, 1], lin))
    lin, p, p_obj = lin[order], p[order], p_obj[order]
    size = h * w
    agn = np.bincount(lin, weights=p_obj, minlength=size).reshape(h, w)
    per = np.stack([np.bincount(lin, weights=p[:, c], minlength=size).reshape(h, w) for c in (1, 2)])
    return VotingGrids(agn, per, int(r0), int(c0), n, b, cfg.extent, dropped, n_cast)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at ceil(3 sigma) cells and normalised to unit sum."""
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur(grids: VotingGrids, sigma: float) -> VotingGrids:
    """Separable Gaussian blur with zero padding at the grid border."""
    k = gaussian_kernel(sigma)
    rad = len(k) // 2
    h, w = grids.agnostic.shape
    if h == 0 or rad == 0:
        return replace(grids, agnostic=grids.agnostic.copy(), per_class=grids.per_class.copy())
    # grow the block by the kernel radius, clipped to the grid
    r0, c0 = max(grids.row0 - rad, 0), max(grids.col0 - rad, 0)
    r1 = min(grids.row0 + h + rad, grids.cells)
    c1 = min(grids.col0 + w + rad, grids.cells)
    stack = np.zeros((3, r1 - r0, c1 - c0))
    dr, dc = grids.row0 - r0, grids.col0 - c0
    stack[0, dr:dr + h, dc:dc + w] = grids.agnostic
    stack[1:, dr:dr + h, dc:dc + w] = grids.per_class
    stack = correlate1d(stack, k, axis=1, mode="constant", cval=0.0)
    stack = correlate1d(stack, k, axis=2, mode="constant", cval=0.0)
    return replace(grids, agnostic=stack[0], per_class=stack[1:], row0=r0, col0=c0)


# neighbour offsets and whether that neighbour precedes the center lexicographically
_NEIGHBOURS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


def local_maxima(a: np.ndarray) -> np.ndarray:
    """Boolean mask of positive cells that beat all 8 neighbours.

    Equal neighbours are resolved in favour of the lexicographically smaller cell;
    cells outside ``a`` count as zero.
    """
    h, w = a.shape
    pad = np.zeros((h + 2, w + 2))
    pad[1:-1, 1:-1] = a
    keep = a > 0
    for di, dj in _NEIGHBOURS:
        nb = pad[1 + di:1 + di + h, 1 + dj:1 + dj + w]
        if (di, dj) < (0, 0):
            keep &= a > nb
        else:
            keep &= a >= nb
    return keep


def nms(grids: VotingGrids) -> list:
    """Detections at local maxima of the agnostic grid, sorted by descending score."""
    if grids.agnostic.size == 0:
        return []
    mask = local_maxima(grids.agnostic)
    ii, jj = np.nonzero(mask)
    scores = grids.agnostic[ii, jj]
    cls = np.argmax(grids.per_class[:, ii, jj], axis=0)
    gi, gj = ii + grids.row0, jj + grids.col0
    order = np.lexsort((gj, gi, -scores))
    xs, ys = grids.cell_center(gi, gj)
    return [Detection((float(xs[k]), float(ys[k])), OBJECT_KLASS[cls[k]], float(scores[k])) for k in order]


OBJECT_KLASS = (Klass.WHEELCHAIR, Klass.WALKER)


def detect(positions, probs, cfg: VoteConfig) -> list:
    return nms(blur(cast_votes(positions, probs, cfg), cfg.sigma))
