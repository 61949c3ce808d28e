"""Slow, direct reference implementations used to check the fast code paths."""
import math

import numpy as np


def dense_votes(positions, probs, weights, threshold, resolution, extent):
    """Dense (agnostic, wheelchair, walker) grids by per-vote accumulation."""
    n = int(math.ceil(2 * extent / resolution - 1e-9))
    grids = np.zeros((3, n, n))
    for pos, p in zip(positions, probs):
        q = [w * v for w, v in zip(weights, p)]
        s = sum(q)
        q = [v / s for v in q]
        p_obj = q[1] + q[2]
        if not p_obj > threshold:
            continue
        i = math.floor((pos[0] + extent) / resolution)
        j = math.floor((pos[1] + extent) / resolution)
        if 0 <= i < n and 0 <= j < n:
            grids[0, i, j] += p_obj
            grids[1, i, j] += q[1]
            grids[2, i, j] += q[2]
    return grids


def gaussian_kernel_2d(sigma):
    rad = int(math.ceil(3 * sigma))
    x = np.arange(-rad, rad + 1)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def dense_convolve(grid, kernel):
    """Direct 2-D convolution with zero padding; O(cells * kernel cells)."""
    h, w = grid.shape
    rad = kernel.shape[0] // 2
    pad = np.zeros((h + 2 * rad, w + 2 * rad))
    pad[rad:rad + h, rad:rad + w] = grid
    out = np.zeros_like(grid)
    for di in range(kernel.shape[0]):
        for dj in range(kernel.shape[1]):
            # kernel is symmetric, so correlation and convolution agree
            out += kernel[di, dj] * pad[di:di + h, dj:dj + w]
    return out


def maxima_scan(grid):
    """All (i, j) whose value is positive and beats every 8-neighbour.

    A neighbour with an equal value blocks the cell unless the cell comes first in
    row-major order.
    """
    h, w = grid.shape
    out = []
    for i in range(h):
        for j in range(w):
            v = grid[i, j]
            if v <= 0:
                continue
            ok = True
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if (di, dj) == (0, 0):
                        continue
                    a, b = i + di, j + dj
                    nb = grid[a, b] if 0 <= a < h and 0 <= b < w else 0.0
                    if nb > v or (nb == v and (a, b) < (i, j)):
                        ok = False
            if ok:
                out.append((i, j))
    return out


def brute_force_detections(positions, probs, weights, threshold, resolution, extent, sigma):
    """(cell i, cell j, class index 0|1, score) for every maximum, via the dense path."""
    grids = dense_votes(positions, probs, weights, threshold, resolution, extent)
    if sigma > 0:
        k = gaussian_kernel_2d(sigma)
        grids = np.stack([dense_convolve(g, k) for g in grids])
    out = []
    for i, j in maxima_scan(grids[0]):
        klass = 0 if grids[1, i, j] >= grids[2, i, j] else 1
        out.append((i, j, klass, grids[0, i, j]))
    return out


def exhaustive_max_matching(det_xy, ann_xy, radius):
    """Largest number of one-to-one pairs within ``radius`` (exponential; tiny inputs only)."""
    det_xy, ann_xy = list(det_xy), list(ann_xy)

    def best(k, used):
        if k == len(det_xy):
            return 0
        top = best(k + 1, used)
        for j, a in enumerate(ann_xy):
            if j not in used and math.dist(det_xy[k], a) <= radius:
                top = max(top, 1 + best(k + 1, used | {j}))
        return top

    return best(0, frozenset())
