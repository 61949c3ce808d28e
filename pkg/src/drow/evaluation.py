"""Precision/recall evaluation of centroid detections."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataio import OBJECT_CLASSES

CURVE_NAMES = ("agnostic", "wheelchair", "walker")
DEFAULT_THRESHOLDS = tuple(k / 100 for k in range(101))


class EvaluationError(ValueError):
    pass


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    distances: list = field(default_factory=list)

    def __add__(self, other: "MatchResult") -> "MatchResult":
        return MatchResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                           self.distances + other.distances)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            raise EvaluationError("recall undefined without annotations")
        return self.tp / (self.tp + self.fn)


@dataclass
class PRCurve:
    name: str
    points: list  # (threshold, precision, recall)

    def f1(self) -> np.ndarray:
        return np.array([f1(p, r) for _, p, r in self.points])

    def best(self):
        """(max F1, threshold at which it is reached)."""
        scores = self.f1()
        k = int(np.argmax(scores))
        return float(scores[k]), self.points[k][0]


def f1(precision: float, recall: float) -> float:
    if precision == 0 and recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _xy(items) -> np.ndarray:
    return np.array([getattr(it, "position", it) for it in items], dtype=np.float64).reshape(-1, 2)


def greedy_pairs(det_xy: np.ndarray, ann_xy: np.ndarray, radius: float, allowed=None):
    """Greedy one-to-one matching in ascending distance; ties go to lower indices."""
    if len(det_xy) == 0 or len(ann_xy) == 0:
        return []
    d = np.hypot(det_xy[:, None, 0] - ann_xy[None, :, 0], det_xy[:, None, 1] - ann_xy[None, :, 1])
    ok = d <= radius
    if allowed is not None:
        ok &= allowed
    di, ai = np.nonzero(ok)
    order = np.lexsort((ai, di, d[di, ai]))
    used_d, used_a, pairs = set(), set(), []
    for k in order:
        i, j = int(di[k]), int(ai[k])
        if i in used_d or j in used_a:
            continue
        used_d.add(i)
        used_a.add(j)
        pairs.append((i, j, float(d[i, j])))
    return pairs


def optimal_pairs(det_xy: np.ndarray, ann_xy: np.ndarray, radius: float, allowed=None):
    """Maximum number of one-to-one pairs within ``radius``; among those, least total distance."""
    if len(det_xy) == 0 or len(ann_xy) == 0:
        return []
    d = np.hypot(det_xy[:, None, 0] - ann_xy[None, :, 0], det_xy[:, None, 1] - ann_xy[None, :, 1])
    ok = d <= radius
    if allowed is not None:
        ok &= allowed
    rows, cols = np.flatnonzero(ok.any(axis=1)), np.flatnonzero(ok.any(axis=0))
    if len(rows) == 0:
        return []
    sub_ok, sub_d = ok[np.ix_(rows, cols)], d[np.ix_(rows, cols)]
    # every valid pair earns a bonus larger than any achievable total distance, so the
    # assignment first maximises the pair count and then minimises the distance
    bonus = radius * (min(sub_ok.shape) + 1) + 1.0
    r, c = linear_sum_assignment(np.where(sub_ok, sub_d - bonus, 0.0))
    keep = sub_ok[r, c]
    return [(int(rows[i]), int(cols[j]), float(sub_d[i, j])) for i, j in zip(r[keep], c[keep])]


def match(detections, annotations, radius: float = 0.5, class_aware: bool = True,
          method: str = "optimal") -> MatchResult:
    """Match detections to annotations within ``radius`` (and of the same class if class-aware).

    ``method`` is ``"optimal"`` (maximum matching, then least total distance) or
    ``"greedy"`` (closest pairs first).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    pair_fn = {"optimal": optimal_pairs, "greedy": greedy_pairs}[method]
    det_xy, ann_xy = _xy(detections), _xy(annotations)
    allowed = None
    if class_aware:
        dk = np.array([int(d.klass) for d in detections])
        ak = np.array([int(a.klass) for a in annotations])
        allowed = dk[:, None] == ak[None, :] if len(dk) and len(ak) else None
    pairs = pair_fn(det_xy, ann_xy, radius, allowed)
    tp = len(pairs)
    return MatchResult(tp, len(detections) - tp, len(annotations) - tp, [p[2] for p in pairs])


def match_all(detections, annotations, radius: float = 0.5) -> dict:
    """Agnostic and per-class match results for one frame."""
    out = {"agnostic": match(detections, annotations, radius, class_aware=False)}
    for k in OBJECT_CLASSES:
        out[k.label] = match([d for d in detections if d.klass == k],
                             [a for a in annotations if a.klass == k], radius, class_aware=False)
    return out


def _check_annotated(frames, names):
    total = {n: 0 for n in names}
    for f in frames:
        for a in f.annotations:
            total["agnostic"] = total.get("agnostic", 0) + 1
            total[a.klass.label] = total.get(a.klass.label, 0) + 1
    for n in names:
        if total.get(n, 0) == 0:
            raise EvaluationError(f"no '{n}' annotations in the evaluation set; recall undefined")


def pr_counts(frames, detector, thresholds, radius: float = 0.5) -> dict:
    """Summed match results ``{name: [MatchResult per threshold]}``."""
    out = {n: [] for n in CURVE_NAMES}
    for t in thresholds:
        acc = {n: MatchResult() for n in CURVE_NAMES}
        for f in frames:
            for n, r in match_all(detector(f, t), f.annotations, radius).items():
                acc[n] = acc[n] + r
        for n in CURVE_NAMES:
            out[n].append(acc[n])
    return out


def pr_curves(frames, detector, thresholds, radius: float = 0.5, names=CURVE_NAMES) -> dict:
    """Agnostic and per-class PR curves obtained by sweeping the voting threshold.

    ``detector(frame, threshold)`` must return a list of detections.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("need at least one threshold")
    _check_annotated(frames, names)
    counts = pr_counts(frames, detector, thresholds, radius)
    return {n: PRCurve(n, [(t, c.precision, c.recall) for t, c in zip(thresholds, counts[n])])
            for n in names}


def pr_curve(frames, detector, thresholds, radius: float = 0.5, class_aware: bool = True) -> dict:
    names = tuple(k.label for k in OBJECT_CLASSES) if class_aware else ("agnostic",)
    return pr_curves(frames, detector, thresholds, radius, names)


def pr_by_distance(frames, detector, threshold: float, radii, radius: float = 0.5,
                   class_aware: bool = False) -> list:
    """(cutoff, precision, recall) using only detections and annotations within each cutoff.

    Cutoffs with no annotations inside are omitted.
    """
    radii = list(radii)
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be ascending")
    dets = [detector(f, threshold) for f in frames]
    out = []
    for cut in radii:
        acc = MatchResult()
        for f, ds in zip(frames, dets):
            dd = [d for d in ds if np.hypot(*d.position) <= cut]
            aa = [a for a in f.annotations if np.hypot(*a.position) <= cut]
            if class_aware:
                for k in OBJECT_CLASSES:
                    acc = acc + match([d for d in dd if d.klass == k],
                                      [a for a in aa if a.klass == k], radius, False)
            else:
                acc = acc + match(dd, aa, radius, False)
        if acc.tp + acc.fn > 0:
            out.append((cut, acc.precision, acc.recall))
    return out


def localization_error(frames, detector, threshold: float, radius: float = 0.5) -> float:
    """Mean center distance of agnostic matches."""
    dist = []
    for f in frames:
        dist += match(detector(f, threshold), f.annotations, radius, class_aware=False).distances
    return float(np.mean(dist)) if dist else float("nan")


def write_pr_csv(path, curve: PRCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve.points:
            w.writerow([f"{t:.6g}", f"{p:.6f}", f"{r:.6f}"])


def write_pr_csvs(directory, curves: dict, suffix: str = "") -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, curve in curves.items():
        p = directory / f"pr_{name}{suffix}.csv"
        write_pr_csv(p, curve)
        paths.append(p)
    return paths


def read_pr_csv(path) -> list:
    with open(path, newline="") as fh:
        return [(float(r["threshold"]), float(r["precision"]), float(r["recall"]))
                for r in csv.DictReader(fh)]
