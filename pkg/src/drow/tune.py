"""Random search over the voting hyperparameters.

The objective is the best summed wheelchair and walker F1 over a threshold sweep,
computed on a validation set with cached network outputs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .evaluation import pr_curves
from .vote import VoteConfig

# A subset of the evaluation sweep, denser near 1 where the reweighted object
# probabilities of a confident network crowd.
TUNE_THRESHOLDS = tuple(k / 100 for k in range(5, 91, 5)) + (0.92, 0.94, 0.96, 0.97, 0.98, 0.99)


@dataclass(frozen=True)
class SearchSpace:
    weight_bounds: tuple = (0.0, 1.0)  # (low, high], shared by the three class weights
    resolution_bounds: tuple = (0.02, 0.5)  # meters, log-uniform
    sigma_bounds: tuple = (0.5, 6.0)  # cells, uniform

    def __post_init__(self):
        for name in ("weight_bounds", "resolution_bounds", "sigma_bounds"):
            lo, hi = getattr(self, name)
            if not 0 <= lo < hi:
                raise ValueError(f"{name} must satisfy 0 <= low < high, got {(lo, hi)}")
        if self.resolution_bounds[0] <= 0:
            raise ValueError("resolution must be positive")

    def sample(self, rng: np.random.Generator, base: VoteConfig = VoteConfig()) -> VoteConfig:
        lo, hi = self.weight_bounds
        w = hi - (hi - lo) * rng.random(3)  # (lo, hi], so never zero
        r_lo, r_hi = self.resolution_bounds
        b = math.exp(rng.uniform(math.log(r_lo), math.log(r_hi)))
        sigma = rng.uniform(*self.sigma_bounds)
        return replace(base, class_weights=tuple(float(v) for v in w), resolution=float(b),
                       sigma=float(sigma))

    def contains(self, cfg: VoteConfig) -> bool:
        lo, hi = self.weight_bounds
        return (all(lo < w <= hi for w in cfg.class_weights)
                and self.resolution_bounds[0] <= cfg.resolution <= self.resolution_bounds[1]
                and self.sigma_bounds[0] <= cfg.sigma <= self.sigma_bounds[1])


@dataclass
class Trial:
    index: int
    config: VoteConfig
    objective: float
    best_threshold: float

    def record(self) -> dict:
        c = asdict(self.config)
        c["class_weights"] = list(c["class_weights"])
        return {"trial": self.index, "config": c, "objective": self.objective,
                "best_threshold": self.best_threshold}


def objective(config: VoteConfig, frames, detector_for, thresholds=TUNE_THRESHOLDS):
    """``(max_T F1_wheelchair(T) + F1_walker(T), argmax T)``.

    ``detector_for(config)`` must return a ``detector(frame, threshold)`` callable, e.g.
    ``PredictionCache.for_vote``.  Thresholds are taken from the sweep, not from
    ``config.threshold``.
    """
    curves = pr_curves(frames, detector_for(config), thresholds,
                       names=("wheelchair", "walker"))
    total = curves["wheelchair"].f1() + curves["walker"].f1()
    k = int(np.argmax(total))
    return float(total[k]), float(curves["wheelchair"].points[k][0])


def random_search(space: SearchSpace, budget: int, seed: int, evaluate, log_path=None,
                  base: VoteConfig = VoteConfig()):
    """Evaluate ``budget`` random configurations; returns ``(best trial, all trials)``.

    Trial ``i`` samples from ``default_rng([seed, i])`` so a larger budget extends a
    smaller one with the same seed.  ``evaluate(config)`` returns ``(value, threshold)``.
    With ``log_path`` every trial is appended as one JSON line as soon as it finishes.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    trials = []
    fh = open(log_path, "w") if log_path is not None else None
    try:
        for i in range(budget):
            cfg = space.sample(np.random.default_rng([seed, i]), base)
            value, t = evaluate(cfg)
            trial = Trial(i, replace(cfg, threshold=t), float(value), float(t))
            trials.append(trial)
            if fh is not None:
                fh.write(json.dumps(trial.record()) + "\n")
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    best = max(trials, key=lambda tr: (tr.objective, -tr.index))
    return best, trials


def read_log(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            r = json.loads(line)
            c = r["config"]
            c["class_weights"] = tuple(c["class_weights"])
            out.append(Trial(r["trial"], VoteConfig(**c), r["objective"], r["best_threshold"]))
    return out
