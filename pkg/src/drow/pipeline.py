"""End-to-end detector: windows -> network -> votes -> NMS."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Scan, SensorConfig, sanitize_ranges
from .nn.model import Model, load_checkpoint
from .preprocess import PreprocessConfig, cut_windows, window_frames
from .vote import Detection, VoteConfig, blur, cast_votes, nms, vote_positions


class BeamCountError(ValueError):
    pass


@dataclass
class Prediction:
    probs: np.ndarray  # (num_beams, 3)
    positions: np.ndarray  # (num_beams, 2) vote targets, sensor frame


class DrowDetector:
    def __init__(self, model: Model, sensor: SensorConfig, preprocess: PreprocessConfig,
                 vote: VoteConfig | None = None):
        if model.input_length != preprocess.n:
            raise ValueError(f"model expects windows of {model.input_length}, "
                             f"preprocessing produces {preprocess.n}")
        self.model, self.sensor, self.preprocess = model, sensor, preprocess
        self.vote = vote or VoteConfig.for_sensor(sensor)

    @classmethod
    def from_checkpoint(cls, path, vote: VoteConfig | None = None) -> "DrowDetector":
        model, meta = load_checkpoint(path)
        sensor = SensorConfig.from_dict(meta["sensor"])
        pre = PreprocessConfig.from_dict(meta["preprocess"])
        if vote is None and "vote" in meta:
            vote = VoteConfig(**{**meta["vote"], "class_weights": tuple(meta["vote"]["class_weights"])})
        return cls(model, sensor, pre, vote)

    def _scan(self, scan) -> Scan:
        if not isinstance(scan, Scan):
            scan = Scan(scan)
        if len(scan.ranges) != self.sensor.num_beams:
            raise BeamCountError(f"expected {self.sensor.num_beams} ranges, got {len(scan.ranges)}")
        return Scan(sanitize_ranges(scan.ranges, self.sensor), scan.seq_id, scan.timestamp)

    def predict(self, scan) -> Prediction:
        scan = self._scan(scan)
        x = cut_windows(scan, self.preprocess, self.sensor)
        probs, offsets = self.model.predict(x)
        origins, rotations = window_frames(scan, self.sensor)
        return Prediction(probs, vote_positions(origins, rotations, offsets, self.preprocess.offset_mode))

    def detect(self, scan, vote: VoteConfig | None = None) -> list:
        p = self.predict(scan)
        cfg = vote or self.vote
        return nms(blur(cast_votes(p.positions, p.probs, cfg), cfg.sigma))

    def detect_timed(self, scan):
        """Detections plus seconds spent per stage."""
        t0 = time.perf_counter()
        scan = self._scan(scan)
        x = cut_windows(scan, self.preprocess, self.sensor)
        origins, rotations = window_frames(scan, self.sensor)
        t1 = time.perf_counter()
        probs, offsets = self.model.predict(x)
        t2 = time.perf_counter()
        grids = cast_votes(vote_positions(origins, rotations, offsets, self.preprocess.offset_mode),
                           probs, self.vote)
        t3 = time.perf_counter()
        grids = blur(grids, self.vote.sigma)
        dets = nms(grids)
        t4 = time.perf_counter()
        return dets, {"preprocess": t1 - t0, "network": t2 - t1, "voting": t3 - t2, "nms": t4 - t3}


class PredictionCache:
    """Network outputs for a fixed frame list, reused across voting settings."""

    def __init__(self, detector: DrowDetector, frames):
        self.detector = detector
        self.frames = list(frames)
        self._pred = {id(f): detector.predict(f.scan) for f in self.frames}

    def __getitem__(self, frame) -> Prediction:
        try:
            return self._pred[id(frame)]
        except KeyError:
            p = self._pred[id(frame)] = self.detector.predict(frame.scan)
            return p

    def for_vote(self, vote: VoteConfig | None = None):
        """``detector(frame, threshold)`` callable for the evaluation functions."""
        base = vote or self.detector.vote

        def run(frame, threshold):
            p = self[frame]
            cfg = replace(base, threshold=threshold)
            return nms(blur(cast_votes(p.positions, p.probs, cfg), cfg.sigma))

        return run


def oracle_detector(frame, threshold=None):
    """Reports the annotations themselves; useful for checking evaluation code."""
    return [Detection(a.position, a.klass, 1.0) for a in frame.annotations]
