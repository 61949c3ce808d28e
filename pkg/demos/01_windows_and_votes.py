"""Walk through the pieces of the detector on a single synthetic scan.

No training here: a scan is rendered, cut into windows, and a hand-made
"perfect" prediction is pushed through voting and non-maximum suppression to
show what each stage contributes.

    python demos/01_windows_and_votes.py
"""
import numpy as np

from drow.dataio import Klass
from drow.geometry import SensorConfig, scan_points
from drow.preprocess import PreprocessConfig, cut_windows, make_targets, window_frames
from drow.synthetic import SyntheticSceneConfig, make_scene, render_frame
from drow.vote import VoteConfig, detect, vote_positions

sensor = SensorConfig()
cfg = SyntheticSceneConfig(seed=7)
rng = np.random.default_rng(7)

# A room with one wheelchair and one walker in front of the sensor.
scene = make_scene(cfg, rng)
objects = [(Klass.WHEELCHAIR, np.array([3.0, 1.0]), 0.3), (Klass.WALKER, np.array([4.5, -1.5]), 1.2)]
frame = render_frame(scene, objects, cfg, rng)
print("annotations:", [(a.klass.label, a.position) for a in frame.annotations])

# Every beam gets a window of 48 samples covering 1.66 m at the beam's range,
# centered on the beam's own range and clamped to +-1 m.
pre = PreprocessConfig()
windows = cut_windows(frame.scan, pre, sensor)
print("windows:", windows.shape, "value range", windows.min(), windows.max())

# Training targets: the class of the nearest object within its label radius and
# the offset to its center in the beam's local frame.
labels, offsets, mask = make_targets(frame.scan, frame.annotations, sensor)
print("windows per class:", np.bincount(labels, minlength=3))

# Pretend the network is perfect: one-hot classes and exact offsets.
probs = np.eye(3)[labels] * 0.9 + 0.1 / 3
origins, rotations = window_frames(frame.scan, sensor)
votes = vote_positions(origins, rotations, offsets)

# Votes accumulate on a 0.1 m grid, get blurred, and local maxima become detections.
for det in detect(votes, probs, VoteConfig.for_sensor(sensor, threshold=0.5)):
    print(f"{det.klass.label:>10s} at ({det.position[0]:.2f}, {det.position[1]:.2f}) "
          f"score {det.score:.1f}")

points = scan_points(frame.scan, sensor)
print(f"{len(points)} scan points, {mask.sum()} of them on an object")
