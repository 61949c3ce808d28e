"""Train a small detector on synthetic data and look at its precision/recall.

This is the desk-scale version of the full experiment; it uses a few hundred
frames and a handful of epochs so it finishes in about a minute on one core.
The acceptance suite runs the full-size version.

    python demos/02_train_and_evaluate.py
"""
import logging

from threadpoolctl import threadpool_limits

from drow.evaluation import DEFAULT_THRESHOLDS, localization_error, pr_curves
from drow.geometry import SensorConfig
from drow.pipeline import DrowDetector, PredictionCache
from drow.preprocess import PreprocessConfig
from drow.synthetic import SyntheticSceneConfig, synthesize
from drow.train import TrainConfig, build_windows, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
sensor, pre = SensorConfig(), PreprocessConfig()

train_frames = synthesize(SyntheticSceneConfig(num_scans=300, seed=1))
valid_frames = synthesize(SyntheticSceneConfig(num_scans=50, seed=2))
test_frames = synthesize(SyntheticSceneConfig(num_scans=100, seed=3))

with threadpool_limits(1):
    model, history = train(build_windows(train_frames, pre, sensor),
                           build_windows(valid_frames, pre, sensor),
                           cfg=TrainConfig(epochs=6, batches_per_epoch=20, batch_size=512))
print(f"trained for {history.seconds:.0f} s, best epoch {history.best_epoch}")

detector = DrowDetector(model, sensor, pre)
# Network outputs do not depend on the voting threshold, so compute them once.
cache = PredictionCache(detector, test_frames)
curves = pr_curves(test_frames, cache.for_vote(), DEFAULT_THRESHOLDS)
for name, curve in curves.items():
    f1, t = curve.best()
    print(f"{name:>10s}: best F1 {f1:.3f} at T={t:.2f}")

f1, t = curves["agnostic"].best()
print(f"mean localization error at T={t:.2f}: "
      f"{localization_error(test_frames, cache.for_vote(), t):.3f} m")
