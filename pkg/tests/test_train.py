import math

import numpy as np
import pytest

from drow.geometry import SensorConfig
from drow.nn import drow_loss
from drow.nn.model import drow_cnn, init
from drow.preprocess import PreprocessConfig
from drow.synthetic import SyntheticSceneConfig, synthesize
from drow.train import TrainConfig, TrainingError, _balanced_indices, build_windows, evaluate_loss, train


@pytest.fixture(scope="module")
def windows():
    frames = synthesize(SyntheticSceneConfig(num_scans=12, scans_per_scene=4, seed=6))
    return build_windows(frames, PreprocessConfig(), SensorConfig())


SMALL = TrainConfig(epochs=2, batches_per_epoch=2, batch_size=64, valid_windows=256)


def test_build_windows_shapes(windows):
    assert windows.x.shape == (12 * 450, 48) and windows.x.dtype == np.float32
    assert np.array_equal(windows.mask, windows.labels > 0)
    assert (windows.labels > 0).any()


def test_initial_loss_is_ln3_plus_offset_rmse(windows):
    model = init(drow_cnn(), seed=0)
    sub = windows.take(np.flatnonzero(windows.labels == 0)[:500])
    # zero head: uniform softmax and zero offsets; background rows carry no regression term
    assert evaluate_loss(model, sub) == pytest.approx(math.log(3), abs=1e-4)


def test_balanced_batches(windows):
    idx = _balanced_indices(windows.labels, 1000, 0.5, np.random.default_rng(0))
    assert (windows.labels[idx] > 0).sum() == 500


def test_training_is_deterministic(windows):
    a, ha = train(windows, windows, cfg=SMALL)
    b, hb = train(windows, windows, cfg=SMALL)
    assert ha.train_loss == hb.train_loss
    for (k, x), (_, y) in zip(a.named_params(), b.named_params()):
        assert np.array_equal(x, y), k


def test_training_lowers_the_loss(windows):
    model0 = init(drow_cnn(), seed=0)
    before = evaluate_loss(model0, windows)
    model, hist = train(windows, windows, cfg=TrainConfig(epochs=3, batches_per_epoch=5,
                                                          batch_size=128, valid_windows=512))
    assert evaluate_loss(model, windows) < before
    assert all(math.isfinite(v) for v in hist.train_loss + hist.valid_loss)


def test_best_parameters_are_restored(windows):
    cfg = TrainConfig(epochs=4, batches_per_epoch=2, batch_size=64, valid_windows=256, patience=1)
    model, hist = train(windows, windows, cfg=cfg)
    assert hist.best_epoch == int(np.argmin(hist.valid_loss))
    if hist.stopped_early:
        assert len(hist.valid_loss) < cfg.epochs


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts(windows):
    bad = windows.take(np.arange(len(windows)))
    bad.offsets = np.where(bad.mask[:, None], np.inf, bad.offsets)
    with pytest.raises(TrainingError, match="non-finite"):
        train(bad, None, cfg=SMALL)
