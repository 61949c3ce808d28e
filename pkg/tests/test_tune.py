import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drow.pipeline import oracle_detector
from drow.synthetic import SyntheticSceneConfig, synthesize
from drow.tune import SearchSpace, Trial, objective, random_search, read_log
from drow.vote import DEFAULT_CLASS_WEIGHTS, VoteConfig, detect


@pytest.fixture(scope="module")
def frames():
    return synthesize(SyntheticSceneConfig(num_scans=12, scans_per_scene=4, seed=5))


def _score(cfg):
    # cheap deterministic stand-in for a real evaluation
    return float(np.clip(1 - abs(cfg.sigma - 3.0) / 3 + cfg.class_weights[1] / 2, 0, 2)), 0.5


def test_oracle_objective_is_two(frames):
    value, t = objective(VoteConfig(), frames, lambda cfg: oracle_detector)
    assert value == 2.0
    assert 0.0 <= t <= 1.0


def test_empty_detector_objective_is_zero(frames):
    value, _ = objective(VoteConfig(), frames, lambda cfg: (lambda frame, t: []))
    assert value == 0.0


def test_reference_point_is_in_search_space():
    cfg = VoteConfig(class_weights=DEFAULT_CLASS_WEIGHTS, resolution=0.1, sigma=2.93)
    assert SearchSpace().contains(cfg)


def test_samples_stay_in_bounds():
    space = SearchSpace()
    for i in range(500):
        cfg = space.sample(np.random.default_rng([3, i]))
        assert space.contains(cfg)
        assert all(w > 0 for w in cfg.class_weights)


def test_resolution_is_log_uniform():
    space = SearchSpace()
    b = np.array([space.sample(np.random.default_rng([9, i])).resolution for i in range(4000)])
    u = (np.log(b) - math.log(0.02)) / (math.log(0.5) - math.log(0.02))
    # a uniform variable has mean 1/2 and variance 1/12
    assert abs(u.mean() - 0.5) < 0.02
    assert abs(u.var() - 1 / 12) < 0.01


def test_bad_bounds_rejected():
    with pytest.raises(ValueError):
        SearchSpace(sigma_bounds=(6.0, 0.5))
    with pytest.raises(ValueError):
        SearchSpace(resolution_bounds=(0.0, 0.5))


def test_budget_one_returns_the_single_trial():
    best, trials = random_search(SearchSpace(), 1, 7, _score)
    assert len(trials) == 1 and best is trials[0]
    assert best.config.sigma == SearchSpace().sample(np.random.default_rng([7, 0])).sigma


def test_budget_zero_rejected():
    with pytest.raises(ValueError):
        random_search(SearchSpace(), 0, 0, _score)


def test_same_seed_gives_identical_logs(tmp_path):
    random_search(SearchSpace(), 8, 11, _score, tmp_path / "a.ndjson")
    random_search(SearchSpace(), 8, 11, _score, tmp_path / "b.ndjson")
    a, b = (tmp_path / "a.ndjson").read_bytes(), (tmp_path / "b.ndjson").read_bytes()
    assert a == b
    assert len(a.splitlines()) == 8
    assert all(set(json.loads(l)) == {"trial", "config", "objective", "best_threshold"}
               for l in a.splitlines())


def test_log_round_trip(tmp_path):
    best, trials = random_search(SearchSpace(), 4, 2, _score, tmp_path / "log")
    assert read_log(tmp_path / "log") == trials


@given(st.integers(0, 2**31), st.integers(1, 15), st.integers(0, 15))
@settings(max_examples=30, deadline=None)
def test_best_is_monotone_in_nested_budget(seed, small, extra):
    b1, t1 = random_search(SearchSpace(), small, seed, _score)
    b2, t2 = random_search(SearchSpace(), small + extra, seed, _score)
    assert t2[:small] == t1
    assert b2.objective >= b1.objective
    assert b2.objective == max(t.objective for t in t2)


def test_ties_go_to_the_earliest_trial():
    best, _ = random_search(SearchSpace(), 5, 0, lambda cfg: (1.0, 0.3))
    assert best.index == 0
    assert best.config.threshold == 0.3


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_doubling_all_weights_gives_identical_detections(seed):
    rng = np.random.default_rng(seed)
    n = 450
    pos = rng.uniform(-4, 4, (n, 2)) + [5.0, 0.0]
    probs = rng.dirichlet([1.0, 1.0, 1.0], n)
    w = tuple(float(v) for v in rng.uniform(0.05, 1.0, 3))
    base = VoteConfig(class_weights=w, threshold=float(rng.uniform(0.1, 0.9)))
    doubled = VoteConfig(**{**base.__dict__, "class_weights": tuple(2 * v for v in w)})
    assert detect(pos, probs, base) == detect(pos, probs, doubled)


def test_trial_record_is_json():
    t = Trial(0, VoteConfig(), 1.5, 0.4)
    assert json.loads(json.dumps(t.record()))["objective"] == 1.5
