import math

import numpy as np
import pytest

from mogen import scale_tuner as T
from mogen.guided_sampler import GuidanceScales


def test_bounds_constants():
    assert T.BOUNDS["efficient"].acc == (1000, 5000) and T.BOUNDS["efficient"].secondary == (100, 500)
    assert T.BOUNDS["accurate"].acc == (10000, 50000) and T.BOUNDS["accurate"].secondary == (10, 50)


@pytest.mark.parametrize("regime", ["efficient", "accurate"])
def test_every_trial_in_bounds(regime):
    res = T.tune_scales(lambda s, r, seed: 0.0, T.BOUNDS[regime], budget=50, seed=1)
    assert all(T.BOUNDS[regime].contains(t.scales) for t in res.trials)
    assert T.BOUNDS[regime].contains(res.best)


def test_constant_objective_log_length():
    res = T.tune_scales(lambda s, r, seed: 0.5, T.BOUNDS["efficient"], budget=30)
    assert len(res.trials) == 30
    assert res.best_objective == 0.5


@pytest.mark.parametrize("budget", [1, 2, 3, 10, 30])
def test_promotion_keeps_ceil_third(budget):
    res = T.tune_scales(lambda s, r, seed: s.k_acc, T.BOUNDS["efficient"], budget=budget)
    promoted = [t for t in res.trials if t.rung == 1]
    assert len(promoted) == math.ceil(budget / 3)
    cutoff = min(t.objective for t in promoted)
    assert all(t.objective <= cutoff for t in res.trials if t.rung == 0)


def test_rungs_used():
    seen = []
    T.tune_scales(lambda s, r, seed: seen.append(r) or 0.0, T.BOUNDS["accurate"], budget=6)
    assert seen.count(T.RUNG0) == 6 and seen.count(T.FULL) == 2
    assert T.RUNG0 == T.Rung(32, 50)


def test_best_so_far_monotone_and_deterministic():
    obj = lambda s, r, seed: -abs(math.log(s.k_acc) - 8.0) - abs(math.log(s.k_macs) - 5.5)  # noqa: E731
    a = T.tune_scales(obj, T.BOUNDS["efficient"], budget=30, seed=7)
    b = T.tune_scales(obj, T.BOUNDS["efficient"], budget=30, seed=7)
    assert a.to_json() == b.to_json()
    curve = a.best_so_far
    assert all(x <= y for x, y in zip(curve, curve[1:]))


def test_tuned_beats_median_trial_on_mock():
    obj = lambda s, r, seed: -abs(math.log(s.k_acc) - 8.0)  # noqa: E731
    for seed in range(3):
        res = T.tune_scales(obj, T.BOUNDS["efficient"], budget=30, seed=seed)
        assert obj(res.best, T.FULL, seed) >= np.median([t.objective for t in res.trials])


def test_budget_validation():
    with pytest.raises(ValueError):
        T.tune_scales(lambda s, r, seed: 0.0, T.BOUNDS["efficient"], budget=0)
