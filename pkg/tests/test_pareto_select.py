import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mogen import pareto_select as P
from mogen import search_space as S


def brute_force(points):
    keep = []
    for i, (a, m) in enumerate(points):
        dominated = any(a2 >= a and m2 <= m and (a2 > a or m2 < m) for j, (a2, m2) in enumerate(points) if j != i)
        if not dominated:
            keep.append(i)
    return keep


def scored(acc, metric, i):
    return P.ScoredArch(S.nb201([i // 625 % 5, i // 125 % 5, i // 25 % 5, i // 5 % 5, i % 5, 0]),
                        acc, metric, metric, float(metric))


def test_example_front():
    pts = [(0.9, 10), (0.8, 5), (0.7, 7)]
    assert sorted(P.pareto_front(pts)) == [0, 1]
    assert P.pareto_front(pts) == [1, 0]  # metric ascending


def test_singleton_and_empty():
    assert P.pareto_front([(0.5, 3)]) == [0]
    with pytest.raises(ValueError):
        P.pareto_front([])


def test_duplicate_arch_kept_once():
    a = scored(0.9, 10, 1)
    front = P.front_for([a, a, scored(0.8, 5, 2)], "macs")
    assert [s.hash for s in front].count(a.hash) == 1


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for k in range(1000):
        n = int(rng.integers(1, 513))
        if k % 3 == 0:  # coarse grid forces ties
            pts = [(float(a), float(m)) for a, m in zip(rng.integers(0, 8, n) / 8, rng.integers(0, 8, n))]
        else:
            pts = [tuple(p) for p in rng.random((n, 2))]
        assert sorted(P.pareto_front(pts)) == brute_force(pts)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30), st.randoms())
def test_front_invariant_to_order(pts, rnd):
    shuffled = list(pts)
    rnd.shuffle(shuffled)
    a = sorted(pts[i] for i in P.pareto_front(pts))
    b = sorted(shuffled[i] for i in P.pareto_front(shuffled))
    assert a == b


def test_select_configs_example():
    hi, lo = scored(0.9, 10, 1), scored(0.8, 5, 2)
    picks = P.select_configs(P.front_for([hi, lo, scored(0.7, 7, 3)], "macs"), "macs")
    assert picks["Acc"] == hi
    assert picks["Bal"] == lo  # 0.16 > 0.09
    assert picks["Eff"] == lo


def test_picks_satisfy_arg_conditions():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        items = [scored(float(rng.integers(1, 20) / 20), int(rng.integers(1, 30)), i) for i in range(n)]
        front = P.front_for(items, "params")
        picks = P.select_configs(front, "params")
        for name in P.PICKS:
            assert picks[name] in front
        assert picks["Acc"].predicted_acc == max(s.predicted_acc for s in front)
        assert picks["Eff"].params == min(s.params for s in front)
        assert picks["Bal"].predicted_acc / picks["Bal"].params == max(s.predicted_acc / s.params for s in front)


def test_tie_break_smaller_metric_then_hash():
    a, b = scored(0.5, 4, 7), scored(0.5, 4, 3)
    picks = P.select_configs([a, b], "macs")
    first = min(a, b, key=lambda s: s.hash)
    assert picks["Acc"] == picks["Bal"] == picks["Eff"] == first


def _batch(ops_list, valid_flags):
    raw, quant = [], []
    for ops, ok in zip(ops_list, valid_flags):
        a = S.nb201(ops)
        v = a.ops.astype(float)
        if not ok:
            v = v.copy()
            v[1, 1:6] = 0.6  # several columns above 0.5 on one edge row
        raw.append(S.ContinuousArch(S.NB201, v))
        quant.append(S.quantize(raw[-1]) if not ok else a)
    return raw, quant


CONV = ["conv3x3"] * 6
SKIP = ["skip"] * 6
MIX = ["conv1x1", "skip", "zeroise", "conv3x3", "avgpool3x3", "skip"]


@pytest.mark.parametrize("ops,flags,train,expected", [
    ([CONV] * 4, [1, 1, 1, 1], [], (100.0, 25.0, 100.0)),
    ([CONV, SKIP, MIX, MIX], [1, 1, 1, 1], [S.arch_hash(S.nb201(CONV))], (100.0, 75.0, 200 / 3)),
    ([CONV, SKIP], [1, 1], [S.arch_hash(S.nb201(CONV)), S.arch_hash(S.nb201(SKIP))], (100.0, 100.0, 0.0)),
    ([CONV, SKIP, MIX, CONV, SKIP], [1, 0, 1, 1, 0], [], (60.0, 200 / 3, 100.0)),
    ([CONV, SKIP], [0, 0], [], (0.0, 0.0, 0.0)),
])
def test_generation_metrics_hand_computed(ops, flags, train, expected):
    raw, quant = _batch(ops, flags)
    m = P.generation_metrics(raw, quant, train)
    assert (m["validity"], m["uniqueness"], m["novelty"]) == pytest.approx(expected, abs=1e-12)


def test_csv_export(tmp_path):
    items = [scored(0.9, 10, 1), scored(0.8, 5, 2), scored(0.7, 7, 3)]
    sel = P.select_all(items, ["macs"])["macs"]
    path = tmp_path / "front.csv"
    P.write_csv(path, items, sel)
    rows = list(csv.DictReader(open(path)))
    assert tuple(rows[0]) == P.CSV_COLUMNS
    assert sum(int(r["on_front"]) for r in rows) == 2
    assert {r["pick"] for r in rows} == {"Acc", "Bal+Eff", ""}
