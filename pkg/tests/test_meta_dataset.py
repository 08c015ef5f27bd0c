import numpy as np
import pytest

from mogen import cost_model as C
from mogen import meta_dataset as M
from mogen import search_space as S
from mogen.task_oracle import OracleParams, oracle_accuracy


def test_default_sizes():
    assert M.DEFAULT_SIZE[S.NB201] == 10_000
    assert M.DEFAULT_SIZE[S.MBV3] == 20_000


@pytest.mark.parametrize("space", [S.NB201, S.MBV3])
def test_single_record_recomputes(space):
    ds = M.build(space, 1, seed=4, oracle_seed=2)
    assert ds.size == len(ds.records) == 1
    r = ds.records[0]
    task = ds.task_of(r)
    assert r.y == oracle_accuracy(r.arch, task, OracleParams(2))
    assert r.p == C.count_params(r.arch) and r.m == C.count_macs(r.arch)
    assert r.l == C.measure_latency(r.arch, C.LatencyProtocol(noise_seed=4))


def test_build_is_byte_reproducible():
    assert M.dumps(M.build(S.NB201, 300, seed=3)) == M.dumps(M.build(S.NB201, 300, seed=3))
    assert M.dumps(M.build(S.MBV3, 50, seed=3)) == M.dumps(M.build(S.MBV3, 50, seed=3))


def test_records_depend_only_on_index():
    big, small = M.build(S.NB201, 200, seed=5, n_tasks=10), M.build(S.NB201, 50, seed=5, n_tasks=10)
    assert big.records[:50] == small.records


def test_nb201_sampling_is_biased_towards_top_set():
    ds = M.build(S.NB201, 2000, seed=6)
    top = {S.arch_hash(a) for a in M.nb201_top_set(OracleParams(0))}
    frac = np.mean([S.arch_hash(r.arch) in top for r in ds.records])
    assert 0.93 <= frac <= 0.97


def test_empty_round_trip():
    ds = M.MetaDataset(S.NB201, 0, 0)
    assert M.loads(M.dumps(ds)) == ds


def test_large_round_trip_bit_exact(tmp_path):
    ds = M.build(S.NB201, 10_000, seed=7)
    path = tmp_path / "meta.jsonl"
    M.write(ds, path)
    back = M.read(path)
    assert back == ds
    assert M.dumps(back) == path.read_text()
    for r in back.records:
        assert not S.validate(r.arch.space, r.arch.ops, r.arch.adj)


def test_truncated_line_names_line(tmp_path):
    text = M.dumps(M.build(S.NB201, 5, seed=1))
    path = tmp_path / "bad.jsonl"
    path.write_text(text[:-20])
    n_lines = text.count("\n")
    with pytest.raises(M.MetaDatasetError, match=f"line {n_lines}"):
        M.read(path)


def test_space_mismatch(tmp_path):
    path = tmp_path / "m.jsonl"
    M.write(M.build(S.MBV3, 2, seed=1), path)
    with pytest.raises(M.MetaDatasetError, match="space mismatch"):
        M.read(path, space=S.NB201)


def test_invalid_arch_rejected_on_load():
    good = M.dumps(M.build(S.NB201, 2, seed=1))
    text = good.replace('[1, 0, 0, 0, 0, 0, 0]', '[1, 1, 0, 0, 0, 0, 0]', 1)
    assert text != good
    with pytest.raises(M.MetaDatasetError, match="line"):
        M.loads(text)


def test_summary_stats_deciles_type7():
    ds = M.MetaDataset(S.NB201, 0, 0)
    a = S.nb201(["skip"] * 6)
    ds.tasks[0] = M.sample_task(np.random.default_rng(0), 0)
    ds.records = [M.MetaRecord(0, a, 0.5, 10, v, 1.0) for v in range(1, 101)]
    st = M.summary_stats(ds)
    # sort-based type-7 oracle: h = (n-1)p, interpolate between floor/ceil order stats
    xs = sorted(range(1, 101))
    expected = []
    for p in np.arange(1, 10) / 10:
        h = 99 * p
        lo = int(np.floor(h))
        expected.append(xs[lo] + (h - lo) * (xs[min(lo + 1, 99)] - xs[lo]))
    assert st["m"]["deciles"] == pytest.approx(expected, abs=1e-12)
    assert st["m"]["deciles"][:2] == pytest.approx([10.9, 20.8])
    assert st["p"]["std"] == 0.0 and st["y"]["std"] == 0.0
    with pytest.raises(ValueError):
        M.summary_stats(M.MetaDataset(S.NB201, 0, 0))


def test_mean_accuracy_in_unit_interval():
    st = M.summary_stats(M.build(S.MBV3, 100, seed=2))
    assert 0.0 < st["y"]["mean"] < 1.0
