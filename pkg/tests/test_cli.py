import csv
import json
import time

import pytest

from mogen import cli
from mogen import meta_dataset as MD

TINY = {"metadataset": {"n": 120, "n_eval_tasks": 2}, "sde": {"N": 10},
        "score": {"train": {"steps": 10}}, "predictors": {"train": {"steps": 10}},
        "guidance": {"baseline_batch": 16, "phase_batch": 8},
        "tune": {"budget": 3, "rung0_chains": 4, "rung0_steps": 4, "full_chains": 8}}


def write_cfg(tmp_path, extra=None):
    cfg = {**TINY, "artifacts_root": str(tmp_path / "runs"), **(extra or {})}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_defaults_resolve_and_hash_is_stable():
    a, b = cli.resolve_config(), cli.resolve_config({})
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(cli.resolve_config({"artifacts_root": "elsewhere"})) == cli.config_hash(a)
    assert cli.config_hash(cli.resolve_config({"score": {"train": {"steps": 7}}})) != cli.config_hash(a)
    assert cli.resolve_config(overrides={"metadataset.n": 50})["metadataset"]["n"] == 50


@pytest.mark.parametrize("bad", [
    {"nope": 1},
    {"score": {"train": {"stepz": 3}}},
    {"score": {"train": {"steps": "ten"}}},
    {"predictors": {"shared_trunk": 1}},
    {"sde": {"sigma_min": 9.0}},
    {"space": "darts"},
    {"guidance": {"unit": 0}},
    {"guidance": {"presets": {"efficient": {"k_acc": 1}}}},
    {"metadataset": []},
])
def test_schema_violations_are_config_errors(bad):
    with pytest.raises(cli.ConfigError):
        cli.resolve_config(bad)


def test_config_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"score": {"model": {"d_modle": 8}}}))
    assert cli.main(["train-score", "--config", str(bad)]) == 2
    assert "d_modle" in capsys.readouterr().err
    assert cli.main(["metadataset", "--config", str(tmp_path / "absent.json")]) == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["metadataset", "--bogus-flag"])
    assert e.value.code == 2


def test_missing_artifact_message(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert cli.main(["train-score", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "meta.jsonl" in err and "mogen metadataset" in err


def test_runtime_failure_exit_code(tmp_path, capsys):
    meta = tmp_path / "meta.jsonl"
    meta.write_text('{"kind": "header", "version": 99}\n')
    assert cli.main(["train-score", "--config", write_cfg(tmp_path), "--meta", str(meta)]) == 3
    assert "line 1" in capsys.readouterr().err


def test_metadataset_flags_and_stamp(tmp_path):
    out = tmp_path / "m.jsonl"
    assert cli.main(["metadataset", "--space", "nb201", "--n", "40", "--seed", "7", "--out", str(out),
                     "--artifacts-root", str(tmp_path)]) == 0
    header = MD.read_header(out)
    assert header["run"]["seed"] == 7 and len(header["run"]["config_hash"]) == 12
    assert len(MD.read(out)) == 40
    tasks = json.loads((tmp_path / "tasks.json").read_text())
    assert tasks["run"] == header["run"] and len(tasks["tasks"]) == 3


@pytest.mark.slow
def test_pipeline_smoke_and_reproducible(tmp_path):
    t0 = time.perf_counter()
    cfg = write_cfg(tmp_path)
    run = cli.Run(cli.resolve_config(json.loads(open(cfg).read())))
    d = run.dir

    def ok(*argv):
        assert cli.main(list(argv) + ["--config", cfg]) == 0

    ok("metadataset")
    ok("train-score")
    ok("train-predictors")
    first = {p: (d / p).read_bytes() for p in ("meta.jsonl", "score.mgn", "score.mgn.json", "predictors.mgn")}
    ok("metadataset")
    ok("train-score")
    ok("train-predictors")
    assert all((d / p).read_bytes() == b for p, b in first.items())

    ok("tune", "--regime", "efficient")
    tuned = json.loads((d / "scales_efficient.json").read_text())
    assert tuned["run"] == {"config_hash": run.hash, "seed": 0} and len(tuned["trials"]) == 3
    ok("generate", "--mode", "diffusionnag", "--seed", "1")
    ok("generate", "--mode", "stretched", "--seed", "1", "--scales", str(d / "scales_efficient.json"))
    base_header = json.loads((d / "batch_diffusionnag_t0_s1.jsonl").read_text().splitlines()[0])
    assert base_header["scales"] == {"k_acc": 10000.0, "k_params": 0.0, "k_macs": 0.0, "k_lat": 0.0}
    header = json.loads((d / "batch_stretched_t0_s1.jsonl").read_text().splitlines()[0])
    assert header["scales"]["efficient"] == tuned["best"]
    assert header["run"]["seed"] == 1

    ok("select", "--batch", str(d / "batch_stretched_t0_s1.jsonl"))
    ok("select", "--batch", str(d / "batch_diffusionnag_t0_s1.jsonl"))
    sel = json.loads((d / "batch_stretched_t0_s1_selection.json").read_text())
    assert sel["trained_archs_per_config"] == 1
    assert set(sel["fronts"]) == {"params", "macs", "latency"}
    assert set(sel["generation"]) == {"validity", "uniqueness", "novelty"}

    ok("evaluate", "--selection", str(d / "batch_stretched_t0_s1_selection.json"),
       "--baseline", str(d / "batch_diffusionnag_t0_s1_selection.json"))
    ev = json.loads((d / "batch_stretched_t0_s1_evaluation.json").read_text())
    assert [r["config"] for r in ev["rows"]][:4] == ["DiffusionNAG", "POMONAG_Eff", "POMONAG_Bal", "POMONAG_Acc"]
    assert all(0 < r["oracle_acc"] < 1 for r in ev["rows"])

    ok("report", "--selection", str(d / "batch_stretched_t0_s1_selection.json"))
    with open(d / "batch_stretched_t0_s1_fronts" / "front_macs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == cli.PS.CSV_COLUMNS
    assert sum(int(r["on_front"]) for r in rows) == len(sel["fronts"]["macs"]["front"])
    assert all(r["oracle_acc"] for r in rows)
    assert time.perf_counter() - t0 < 600
