"""``mogen`` command line: metadataset -> train -> tune -> generate -> select -> evaluate/report.

Every subcommand reads one optional JSON config (``--config``), validated
against ``DEFAULTS`` before any work starts. The resolved config is hashed;
artifacts default to ``<artifacts_root>/<hash>/`` and each one records
``{"config_hash", "seed"}``. Exit codes: 0 success, 2 config error (bad flag,
schema violation, missing input artifact), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import meta_dataset as MD
from . import pareto_select as PS
from . import scale_tuner as ST
from .guided_sampler import (DIFFUSIONNAG_SCALES, PRESETS, GeneratedBatch, GuidanceScales, generate_batch,
                             generate_stretched)
from .predictors import PredictorConfig, PredictorSet, PredictorTrainConfig, train_predictors
from .score_network import ScoreConfig, ScoreNet, SdeSchedule, TrainConfig, train_score
from .search_space import ContinuousArch, arch_hash, from_json
from .task_oracle import OracleParams, TaskDescriptor, oracle_accuracy, sample_task

BATCH_VERSION = 1
SELECTION_VERSION = 1
EVAL_TASK_OFFSET = 1_000_000


class ConfigError(Exception):
    """Bad flag value, schema violation or missing input artifact (exit 2)."""


def _train_defaults(cls) -> dict:
    return {k: v for k, v in asdict(cls()).items() if k != "seed"}


DEFAULTS = {
    "space": "nb201",
    "seed": 0,
    "oracle_seed": 0,
    "artifacts_root": "runs",
    "metadataset": {"n": 2000, "n_eval_tasks": 3},
    "sde": asdict(SdeSchedule()),
    "score": {"model": asdict(ScoreConfig()), "train": _train_defaults(TrainConfig)},
    "predictors": {"model": asdict(PredictorConfig()), "train": _train_defaults(PredictorTrainConfig),
                   "shared_trunk": True},
    "guidance": {"unit": 1e-2, "baseline_batch": 256, "phase_batch": 128, "presets": None},
    "tune": {"budget": 30, "rung0_chains": ST.RUNG0.chains, "rung0_steps": ST.RUNG0.steps,
             "full_chains": ST.FULL.chains, "full_steps": None},
}
NULLABLE_INT = {"tune.full_steps"}
HASH_EXCLUDE = {"artifacts_root"}


# ---------------------------------------------------------------- config


def _check_value(path: str, default, value):
    if path in NULLABLE_INT:
        ok = value is None or (isinstance(value, int) and not isinstance(value, bool))
    elif isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"config key {path!r}: expected {type(default).__name__}, got {value!r}")
    return value


def _merge(defaults: dict, user: dict, prefix: str = "") -> dict:
    if not isinstance(user, dict):
        raise ConfigError(f"config section {prefix.rstrip('.') or '<root>'!r} must be an object")
    out = copy.deepcopy(defaults)
    for k, v in user.items():
        path = prefix + k
        if k not in defaults:
            raise ConfigError(f"unknown config key {path!r}; allowed: {sorted(defaults)}")
        if path == "guidance.presets":
            out[k] = _check_presets(v)
        elif isinstance(defaults[k], dict):
            out[k] = _merge(defaults[k], v, path + ".")
        else:
            out[k] = _check_value(path, defaults[k], v)
    return out


def _check_presets(v):
    if v is None:
        return None
    if not isinstance(v, dict) or set(v) != {"efficient", "accurate"}:
        raise ConfigError("config key 'guidance.presets' must map exactly 'efficient' and 'accurate' to scales")
    try:
        return {k: GuidanceScales.from_json(s).to_json() for k, s in v.items()}
    except (TypeError, ValueError) as e:
        raise ConfigError(f"config key 'guidance.presets': {e}") from None


def resolve_config(user: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults <- user config <- flag overrides (dotted keys); validates everything up front."""
    cfg = _merge(DEFAULTS, user or {})
    for dotted, v in (overrides or {}).items():
        if v is None:
            continue
        node = {}
        cur = node
        keys = dotted.split(".")
        for k in keys[:-1]:
            cur = cur.setdefault(k, {})
        cur[keys[-1]] = v
        cfg = _merge(cfg, node)
    if cfg["space"] not in MD.DEFAULT_SIZE:
        raise ConfigError(f"config key 'space': expected one of {sorted(MD.DEFAULT_SIZE)}, got {cfg['space']!r}")
    try:
        _sde(cfg), _score_cfgs(cfg), _pred_cfgs(cfg)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config: {e}") from None
    for path, v in (("metadataset.n", cfg["metadataset"]["n"]), ("guidance.baseline_batch",
                    cfg["guidance"]["baseline_batch"]), ("guidance.phase_batch", cfg["guidance"]["phase_batch"]),
                    ("tune.budget", cfg["tune"]["budget"]), ("tune.rung0_chains", cfg["tune"]["rung0_chains"]),
                    ("tune.full_chains", cfg["tune"]["full_chains"])):
        if v < 1:
            raise ConfigError(f"config key {path!r} must be >= 1, got {v}")
    if not cfg["guidance"]["unit"] > 0:
        raise ConfigError("config key 'guidance.unit' must be > 0")
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in HASH_EXCLUDE}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:12]


def _sde(cfg) -> SdeSchedule:
    return SdeSchedule(**cfg["sde"])


def _score_cfgs(cfg) -> tuple[ScoreConfig, TrainConfig]:
    return ScoreConfig(**cfg["score"]["model"]), TrainConfig(**cfg["score"]["train"], seed=cfg["seed"])


def _pred_cfgs(cfg) -> tuple[PredictorConfig, PredictorTrainConfig]:
    return (PredictorConfig(**cfg["predictors"]["model"]),
            PredictorTrainConfig(**cfg["predictors"]["train"], seed=cfg["seed"]))


def _presets(cfg) -> dict[str, GuidanceScales]:
    p = cfg["guidance"]["presets"]
    if p is None:
        return dict(PRESETS[cfg["space"]])
    return {k: GuidanceScales.from_json(v) for k, v in p.items()}


# ---------------------------------------------------------------- io helpers


class Run:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.dir = Path(cfg["artifacts_root"]) / self.hash

    def stamp(self, seed: int) -> dict:
        return {"config_hash": self.hash, "seed": int(seed)}

    def output(self, given: str | None, default: str) -> Path:
        path = Path(given) if given else self.dir / default
        path.parent.mkdir(parents=True, exist_ok=True)
        if not given:
            (self.dir / "config.json").write_text(json.dumps(self.cfg, indent=1, sort_keys=True) + "\n")
        return path

    def input(self, given: str | None, default: str, producer: str) -> Path:
        path = Path(given) if given else self.dir / default
        if not path.exists():
            raise ConfigError(f"missing artifact {path}: run `mogen {producer}` with the same config first "
                              f"or pass its path explicitly")
        return path


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path: Path, what: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} {path} is not valid JSON: {e}") from None


def load_tasks(path: Path) -> list[TaskDescriptor]:
    obj = read_json(path, "task file")
    items = obj["tasks"] if isinstance(obj, dict) and "tasks" in obj else obj
    items = items if isinstance(items, list) else [items]
    try:
        return [TaskDescriptor.from_json(t) for t in items]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"task file {path}: {e}") from None


def eval_tasks(seed: int, n: int) -> list[TaskDescriptor]:
    """Held-out tasks, disjoint from the meta-dataset's task ids."""
    return [sample_task(np.random.default_rng([seed, 0xE7A1, j]), EVAL_TASK_OFFSET + j) for j in range(n)]


def load_scales(paths: list[str], mode: str, cfg) -> dict[str, GuidanceScales] | GuidanceScales:
    """Stretched: preset pair, overridable per regime by tune outputs or {efficient, accurate} files.
    DiffusionNAG: the single-guide setup, or one plain scales file."""
    if mode == "diffusionnag":
        if not paths:
            return DIFFUSIONNAG_SCALES
        if len(paths) > 1:
            raise ConfigError("diffusionnag mode takes at most one --scales file")
        obj = read_json(Path(paths[0]), "scales file")
        return _scales(obj.get("best", obj), paths[0])
    out = _presets(cfg)
    for p in paths:
        obj = read_json(Path(p), "scales file")
        if "regime" in obj and "best" in obj:
            out[obj["regime"]] = _scales(obj["best"], p)
        elif set(obj) - {"run"} <= {"efficient", "accurate"}:
            out.update({k: _scales(v, p) for k, v in obj.items() if k != "run"})
        else:
            raise ConfigError(f"scales file {p}: expected a tune result or an efficient/accurate mapping")
    return out


def _scales(obj, path) -> GuidanceScales:
    try:
        return GuidanceScales.from_json({k: v for k, v in obj.items() if k != "run"})
    except (AttributeError, TypeError, ValueError) as e:
        raise ConfigError(f"scales file {path}: {e}") from None


def _arch_x(archs) -> np.ndarray:
    return np.stack([a.ops.astype(np.float64) for a in archs])


def predict_acc(preds: PredictorSet, archs, task: TaskDescriptor) -> np.ndarray:
    return preds.predict("acc_denoised", _arch_x(archs), 0.0, preds.encode_dataset(task))


def batch_lines(batch: GeneratedBatch, header: dict) -> str:
    lines = [json.dumps({"kind": "header", "version": BATCH_VERSION, **header}, sort_keys=True)]
    for i, (r, a, s, ph) in enumerate(zip(batch.raw, batch.archs, batch.strict, batch.phases)):
        lines.append(json.dumps({"kind": "sample", "chain": i, "phase": ph, "strict_valid": bool(s),
                                 "arch": a.to_json(), "raw": r.values.tolist()}, sort_keys=True))
    return "\n".join(lines) + "\n"


def read_batch(path: Path) -> tuple[dict, GeneratedBatch]:
    lines = Path(path).read_text().splitlines()
    try:
        header = json.loads(lines[0])
        if header.get("kind") != "header" or header.get("version") != BATCH_VERSION:
            raise ValueError("expected a version-1 batch header")
        raw, archs, strict, phases = [], [], [], []
        for no, line in enumerate(lines[1:], start=2):
            obj = json.loads(line)
            raw.append(ContinuousArch(header["space"], np.array(obj["raw"], dtype=np.float64)))
            archs.append(from_json(obj["arch"]))
            strict.append(bool(obj["strict_valid"]))
            phases.append(obj["phase"])
    except (IndexError, KeyError, TypeError, ValueError) as e:
        raise ValueError(f"batch file {path}: {e}") from None
    return header, GeneratedBatch(raw, archs, strict, phases)


# ---------------------------------------------------------------- subcommands


def cmd_metadataset(run: Run, args) -> None:
    cfg = run.cfg
    ds = MD.build(cfg["space"], cfg["metadataset"]["n"], seed=cfg["seed"], oracle_seed=cfg["oracle_seed"])
    out = run.output(args.out, "meta.jsonl")
    MD.write(ds, out, run.stamp(cfg["seed"]))
    tasks_out = Path(args.tasks_out) if args.tasks_out else out.with_name("tasks.json")
    tasks = eval_tasks(cfg["seed"], cfg["metadataset"]["n_eval_tasks"])
    write_json(tasks_out, {"tasks": [t.to_json() for t in tasks], "run": run.stamp(cfg["seed"])})
    stats = MD.summary_stats(ds)
    print(f"wrote {len(ds)} records over {len(ds.tasks)} tasks to {out}; {len(tasks)} eval tasks to {tasks_out}")
    print(f"accuracy mean {stats['y']['mean']:.4f} std {stats['y']['std']:.4f}")


def cmd_train_score(run: Run, args) -> None:
    cfg = run.cfg
    ds = MD.read(run.input(args.meta, "meta.jsonl", "metadataset"), cfg["space"])
    model, train = _score_cfgs(cfg)
    net, log = train_score([r.arch for r in ds.records], cfg["space"], train, model, _sde(cfg),
                           log_every=args.log_every)
    out = run.output(args.out, "score.mgn")
    net.save(out, run.stamp(cfg["seed"]))
    print(f"score network saved to {out}; final loss {np.mean(log.losses[-50:]):.4f}")


def cmd_train_predictors(run: Run, args) -> None:
    cfg = run.cfg
    ds = MD.read(run.input(args.meta, "meta.jsonl", "metadataset"), cfg["space"])
    model, train = _pred_cfgs(cfg)
    pset, report = train_predictors(ds, _sde(cfg), train, model, cfg["predictors"]["shared_trunk"],
                                    log_every=args.log_every)
    out = run.output(args.out, "predictors.mgn")
    pset.save(out, run.stamp(cfg["seed"]))
    write_json(out.with_name(out.stem + "_report.json"), {"spearman": report.spearman, "run": run.stamp(cfg["seed"])})
    print("held-out spearman: " + ", ".join(f"{k} {v:.3f}" for k, v in report.spearman.items()))


def _models(run: Run, args) -> tuple[ScoreNet, PredictorSet]:
    net = ScoreNet.load(run.input(args.score, "score.mgn", "train-score"))
    preds = PredictorSet.load(run.input(args.predictors, "predictors.mgn", "train-predictors"))
    if net.space != run.cfg["space"] or preds.space != run.cfg["space"]:
        raise ConfigError(f"checkpoints are for {net.space}/{preds.space}, config space is {run.cfg['space']}")
    return net, preds


def cmd_tune(run: Run, args) -> None:
    cfg = run.cfg
    tasks = load_tasks(run.input(args.tasks, "tasks.json", "metadataset"))
    net, preds = _models(run, args)
    t = cfg["tune"]
    budget = args.budget if args.budget is not None else t["budget"]
    if budget < 1:
        raise ConfigError("--budget must be >= 1")
    res = ST.tune_scales(ST.front_objective(net, preds, tasks), ST.BOUNDS[args.regime], budget, args.seed,
                         ST.Rung(t["rung0_chains"], t["rung0_steps"]), ST.Rung(t["full_chains"], t["full_steps"]))
    out = run.output(args.out, f"scales_{args.regime}.json")
    write_json(out, {**res.to_json(), "budget": budget, "run": run.stamp(args.seed)})
    print(f"best {args.regime} scales {res.best.to_json()} objective {res.best_objective:.4f} -> {out}")


def cmd_generate(run: Run, args) -> None:
    cfg = run.cfg
    tasks = load_tasks(run.input(args.task, "tasks.json", "metadataset"))
    if not 0 <= args.task_index < len(tasks):
        raise ConfigError(f"--task-index {args.task_index} out of range for {len(tasks)} tasks")
    task = tasks[args.task_index]
    scales = load_scales(args.scales or [], args.mode, cfg)
    net, preds = _models(run, args)
    g = cfg["guidance"]
    if args.mode == "stretched":
        batch = generate_stretched(net, preds, task, scales, args.seed, g["phase_batch"], unit=g["unit"])
        scales_json = {k: v.to_json() for k, v in scales.items()}
    else:
        batch = generate_batch(net, preds, task, scales, g["baseline_batch"], args.seed, phase="diffusionnag",
                               unit=g["unit"])
        scales_json = scales.to_json()
    out = run.output(args.out, f"batch_{args.mode}_t{args.task_index}_s{args.seed}.jsonl")
    header = {"space": cfg["space"], "mode": args.mode, "seed": args.seed, "task": task.to_json(),
              "scales": scales_json, "unit": g["unit"], "run": run.stamp(args.seed)}
    out.write_text(batch_lines(batch, header))
    print(f"{len(batch)} samples ({100 * np.mean(batch.strict):.1f}% strictly valid) -> {out}")


def cmd_select(run: Run, args) -> None:
    cfg = run.cfg
    bpath = run.input(args.batch, "", "generate")
    header, batch = read_batch(bpath)
    preds = PredictorSet.load(run.input(args.predictors, "predictors.mgn", "train-predictors"))
    task = TaskDescriptor.from_json(header["task"])
    scored = PS.score_archs(batch.archs, predict_acc(preds, batch.archs, task), batch.phases)
    selection = PS.select_all(scored)
    meta = Path(args.meta) if args.meta else run.dir / "meta.jsonl"
    train_hashes = [arch_hash(r.arch) for r in MD.read(meta).records] if meta.exists() else []
    gen = PS.generation_metrics(batch.raw, batch.archs, train_hashes)
    out = run.output(args.out, bpath.stem + "_selection.json")
    write_json(out, {
        "kind": "selection", "version": SELECTION_VERSION, "space": header["space"], "mode": header["mode"],
        "task": header["task"], "batch": str(bpath), "generation": gen, "novelty_reference": len(train_hashes),
        "scored": [{"hash": s.hash, "arch": s.arch.to_json(), "predicted_acc": s.predicted_acc, "params": s.params,
                    "macs": s.macs, "latency_ms": s.latency_ms, "phase": s.phase} for s in PS.dedup(scored)],
        "fronts": {m: {"front": [s.hash for s in sel.front], "picks": {k: v.hash for k, v in sel.picks.items()}}
                   for m, sel in selection.items()},
        "trained_archs_per_config": 1,
        "run": run.stamp(header["seed"]),
    })
    print(f"validity {gen['validity']:.1f}% uniqueness {gen['uniqueness']:.1f}% novelty {gen['novelty']:.1f}%")
    for m, sel in selection.items():
        print(f"{m}: front of {len(sel.front)}; picks " + ", ".join(f"{k}={v.hash}" for k, v in sel.picks.items()))
    print(f"-> {out}")


def _scored_from_selection(sel: dict, oracle: OracleParams | None = None) -> dict[str, PS.ScoredArch]:
    task = TaskDescriptor.from_json(sel["task"])
    out = {}
    for e in sel["scored"]:
        a = from_json(e["arch"])
        acc = oracle_accuracy(a, task, oracle) if oracle is not None else None
        out[e["hash"]] = PS.ScoredArch(a, e["predicted_acc"], e["params"], e["macs"], e["latency_ms"], e["phase"], acc)
    return out


def _load_selection(path: Path) -> dict:
    sel = read_json(path, "selection file")
    if not isinstance(sel, dict) or sel.get("kind") != "selection" or sel.get("version") != SELECTION_VERSION:
        raise ConfigError(f"{path} is not a version-{SELECTION_VERSION} selection file (run `mogen select`)")
    return sel


def cmd_evaluate(run: Run, args) -> None:
    """Oracle accuracy of each pick vs the single-guide baseline's top predicted architecture."""
    sel = _load_selection(run.input(args.selection, "", "select"))
    base = _load_selection(run.input(args.baseline, "", "select"))
    if sel["task"] != base["task"]:
        raise ConfigError("selection and baseline were generated for different tasks")
    oracle = OracleParams(run.cfg["oracle_seed"])
    task = TaskDescriptor.from_json(sel["task"])
    b_scored = list(_scored_from_selection(base).values())
    b_top = min(b_scored, key=lambda s: (-s.predicted_acc, s.hash))
    b_acc = oracle_accuracy(b_top.arch, task, oracle)
    scored = _scored_from_selection(sel)
    rows = [{"config": "DiffusionNAG", "metric": None, "hash": b_top.hash, "oracle_acc": b_acc,
             "predicted_acc": b_top.predicted_acc, "params": b_top.params, "macs": b_top.macs,
             "latency_ms": b_top.latency_ms}]
    for metric in PS.METRICS:
        fr = sel["fronts"][metric]
        for pick in ("Eff", "Bal", "Acc"):
            s = scored[fr["picks"][pick]]
            rows.append({"config": f"POMONAG_{pick}", "metric": metric, "hash": s.hash,
                         "oracle_acc": oracle_accuracy(s.arch, task, oracle), "predicted_acc": s.predicted_acc,
                         "params": s.params, "macs": s.macs, "latency_ms": s.latency_ms,
                         "metric_change_pct": 100.0 * (s.metric(metric) / b_top.metric(metric) - 1.0)})
    out = run.output(args.out, Path(sel["batch"]).stem + "_evaluation.json")
    write_json(out, {"task_id": task.task_id, "oracle_seed": run.cfg["oracle_seed"], "rows": rows,
                     "run": sel["run"]})
    print(f"{'config':<14}{'front':<9}{'oracle acc':>11}{'params M':>10}{'MACs M':>10}{'lat ms':>9}")
    for r in rows:
        print(f"{r['config']:<14}{r['metric'] or '-':<9}{r['oracle_acc']:>11.4f}{r['params'] / 1e6:>10.3f}"
              f"{r['macs'] / 1e6:>10.2f}{r['latency_ms']:>9.3f}")
    print(f"-> {out}")


def cmd_report(run: Run, args) -> None:
    sel = _load_selection(run.input(args.selection, "", "select"))
    scored = _scored_from_selection(sel, OracleParams(run.cfg["oracle_seed"]))
    out_dir = Path(args.out_dir) if args.out_dir else run.dir / (Path(sel["batch"]).stem + "_fronts")
    out_dir.mkdir(parents=True, exist_ok=True)
    for metric in PS.METRICS:
        fr = sel["fronts"][metric]
        selection = PS.FrontSelection(metric, [scored[h] for h in fr["front"]],
                                      {k: scored[h] for k, h in fr["picks"].items()})
        path = out_dir / f"front_{metric}.csv"
        PS.write_csv(path, list(scored.values()), selection)
        print(f"{metric}: {len(selection.front)} front points -> {path}")
    write_json(out_dir / "run.json", sel["run"])


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mogen", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="JSON run config (validated before any work)")
        sp.add_argument("--artifacts-root", help="override config artifacts_root")
        sp.add_argument("--out", help="output path (default: inside the run directory)")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("metadataset", cmd_metadataset, "build a meta-dataset and held-out eval tasks")
    sp.add_argument("--space", choices=sorted(MD.DEFAULT_SIZE))
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int, help="override config seed")
    sp.add_argument("--oracle-seed", type=int)
    sp.add_argument("--tasks-out", help="eval task file (default: tasks.json next to --out)")

    for name, fn, what in (("train-score", cmd_train_score, "train the score network"),
                           ("train-predictors", cmd_train_predictors, "train the predictor heads")):
        sp = add(name, fn, what)
        sp.add_argument("--meta", help="meta-dataset JSONL")
        sp.add_argument("--seed", type=int, help="override config seed")
        sp.add_argument("--log-every", type=int, default=0)

    def models(sp):
        sp.add_argument("--score", help="score network checkpoint")
        sp.add_argument("--predictors", help="predictor checkpoint")

    sp = add("tune", cmd_tune, "search guidance scales for one regime")
    sp.add_argument("--regime", choices=sorted(ST.BOUNDS), required=True)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--tasks", help="task file")
    sp.add_argument("--sample-seed", "--seed", dest="seed", type=int, default=0, help="sampling seed")
    models(sp)

    sp = add("generate", cmd_generate, "sample a batch of architectures")
    sp.add_argument("--mode", choices=("diffusionnag", "stretched"), default="stretched")
    sp.add_argument("--task", help="task file (one task or a list)")
    sp.add_argument("--task-index", type=int, default=0)
    sp.add_argument("--scales", action="append", help="scales or tune-result JSON (repeatable)")
    sp.add_argument("--sample-seed", "--seed", dest="seed", type=int, default=0, help="sampling seed")
    sp.add_argument("--space", choices=sorted(MD.DEFAULT_SIZE))
    models(sp)

    sp = add("select", cmd_select, "Pareto fronts and Acc/Bal/Eff picks for a batch")
    sp.add_argument("--batch", required=True)
    sp.add_argument("--predictors")
    sp.add_argument("--meta", help="meta-dataset for novelty (default: run directory's)")

    sp = add("evaluate", cmd_evaluate, "oracle accuracy of picks vs the single-guide baseline")
    sp.add_argument("--selection", required=True)
    sp.add_argument("--baseline", required=True, help="selection file of a diffusionnag batch")

    sp = add("report", cmd_report, "write one front CSV per secondary metric")
    sp.add_argument("--selection", required=True)
    sp.add_argument("--out-dir")
    return p


# flags that override config keys, and therefore the config hash
OVERRIDES = {"space": "space", "n": "metadataset.n", "oracle_seed": "oracle_seed", "artifacts_root": "artifacts_root"}
SEED_OVERRIDE = {"metadataset", "train-score", "train-predictors"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config and not Path(args.config).exists():
            raise ConfigError(f"config file {args.config} not found")
        user = read_json(Path(args.config), "config file") if args.config else {}
        overrides = {key: getattr(args, flag, None) for flag, key in OVERRIDES.items()}
        if args.command in SEED_OVERRIDE:
            overrides["seed"] = args.seed
        run = Run(resolve_config(user, overrides))
        args.fn(run, args)
    except ConfigError as e:
        print(f"mogen {args.command}: config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"mogen {args.command}: config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - any pipeline failure maps to exit 3
        print(f"mogen {args.command}: runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
