"""(task, architecture, objectives) triplets: build, persist, summarize.

File layout (JSON Lines):

    line 1      header  {"kind": "header", "version", "space", "oracle_seed", "latency_seed",
                         "n_tasks", "norm_stats"}
    next lines  tasks   {"kind": "task", ...TaskDescriptor.to_json()}
    rest        records {"kind": "record", "task_id", "arch", "y", "p", "m", "l"}

Record ``i`` draws its architecture from ``default_rng([seed, i, 1])`` and uses
task ``i % n_tasks``; task ``j`` comes from ``default_rng([seed, j, 0])``. So the
output depends only on indices, never on build order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cost_model
from .search_space import MBV3, NB201, Architecture, from_json, sample_mbv3, sample_nb201
from .task_oracle import OracleParams, TaskDescriptor, nb201_top_set, oracle_accuracy, sample_task

FORMAT_VERSION = 1
DEFAULT_SIZE = {NB201: 10_000, MBV3: 20_000}
NB201_BIAS = 0.95
RECORDS_PER_TASK = 20
OBJECTIVES = ("y", "p", "m", "l")
NORM_GRID = 257


class MetaDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class MetaRecord:
    task_id: int
    arch: Architecture
    y: float
    p: int
    m: int
    l: float

    def objective(self, name: str) -> float:
        return getattr(self, name)

    def to_json(self) -> dict:
        return {"kind": "record", "task_id": self.task_id, "arch": self.arch.to_json(),
                "y": self.y, "p": self.p, "m": self.m, "l": self.l}


@dataclass
class MetaDataset:
    space: str
    oracle_seed: int
    latency_seed: int
    tasks: dict[int, TaskDescriptor] = field(default_factory=dict)
    records: list[MetaRecord] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.records)

    def __len__(self):
        return len(self.records)

    def task_of(self, r: MetaRecord) -> TaskDescriptor:
        return self.tasks[r.task_id]

    def column(self, name: str) -> np.ndarray:
        return np.array([r.objective(name) for r in self.records], dtype=np.float64)

    def norm_stats(self) -> dict:
        """Quantile grid per cost objective; used as the normalisation population."""
        if not self.records:
            return {}
        q = np.linspace(0.0, 1.0, NORM_GRID)
        return {k: np.quantile(self.column(k), q).tolist() for k in ("p", "m", "l")}

    def subset(self, n: int) -> "MetaDataset":
        recs = self.records[:n]
        used = {r.task_id for r in recs}
        return MetaDataset(self.space, self.oracle_seed, self.latency_seed,
                           {k: v for k, v in self.tasks.items() if k in used}, recs)


def make_record(arch: Architecture, task: TaskDescriptor, oracle: OracleParams,
                proto: cost_model.LatencyProtocol) -> MetaRecord:
    rep = cost_model.cost_report(arch, proto)
    return MetaRecord(task.task_id, arch, oracle_accuracy(arch, task, oracle), rep.params, rep.macs, rep.latency_ms)


def build(space: str, n: int | None = None, seed: int = 0, oracle_seed: int = 0,
          n_tasks: int | None = None) -> MetaDataset:
    """Sample ``n`` triplets: task, architecture, analytic costs, oracle accuracy."""
    if space not in DEFAULT_SIZE:
        raise ValueError(f"unknown space {space!r}")
    n = DEFAULT_SIZE[space] if n is None else n
    if n < 1:
        raise ValueError("n must be >= 1")
    n_tasks = n_tasks or max(1, -(-n // RECORDS_PER_TASK))
    oracle = OracleParams(oracle_seed)
    proto = cost_model.LatencyProtocol(noise_seed=seed)
    tasks = {j: sample_task(np.random.default_rng([seed, j, 0]), task_id=j) for j in range(n_tasks)}
    top = nb201_top_set(oracle) if space == NB201 else ()
    records = []
    for i in range(n):
        rng = np.random.default_rng([seed, i, 1])
        arch = sample_nb201(rng, top, NB201_BIAS) if space == NB201 else sample_mbv3(rng)
        records.append(make_record(arch, tasks[i % n_tasks], oracle, proto))
    return MetaDataset(space, oracle_seed, seed, tasks, records)


# ------------------------------------------------------------------ JSONL


def dumps(ds: MetaDataset, run: dict | None = None) -> str:
    """``run`` (e.g. config hash and seed) is stored in the header and ignored on load."""
    header = {"kind": "header", "version": FORMAT_VERSION, "space": ds.space,
              "oracle_seed": ds.oracle_seed, "latency_seed": ds.latency_seed,
              "n_tasks": len(ds.tasks), "norm_stats": ds.norm_stats()}
    if run is not None:
        header["run"] = run
    lines = [json.dumps(header)]
    lines += [json.dumps({"kind": "task", **ds.tasks[k].to_json()}) for k in sorted(ds.tasks)]
    lines += [json.dumps(r.to_json()) for r in ds.records]
    return "\n".join(lines) + "\n"


def write(ds: MetaDataset, path: str | Path, run: dict | None = None) -> None:
    Path(path).write_text(dumps(ds, run))


def _parse_record(obj: dict, space: str) -> MetaRecord:
    arch = from_json(obj["arch"])
    if arch.space != space:
        raise MetaDatasetError(f"record space {arch.space} != header space {space}")
    return MetaRecord(int(obj["task_id"]), arch, float(obj["y"]), int(obj["p"]), int(obj["m"]), float(obj["l"]))


def loads(text: str, space: str | None = None) -> MetaDataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MetaDatasetError("line 1: missing header")
    ds = None
    for no, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
            kind = obj["kind"]
            if no == 1:
                if kind != "header" or obj["version"] != FORMAT_VERSION:
                    raise MetaDatasetError("expected a version-1 header")
                if space is not None and obj["space"] != space:
                    raise MetaDatasetError(f"space mismatch: file has {obj['space']}, expected {space}")
                ds = MetaDataset(obj["space"], int(obj["oracle_seed"]), int(obj["latency_seed"]))
            elif kind == "task":
                t = TaskDescriptor.from_json(obj)
                ds.tasks[t.task_id] = t
            elif kind == "record":
                r = _parse_record(obj, ds.space)
                if r.task_id not in ds.tasks:
                    raise MetaDatasetError(f"unknown task_id {r.task_id}")
                ds.records.append(r)
            else:
                raise MetaDatasetError(f"unknown line kind {kind!r}")
        except MetaDatasetError as e:
            raise MetaDatasetError(f"line {no}: {e}") from None
        except (ValueError, KeyError, TypeError) as e:
            raise MetaDatasetError(f"line {no}: malformed ({type(e).__name__}: {e})") from None
    return ds


def read(path: str | Path, space: str | None = None) -> MetaDataset:
    return loads(Path(path).read_text(), space)


def read_header(path: str | Path) -> dict:
    with open(path) as fh:
        return json.loads(fh.readline())


# ------------------------------------------------------------------ stats


def summary_stats(ds: MetaDataset) -> dict[str, dict]:
    """min/max/mean/std (population) and type-7 deciles per objective."""
    if not ds.records:
        raise ValueError("dataset is empty")
    out = {}
    for k in OBJECTIVES:
        col = ds.column(k)
        out[k] = {"min": float(col.min()), "max": float(col.max()), "mean": float(col.mean()),
                  "std": float(col.std()), "deciles": np.quantile(col, np.arange(1, 10) / 10).tolist()}
    return out
