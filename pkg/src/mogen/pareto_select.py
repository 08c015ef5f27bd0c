"""Pareto front filtering, Acc/Bal/Eff picks, and batch generation metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import cost_model
from .search_space import Architecture, ContinuousArch, arch_hash, strict_valid

METRICS = ("params", "macs", "latency")
PICKS = ("Acc", "Bal", "Eff")
CSV_COLUMNS = ("arch_hash", "predicted_acc", "oracle_acc", "params", "macs", "latency_ms", "phase",
               "on_front", "pick")


@dataclass(frozen=True)
class ScoredArch:
    arch: Architecture
    predicted_acc: float
    params: int
    macs: int
    latency_ms: float
    phase: str = ""
    oracle_acc: float | None = None

    @property
    def hash(self) -> str:
        return arch_hash(self.arch)

    def metric(self, name: str) -> float:
        if name == "latency":
            return self.latency_ms
        if name in ("params", "macs"):
            return getattr(self, name)
        raise ValueError(f"unknown metric {name!r}")


@dataclass(frozen=True)
class FrontSelection:
    metric: str
    front: list[ScoredArch]
    picks: dict[str, ScoredArch]


def score_archs(archs: Sequence[Architecture], predicted_acc: Sequence[float], phase: str | Sequence[str] = "",
                proto: cost_model.LatencyProtocol | None = None) -> list[ScoredArch]:
    """Attach analytic costs (always recomputed) to predicted accuracies."""
    phases = [phase] * len(archs) if isinstance(phase, str) else list(phase)
    out = []
    for a, acc, ph in zip(archs, predicted_acc, phases):
        rep = cost_model.cost_report(a, proto)
        out.append(ScoredArch(a, float(acc), rep.params, rep.macs, rep.latency_ms, ph))
    return out


def pareto_front(points: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of non-dominated (acc up, metric down) points, sorted by metric then acc desc.

    A point is dropped iff another has acc >= and metric <= with one strict.
    """
    if len(points) == 0:
        raise ValueError("pareto_front needs at least one point")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    acc, met = pts[:, 0], pts[:, 1]
    order = np.lexsort((np.arange(len(pts)), -acc, met))
    keep = []
    best = -np.inf
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and met[order[j]] == met[order[i]]:
            j += 1
        group_best = acc[order[i]]  # group is sorted by acc descending
        if group_best > best:
            keep.extend(int(k) for k in order[i:j] if acc[k] == group_best)
            best = group_best
        i = j
    return keep


def dedup(scored: Iterable[ScoredArch]) -> list[ScoredArch]:
    """First occurrence per arch_hash."""
    seen, out = set(), []
    for s in scored:
        if s.hash not in seen:
            seen.add(s.hash)
            out.append(s)
    return out


def front_for(scored: Sequence[ScoredArch], metric: str) -> list[ScoredArch]:
    uniq = sorted(dedup(scored), key=lambda s: s.hash)
    idx = pareto_front([(s.predicted_acc, s.metric(metric)) for s in uniq])
    return [uniq[i] for i in idx]


def _argbest(keys: list[tuple]) -> int:
    return min(range(len(keys)), key=lambda i: keys[i])


def select_configs(front: Sequence[ScoredArch], metric: str) -> dict[str, ScoredArch]:
    """Acc = max predicted acc, Bal = max acc/metric, Eff = min metric.

    Ties go to the smaller metric, then the lexicographically smaller arch_hash.
    """
    if not front:
        raise ValueError("front is empty")
    m = [s.metric(metric) for s in front]
    a = [s.predicted_acc for s in front]
    h = [s.hash for s in front]
    ratio = [x / y if y > 0 else np.inf for x, y in zip(a, m)]
    n = range(len(front))
    return {
        "Acc": front[_argbest([(-a[i], m[i], h[i]) for i in n])],
        "Bal": front[_argbest([(-ratio[i], m[i], h[i]) for i in n])],
        "Eff": front[_argbest([(m[i], m[i], h[i]) for i in n])],
    }


def select_all(scored: Sequence[ScoredArch], metrics: Sequence[str] = METRICS) -> dict[str, FrontSelection]:
    out = {}
    for metric in metrics:
        front = front_for(scored, metric)
        out[metric] = FrontSelection(metric, front, select_configs(front, metric))
    return out


def generation_metrics(raw: Sequence[ContinuousArch], quantized: Sequence[Architecture],
                       training_hashes: Iterable[str]) -> dict[str, float]:
    """Validity, uniqueness and novelty percentages of a generated batch.

    validity   = strictly valid samples / batch size
    uniqueness = distinct hashes among valid samples / valid samples
    novelty    = distinct valid hashes absent from training / distinct valid hashes
    """
    if len(raw) == 0 or len(raw) != len(quantized):
        raise ValueError("need a nonempty batch with one quantized arch per raw sample")
    train = set(training_hashes)
    valid = [arch_hash(q) for r, q in zip(raw, quantized) if strict_valid(r)]
    distinct = set(valid)
    return {
        "validity": 100.0 * len(valid) / len(raw),
        "uniqueness": 100.0 * len(distinct) / len(valid) if valid else 0.0,
        "novelty": 100.0 * len(distinct - train) / len(distinct) if distinct else 0.0,
    }


def write_csv(path: str | Path, scored: Sequence[ScoredArch], selection: FrontSelection) -> None:
    """One row per distinct architecture, flagged with front membership and pick names."""
    on_front = {s.hash for s in selection.front}
    picks: dict[str, list[str]] = {}
    for name, s in selection.picks.items():
        picks.setdefault(s.hash, []).append(name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s in dedup(scored):
            w.writerow([s.hash, repr(s.predicted_acc), "" if s.oracle_acc is None else repr(s.oracle_acc),
                        s.params, s.macs, repr(s.latency_ms), s.phase, int(s.hash in on_front),
                        "+".join(picks.get(s.hash, []))])
