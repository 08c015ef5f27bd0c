"""Random search with successive halving over guidance scales.

Trials draw every scale log-uniformly inside the regime bounds. All trials
are scored on a cheap rung (few chains, few steps); the best third is
re-scored at the full configuration and the winner is the best of those.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import pareto_select as PS
from .guided_sampler import GuidanceScales, generate_batch
from .task_oracle import TaskDescriptor


@dataclass(frozen=True)
class ScaleBounds:
    regime: str
    acc: tuple[float, float]
    secondary: tuple[float, float]

    def contains(self, s: GuidanceScales) -> bool:
        lo, hi = self.secondary
        return (self.acc[0] <= s.k_acc <= self.acc[1]
                and all(lo <= k <= hi for k in (s.k_params, s.k_macs, s.k_lat)))


BOUNDS = {
    "efficient": ScaleBounds("efficient", (1000.0, 5000.0), (100.0, 500.0)),
    "accurate": ScaleBounds("accurate", (10000.0, 50000.0), (10.0, 50.0)),
}


@dataclass(frozen=True)
class Rung:
    chains: int
    steps: int | None  # None = the score network's full step count


RUNG0 = Rung(32, 50)
FULL = Rung(128, None)


@dataclass
class Trial:
    index: int
    scales: GuidanceScales
    objective: float
    rung: int = 0
    full_objective: float | None = None


@dataclass
class TuneResult:
    regime: str
    best: GuidanceScales
    best_objective: float
    trials: list[Trial] = field(default_factory=list)

    @property
    def best_so_far(self) -> list[float]:
        out, cur = [], -math.inf
        for t in self.trials:
            cur = max(cur, t.objective)
            out.append(cur)
        return out

    def to_json(self) -> dict:
        return {"regime": self.regime, "best": self.best.to_json(), "best_objective": self.best_objective,
                "trials": [{"index": t.index, "scales": t.scales.to_json(), "objective": t.objective,
                            "full_objective": t.full_objective} for t in self.trials]}


Objective = Callable[[GuidanceScales, Rung, int], float]


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_scales(rng: np.random.Generator, bounds: ScaleBounds) -> GuidanceScales:
    return GuidanceScales(_log_uniform(rng, *bounds.acc), *(_log_uniform(rng, *bounds.secondary) for _ in range(3)))


def front_objective(net, preds, tasks: Sequence[TaskDescriptor]) -> Objective:
    """Mean over tasks of the mean predicted accuracy on the three secondary-metric fronts."""

    def objective(scales: GuidanceScales, rung: Rung, seed: int) -> float:
        per_task = []
        for i, task in enumerate(tasks):
            batch = generate_batch(net, preds, task, scales, rung.chains, seed, stream=100 + i, n_steps=rung.steps)
            x = np.stack([a.ops.astype(np.float64) for a in batch.archs])
            acc = preds.predict("acc_denoised", x, 0.0, preds.encode_dataset(task))
            scored = PS.score_archs(batch.archs, acc)
            fronts = [PS.front_for(scored, m) for m in PS.METRICS]
            per_task.append(np.mean([np.mean([s.predicted_acc for s in f]) for f in fronts]))
        return float(np.mean(per_task))

    return objective


def tune_scales(objective: Objective, bounds: ScaleBounds, budget: int = 30, seed: int = 0,
                rung0: Rung = RUNG0, full: Rung = FULL) -> TuneResult:
    """Random search over ``budget`` trials with one halving rung (keep the top third)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng([seed, 0x7E])
    trials = []
    for i in range(budget):
        s = sample_scales(rng, bounds)
        trials.append(Trial(i, s, objective(s, rung0, seed)))
    keep = math.ceil(budget / 3)
    promoted = sorted(trials, key=lambda t: (-t.objective, t.index))[:keep]
    for t in promoted:
        t.rung = 1
        t.full_objective = objective(t.scales, full, seed)
    winner = max(promoted, key=lambda t: (t.full_objective, -t.index))
    return TuneResult(bounds.regime, winner.scales, winner.full_objective, trials)
