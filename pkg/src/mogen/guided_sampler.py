"""Reverse-SDE sampling with many-objective predictor guidance.

Each step moves every chain by

    x <- x + g(t)^2 * (s(x, t) + sum_h u * k_h * grad log f_h(x)) * dt + g(t) * sqrt(dt) * eps

where ``u`` (``guidance_unit``) converts the preset scale magnitudes into
the units of this score network. No noise is added on the final step.
Chains draw their noise from their own generator, keyed by
``(seed, stream, chain_id)``, so results do not depend on batch composition.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .score_network import ScoreNet, SdeSchedule
from .search_space import Architecture, ContinuousArch, quantize, strict_valid
from .task_oracle import TaskDescriptor

GUIDANCE_UNIT = 1e-2
BASELINE_BATCH = 256
PHASE_BATCH = 128
HEAD_FOR = {"k_acc": "acc", "k_params": "params", "k_macs": "macs", "k_lat": "latency"}


class ChainDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class GuidanceScales:
    k_acc: float = 0.0
    k_params: float = 0.0
    k_macs: float = 0.0
    k_lat: float = 0.0

    def __post_init__(self):
        for k, v in self.items():
            if not v >= 0:
                raise ValueError(f"{k} must be >= 0, got {v}")

    def items(self):
        return ((f.name, getattr(self, f.name)) for f in dataclasses.fields(self))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.k_acc, self.k_params, self.k_macs, self.k_lat)

    def to_json(self) -> dict:
        return dict(self.items())

    @classmethod
    def from_json(cls, obj: dict) -> "GuidanceScales":
        unknown = set(obj) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown scale keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})


@dataclass(frozen=True)
class PhasePreset:
    regime: str
    scales: GuidanceScales


PRESETS = {
    "nb201": {"efficient": GuidanceScales(4732, 482, 421, 368), "accurate": GuidanceScales(24943, 12, 26, 13)},
    "mbv3": {"efficient": GuidanceScales(4987, 494, 478, 481), "accurate": GuidanceScales(48321, 21, 16, 39)},
}
DIFFUSIONNAG_SCALES = GuidanceScales(k_acc=10000)


class Guide(Protocol):
    """Anything exposing per-head gradients of log f; ``grad_log_sum`` is used when present."""

    def grad_log(self, which: str, x: np.ndarray, t, emb, floor: float = 1e-12) -> np.ndarray: ...


@dataclass
class ReverseChainState:
    x: np.ndarray  # (B, R, C)
    step: int
    rngs: list[np.random.Generator]
    chain_ids: list[int] = field(default_factory=list)


def chain_rng(seed: int, stream: int, chain_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, chain_id])


def init_state(space_shape: tuple[int, int], sde: SdeSchedule, seed: int, n: int, stream: int = 0,
               first_chain: int = 0) -> ReverseChainState:
    ids = list(range(first_chain, first_chain + n))
    rngs = [chain_rng(seed, stream, c) for c in ids]
    x = np.stack([r.standard_normal(space_shape) for r in rngs]) * sde.sigma_max
    return ReverseChainState(x, 0, rngs, ids)


def guidance_drift(preds: Guide | None, x: np.ndarray, t: float, emb, scales: GuidanceScales,
                   unit: float = GUIDANCE_UNIT) -> np.ndarray | None:
    """sum_h u * k_h * grad log f_h(x); None when every scale is zero."""
    weights = {HEAD_FOR[name]: unit * k for name, k in scales.items() if k != 0}
    if not weights:
        return None
    if hasattr(preds, "grad_log_sum"):
        return preds.grad_log_sum(weights, x, t, emb)
    total = None
    for head, w in weights.items():
        term = w * preds.grad_log(head, x, t, emb)
        total = term if total is None else total + term
    return total


def guided_reverse_step(state: ReverseChainState, net: ScoreNet, preds: Guide | None, emb,
                        scales: GuidanceScales, sde: SdeSchedule, unit: float = GUIDANCE_UNIT) -> ReverseChainState:
    if state.step >= sde.N:
        raise ValueError("chain already reached t = 0")
    t = sde.T - state.step * sde.dt
    x = state.x
    drift = net.score_np(x, np.full(len(x), t))
    noise = None
    if state.step < sde.N - 1:
        noise = np.stack([r.standard_normal(x.shape[1:]) for r in state.rngs])
    with np.errstate(over="ignore", invalid="ignore"):
        guide = guidance_drift(preds, x, t, emb, scales, unit)
        if guide is not None:
            drift = drift + guide
        g2 = float(sde.g(t)) ** 2
        x_new = x + g2 * sde.dt * drift
        if noise is not None:
            x_new = x_new + np.sqrt(g2 * sde.dt) * noise
    if not np.isfinite(x_new).all():
        bad = [c for c, v in zip(state.chain_ids, x_new) if not np.isfinite(v).all()]
        raise ChainDiverged(f"non-finite update at step {state.step} (t={t:.4f}) in chains {bad[:8]}")
    return ReverseChainState(x_new, state.step + 1, state.rngs, state.chain_ids)


@dataclass
class GeneratedBatch:
    raw: list[ContinuousArch]
    archs: list[Architecture]
    strict: list[bool]
    phases: list[str]

    def __len__(self):
        return len(self.archs)

    def __add__(self, other: "GeneratedBatch") -> "GeneratedBatch":
        return GeneratedBatch(self.raw + other.raw, self.archs + other.archs, self.strict + other.strict,
                              self.phases + other.phases)


def _embedding(preds, task):
    if preds is None or task is None:
        return None
    return preds.encode_dataset(task) if isinstance(task, TaskDescriptor) else np.asarray(task)


def generate_batch(net: ScoreNet, preds, task, scales: GuidanceScales, batch_size: int, seed: int,
                   stream: int = 0, phase: str = "", n_steps: int | None = None,
                   unit: float = GUIDANCE_UNIT, chunk: int = 128) -> GeneratedBatch:
    """Run ``batch_size`` independent reverse chains and quantize the endpoints."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if preds is None and any(k for _, k in scales.items()):
        raise ValueError("non-zero guidance needs predictors")
    sde = net.sde if n_steps is None else dataclasses.replace(net.sde, N=n_steps)
    emb = _embedding(preds, task)
    xs = []
    for start in range(0, batch_size, chunk):
        state = init_state(net.shape, sde, seed, min(chunk, batch_size - start), stream, start)
        for _ in range(sde.N):
            state = guided_reverse_step(state, net, preds, emb, scales, sde, unit)
        xs.append(state.x)
    raw = [ContinuousArch(net.space, v) for v in np.concatenate(xs)]
    return GeneratedBatch(raw, [quantize(r) for r in raw], [strict_valid(r) for r in raw], [phase] * len(raw))


def generate_stretched(net: ScoreNet, preds, task, presets: dict[str, GuidanceScales], seed: int,
                       phase_batch: int = PHASE_BATCH, n_steps: int | None = None,
                       unit: float = GUIDANCE_UNIT) -> GeneratedBatch:
    """Efficient-preset phase then accurate-preset phase, on independent noise streams."""
    missing = {"efficient", "accurate"} - set(presets)
    if missing:
        raise ValueError(f"missing presets: {sorted(missing)}")
    out = None
    for stream, regime in enumerate(("efficient", "accurate"), start=1):
        b = generate_batch(net, preds, task, presets[regime], phase_batch, seed, stream, regime, n_steps, unit)
        out = b if out is None else out + b
    return out
