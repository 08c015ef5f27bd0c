"""Closed-form parameter and MAC counts plus trimmed-mean latency estimates.

Per-layer formulas are listed in docs/cost_model.md. Latency comes from a
surrogate (affine in MACs, params and executed depth, lognormal noise) that is
measured with the repeat/trim/mean protocol.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .search_space import NB201, NB201_EDGES, Architecture, arch_hash

NUM_CLASSES = 20
NB201_INPUT = 32
MBV3_INPUT = 224

# NB201 macro skeleton
NB201_STEM = 16
NB201_STAGE_CHANNELS = (16, 32, 64)
NB201_CELLS_PER_STAGE = 5

# MobileNetV3 (large) super-network settings per stage
MBV3_BASE_STEM = 16
MBV3_BASE_FIRST = 16
MBV3_BASE_STAGES = (24, 40, 80, 112, 160)
MBV3_BASE_FINAL_EXPAND = 960
MBV3_BASE_FEATURE_MIX = 1280
MBV3_STRIDES = (2, 2, 2, 1, 2)
MBV3_ACTS = ("relu", "relu", "h_swish", "h_swish", "h_swish")
MBV3_SE = (False, True, False, True, True)
SE_REDUCTION = 4


def make_divisible(v: float, divisor: int = 8, min_value: int | None = None) -> int:
    min_value = min_value or divisor
    new_v = max(min_value, int(v + divisor / 2) // divisor * divisor)
    if new_v < 0.9 * v:
        new_v += divisor
    return new_v


def _out(h: int, stride: int) -> int:
    return -(-h // stride)


@dataclass(frozen=True)
class Layer:
    kind: str  # conv | dwconv | bn | pool | gap | add | linear | se
    cin: int
    cout: int = 0
    k: int = 1
    h_out: int = 1
    h_in: int = 1
    bias: bool = False

    @property
    def params(self) -> int:
        if self.kind == "conv":
            return self.cin * self.cout * self.k * self.k + (self.cout if self.bias else 0)
        if self.kind == "dwconv":
            return self.cin * self.k * self.k
        if self.kind == "bn":
            return 2 * self.cin
        if self.kind == "linear":
            return self.cin * self.cout + (self.cout if self.bias else 0)
        if self.kind == "se":
            mid = self.cout
            return self.cin * mid + mid + mid * self.cin + self.cin
        return 0

    @property
    def macs(self) -> int:
        hw = self.h_out * self.h_out
        if self.kind == "conv":
            return self.cin * self.cout * self.k * self.k * hw
        if self.kind == "dwconv":
            return self.cin * self.k * self.k * hw
        if self.kind == "pool":
            return self.k * self.k * self.cin * hw
        if self.kind in ("gap", "add"):
            return self.cin * hw if self.kind == "add" else self.cin * self.h_in * self.h_in
        if self.kind == "linear":
            return self.cin * self.cout
        if self.kind == "se":
            mid = self.cout
            return 2 * self.cin * hw + 2 * self.cin * mid
        return 0


@dataclass(frozen=True)
class CostReport:
    params: int
    macs: int
    latency_ms: float

    @property
    def params_m(self) -> float:
        return self.params / 1e6

    @property
    def macs_m(self) -> float:
        return self.macs / 1e6

    def to_json(self) -> dict:
        return {"params": self.params, "macs": self.macs, "latency_ms": self.latency_ms}


# ----------------------------------------------------------------- NB201


def nb201_edge_layers(op: str, c: int, h: int) -> list[Layer]:
    if op in ("zeroise", "skip"):
        return []
    if op == "conv1x1":
        return [Layer("conv", c, c, 1, h), Layer("bn", c)]
    if op == "conv3x3":
        return [Layer("conv", c, c, 3, h), Layer("bn", c)]
    if op == "avgpool3x3":
        return [Layer("pool", c, c, 3, h)]
    raise ValueError(f"unknown NB201 op {op!r}")


def _nb201_cell(ops: Sequence[str], c: int, h: int) -> list[Layer]:
    layers: list[Layer] = []
    incoming = {1: 0, 2: 0, 3: 0}
    for op, (_, dst) in zip(ops, NB201_EDGES):
        layers += nb201_edge_layers(op, c, h)
        if op != "zeroise":
            incoming[dst] += 1
    for n in incoming.values():
        layers += [Layer("add", c, c, 1, h)] * max(0, n - 1)
    return layers


def _nb201_reduction(cin: int, cout: int, h_in: int) -> list[Layer]:
    h = _out(h_in, 2)
    return [
        Layer("conv", cin, cout, 3, h), Layer("bn", cout),
        Layer("conv", cout, cout, 3, h), Layer("bn", cout),
        Layer("pool", cin, cin, 2, h), Layer("conv", cin, cout, 1, h),
        Layer("add", cout, cout, 1, h),
    ]


def nb201_layers(a: Architecture, input_hw: int = NB201_INPUT) -> list[Layer]:
    ops = a.edge_ops()
    h = input_hw
    layers = [Layer("conv", 3, NB201_STEM, 3, h), Layer("bn", NB201_STEM)]
    c = NB201_STEM
    for s, cs in enumerate(NB201_STAGE_CHANNELS):
        if s:
            layers += _nb201_reduction(c, cs, h)
            h = _out(h, 2)
        c = cs
        for _ in range(NB201_CELLS_PER_STAGE):
            layers += _nb201_cell(ops, c, h)
    layers += [Layer("bn", c), Layer("gap", c, h_in=h), Layer("linear", c, NUM_CLASSES, bias=True)]
    return layers


# ----------------------------------------------------------------- MBv3


def _mbv3_block(cin: int, cout: int, expand: int, k: int, stride: int, h_in: int, se: bool) -> list[Layer]:
    mid = make_divisible(round(cin * expand), 8)
    h = _out(h_in, stride)
    layers = [
        Layer("conv", cin, mid, 1, h_in), Layer("bn", mid),
        Layer("dwconv", mid, mid, k, h), Layer("bn", mid),
    ]
    if se:
        layers.append(Layer("se", mid, make_divisible(mid // SE_REDUCTION, 8), 1, h))
    layers += [Layer("conv", mid, cout, 1, h), Layer("bn", cout)]
    if stride == 1 and cin == cout:
        layers.append(Layer("add", cout, cout, 1, h))
    return layers


def mbv3_layers(a: Architecture, input_hw: int = MBV3_INPUT) -> list[Layer]:
    w = a.width_mult
    stem = make_divisible(MBV3_BASE_STEM * w)
    first = make_divisible(MBV3_BASE_FIRST * w)
    h = _out(input_hw, 2)
    layers = [Layer("conv", 3, stem, 3, h), Layer("bn", stem)]
    layers += [Layer("dwconv", stem, stem, 3, h), Layer("bn", stem),
               Layer("conv", stem, first, 1, h), Layer("bn", first)]
    if stem == first:
        layers.append(Layer("add", first, first, 1, h))
    c = first
    for s, blocks in enumerate(a.blocks()):
        cout = make_divisible(MBV3_BASE_STAGES[s] * w)
        for j, (e, k) in enumerate(blocks):
            stride = MBV3_STRIDES[s] if j == 0 else 1
            layers += _mbv3_block(c, cout, e, k, stride, h, MBV3_SE[s])
            h = _out(h, stride)
            c = cout
    fe = make_divisible(MBV3_BASE_FINAL_EXPAND * w)
    fm = make_divisible(MBV3_BASE_FEATURE_MIX * w)
    layers += [Layer("conv", c, fe, 1, h), Layer("bn", fe), Layer("gap", fe, h_in=h),
               Layer("conv", fe, fm, 1, 1), Layer("linear", fm, NUM_CLASSES, bias=True)]
    return layers


def layers_for(a: Architecture, input_hw: int | None = None) -> list[Layer]:
    if a.space == NB201:
        return nb201_layers(a, input_hw or NB201_INPUT)
    return mbv3_layers(a, input_hw or MBV3_INPUT)


@lru_cache(maxsize=65536)
def _totals(a: Architecture, input_hw: int | None) -> tuple[int, int, int]:
    layers = layers_for(a, input_hw)
    depth = sum(layer.kind in ("conv", "dwconv", "pool", "linear") for layer in layers)
    return sum(layer.params for layer in layers), sum(layer.macs for layer in layers), depth


def count_params(a: Architecture) -> int:
    return _totals(a, None)[0]


def count_macs(a: Architecture, input_hw: int | None = None) -> int:
    return _totals(a, input_hw)[1]


def active_depth(a: Architecture) -> int:
    """Number of executed compute layers (convolutions, pools, linear)."""
    return _totals(a, None)[2]


# --------------------------------------------------------------- latency


@dataclass(frozen=True)
class LatencySurrogate:
    """base_ms = intercept + per_mac * MACs + per_param * params + per_layer * depth."""

    intercept: float = 1.0
    per_mac: float = 2e-8
    per_param: float = 1e-6
    per_layer: float = 0.05
    noise_sigma: float = 0.05

    def base(self, a: Architecture) -> float:
        return (self.intercept + self.per_mac * count_macs(a) + self.per_param * count_params(a)
                + self.per_layer * active_depth(a))


@dataclass(frozen=True)
class LatencyProtocol:
    repetitions: int = 100
    ci_level: float = 0.90
    noise_seed: int = 0
    surrogate: LatencySurrogate = field(default_factory=LatencySurrogate)

    def __post_init__(self):
        if self.repetitions < 2:
            raise ValueError("repetitions must be >= 2")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")


def latency_samples(a: Architecture, proto: LatencyProtocol) -> np.ndarray:
    base = proto.surrogate.base(a)
    sigma = proto.surrogate.noise_sigma
    if sigma == 0.0:
        return np.full(proto.repetitions, base)
    rng = np.random.default_rng([proto.noise_seed, zlib.crc32(arch_hash(a).encode())])
    return base * np.exp(sigma * rng.standard_normal(proto.repetitions))


def trimmed_mean(samples: np.ndarray, ci_level: float) -> float:
    """Mean of the samples inside the normal-theory ``ci_level`` interval."""
    x = np.asarray(samples, dtype=np.float64)
    center = float(x.mean())
    half = NormalDist().inv_cdf(0.5 + ci_level / 2) * float(x.std(ddof=1))
    kept = x[np.abs(x - center) <= half]
    assert kept.size > 0, "every latency sample was discarded"
    ref = float(kept[0])
    return ref + math.fsum(kept - ref) / kept.size


def measure_latency(a: Architecture, proto: LatencyProtocol | None = None) -> float:
    proto = proto or LatencyProtocol()
    return trimmed_mean(latency_samples(a, proto), proto.ci_level)


def cost_report(a: Architecture, proto: LatencyProtocol | None = None) -> CostReport:
    return CostReport(count_params(a), count_macs(a), measure_latency(a, proto))


# --------------------------------------------------------- normalisation


def normalize_metric(value: float | np.ndarray, population: Sequence[float]) -> float | np.ndarray:
    """Empirical-CDF position in [0, 1]: population min -> 0, max -> 1.

    Ties take their mid-rank; a one-element population maps everything to 0.5.
    """
    pop = np.sort(np.asarray(population, dtype=np.float64))
    if pop.size == 0:
        raise ValueError("population is empty")
    v = np.asarray(value, dtype=np.float64)
    if pop.size == 1:
        out = np.full(v.shape, 0.5)
    else:
        lo = np.searchsorted(pop, v, side="left")
        hi = np.searchsorted(pop, v, side="right")
        rank = np.where(hi > lo, (lo + hi - 1) / 2.0, lo - 0.5)
        out = np.clip(rank / (pop.size - 1), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


_NB201_TABLE: tuple[np.ndarray, np.ndarray] | None = None


def nb201_cost_table() -> tuple[np.ndarray, np.ndarray]:
    """(params, macs) for all 15,625 cells in ``itertools.product`` order.

    Uses the same per-layer formulas as :func:`count_params`; cell costs are
    additive over edges plus node-sum adds, so they are assembled in bulk.
    """
    global _NB201_TABLE
    if _NB201_TABLE is None:
        import itertools

        from .search_space import NB201_OPS, nb201

        combos = np.array(list(itertools.product(range(len(NB201_OPS)), repeat=6)))
        skeleton = nb201(["zeroise"] * 6)
        params = np.full(len(combos), count_params(skeleton), dtype=np.int64)
        macs = np.full(len(combos), count_macs(skeleton), dtype=np.int64)
        h = NB201_INPUT
        dst = np.array([d for _, d in NB201_EDGES])
        fan_in = np.stack([((combos != 0) & (dst == n)).sum(axis=1) for n in (1, 2, 3)], axis=1)
        extra_adds = np.clip(fan_in - 1, 0, None).sum(axis=1)
        for s, c in enumerate(NB201_STAGE_CHANNELS):
            if s:
                h = _out(h, 2)
            per_op_p = np.array([sum(l.params for l in nb201_edge_layers(o, c, h)) for o in NB201_OPS])
            per_op_m = np.array([sum(l.macs for l in nb201_edge_layers(o, c, h)) for o in NB201_OPS])
            add_m = Layer("add", c, c, 1, h).macs
            params += NB201_CELLS_PER_STAGE * per_op_p[combos].sum(axis=1)
            macs += NB201_CELLS_PER_STAGE * (per_op_m[combos].sum(axis=1) + add_m * extra_adds)
        params.flags.writeable = False
        macs.flags.writeable = False
        _NB201_TABLE = (params, macs)
    return _NB201_TABLE


def nb201_index(a: Architecture) -> int:
    """Position of a cell in ``itertools.product`` order."""
    from .search_space import NB201_OPS

    idx = 0
    for op in a.edge_ops():
        idx = idx * len(NB201_OPS) + NB201_OPS.index(op)
    return idx
