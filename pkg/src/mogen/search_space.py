"""Encoded NASBench201 cells and MobileNetV3 sub-networks.

NB201 cells use an 8x7 operations matrix (rows: input, six edges, output;
columns: input placeholder, five operations, output placeholder) and a fixed
8x8 adjacency between those rows. MobileNetV3 networks use a 21x9 matrix: a
width-multiplier flag row followed by 20 block rows whose columns enumerate
(expansion ratio, kernel size) pairs, plus a 20x20 chain adjacency over the
active blocks.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

NB201 = "nb201"
MBV3 = "mbv3"

NB201_OPS = ("zeroise", "skip", "conv1x1", "conv3x3", "avgpool3x3")
NB201_COLUMNS = ("input",) + NB201_OPS + ("output",)
# (source node, target node) of each cell edge, in row order 1..6
NB201_EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
NB201_SHAPE = (8, 7)
NB201_SIZE = len(NB201_OPS) ** len(NB201_EDGES)

MBV3_EXPANDS = (3, 4, 6)
MBV3_KERNELS = (3, 5, 7)
MBV3_STAGES = 5
MBV3_BLOCKS_PER_STAGE = 4
MBV3_DEPTHS = (2, 3, 4)
MBV3_WIDTHS = (1.0, 1.2)
MBV3_SHAPE = (21, 9)

SHAPES = {NB201: NB201_SHAPE, MBV3: MBV3_SHAPE}


class EncodingShapeError(ValueError):
    pass


class InvalidArchitecture(ValueError):
    pass


def _nb201_adjacency() -> np.ndarray:
    adj = np.zeros((8, 8), dtype=np.int64)
    for r, (src, dst) in enumerate(NB201_EDGES, start=1):
        if src == 0:
            adj[0, r] = 1
        if dst == 3:
            adj[r, 7] = 1
        for r2, (src2, _) in enumerate(NB201_EDGES, start=1):
            if src2 == dst:
                adj[r, r2] = 1
    return adj


NB201_ADJ = _nb201_adjacency()
NB201_ADJ.flags.writeable = False


def _ancestor_mask(adj: np.ndarray) -> np.ndarray:
    n = len(adj)
    reach = np.eye(n, dtype=bool) | adj.astype(bool)
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    # mask[i, j]: token i may attend to token j (j is i or an ancestor of i)
    return reach.T


def attention_mask(space: str) -> np.ndarray:
    """Token-visibility mask following the topological order of each space."""
    if space == NB201:
        return _ancestor_mask(NB201_ADJ)
    n = MBV3_SHAPE[0]
    return np.tril(np.ones((n, n), dtype=bool))


def mbv3_column(expand: int, kernel: int) -> int:
    return 3 * MBV3_EXPANDS.index(expand) + MBV3_KERNELS.index(kernel)


def mbv3_stage_rows(stage: int) -> range:
    start = 1 + MBV3_BLOCKS_PER_STAGE * stage
    return range(start, start + MBV3_BLOCKS_PER_STAGE)


def mbv3_chain_adjacency(active: Sequence[bool]) -> np.ndarray:
    adj = np.zeros((20, 20), dtype=np.int64)
    idx = [i for i, a in enumerate(active) if a]
    for a, b in zip(idx, idx[1:]):
        adj[a, b] = 1
    return adj


def mbv3_cardinality() -> int:
    per_stage = sum(9**d for d in MBV3_DEPTHS)
    return len(MBV3_WIDTHS) * per_stage**MBV3_STAGES


def _as_tuple(m: np.ndarray) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(v) for v in row) for row in np.asarray(m))


@dataclass(frozen=True)
class Nb201Encoding:
    ops: tuple[tuple[int, ...], ...]
    adj: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class Mbv3Encoding:
    ops: tuple[tuple[int, ...], ...]
    adj: tuple[tuple[int, ...], ...]
    width_mult: float


@dataclass(frozen=True)
class Architecture:
    space: str
    encoding: Nb201Encoding | Mbv3Encoding

    def __post_init__(self):
        problems = validate(self.space, np.array(self.encoding.ops), np.array(self.encoding.adj),
                            getattr(self.encoding, "width_mult", None))
        if problems:
            raise InvalidArchitecture("; ".join(problems))

    @property
    def ops(self) -> np.ndarray:
        return np.array(self.encoding.ops, dtype=np.int64)

    @property
    def adj(self) -> np.ndarray:
        return np.array(self.encoding.adj, dtype=np.int64)

    @property
    def width_mult(self) -> float | None:
        return getattr(self.encoding, "width_mult", None)

    # NB201 helpers
    def edge_ops(self) -> tuple[str, ...]:
        assert self.space == NB201
        return tuple(NB201_OPS[int(np.argmax(row[1:6]))] for row in self.ops[1:7])

    # MBv3 helpers
    def blocks(self) -> list[list[tuple[int, int]]]:
        """Per stage, the (expand, kernel) of each active block."""
        assert self.space == MBV3
        ops = self.ops
        stages = []
        for s in range(MBV3_STAGES):
            stage = []
            for r in mbv3_stage_rows(s):
                if ops[r].any():
                    c = int(np.argmax(ops[r]))
                    stage.append((MBV3_EXPANDS[c // 3], MBV3_KERNELS[c % 3]))
            stages.append(stage)
        return stages

    def depths(self) -> list[int]:
        return [len(s) for s in self.blocks()]

    def to_json(self) -> dict:
        out = {"space": self.space, "ops": [list(r) for r in self.encoding.ops]}
        if self.space == MBV3:
            out["width_mult"] = self.width_mult
        return out


@dataclass(frozen=True)
class ContinuousArch:
    space: str
    values: np.ndarray

    def __post_init__(self):
        if tuple(np.shape(self.values)) != SHAPES[self.space]:
            raise EncodingShapeError(f"{self.space} expects {SHAPES[self.space]}, got {np.shape(self.values)}")


# ------------------------------------------------------------------ builders


def nb201(ops: Sequence[str | int]) -> Architecture:
    """Cell from six edge operations (names or indices into NB201_OPS)."""
    if len(ops) != 6:
        raise EncodingShapeError("NB201 cells have exactly 6 edges")
    m = np.zeros(NB201_SHAPE, dtype=np.int64)
    m[0, 0] = 1
    m[7, 6] = 1
    for r, op in enumerate(ops, start=1):
        k = NB201_OPS.index(op) if isinstance(op, str) else int(op)
        m[r, 1 + k] = 1
    return Architecture(NB201, Nb201Encoding(_as_tuple(m), _as_tuple(NB201_ADJ)))


def mbv3(width_mult: float, stages: Sequence[Sequence[tuple[int, int]]]) -> Architecture:
    """Network from a width multiplier and per-stage (expand, kernel) lists."""
    if len(stages) != MBV3_STAGES:
        raise EncodingShapeError("MobileNetV3 has 5 stages")
    m = np.zeros(MBV3_SHAPE, dtype=np.int64)
    if width_mult == 1.2:
        m[0, :] = 1
    active = [False] * 20
    for s, blocks in enumerate(stages):
        if len(blocks) > MBV3_BLOCKS_PER_STAGE:
            raise InvalidArchitecture(f"stage {s} has {len(blocks)} blocks")
        for j, (e, k) in enumerate(blocks):
            r = mbv3_stage_rows(s)[j]
            m[r, mbv3_column(e, k)] = 1
            active[r - 1] = True
    adj = mbv3_chain_adjacency(active)
    return Architecture(MBV3, Mbv3Encoding(_as_tuple(m), _as_tuple(adj), float(width_mult)))


def from_ops(space: str, ops: np.ndarray) -> Architecture:
    """Discrete architecture from a binary ops matrix; adjacency is derived."""
    ops = np.asarray(ops, dtype=np.int64)
    if ops.shape != SHAPES[space]:
        raise EncodingShapeError(f"{space} expects {SHAPES[space]}, got {ops.shape}")
    if space == NB201:
        return Architecture(NB201, Nb201Encoding(_as_tuple(ops), _as_tuple(NB201_ADJ)))
    width = 1.2 if ops[0].all() else 1.0
    adj = mbv3_chain_adjacency(ops[1:].any(axis=1))
    return Architecture(MBV3, Mbv3Encoding(_as_tuple(ops), _as_tuple(adj), width))


def from_json(obj: dict | str) -> Architecture:
    if isinstance(obj, str):
        obj = json.loads(obj)
    space = obj["space"]
    arch = from_ops(space, np.array(obj["ops"]))
    if space == MBV3 and "width_mult" in obj and float(obj["width_mult"]) != arch.width_mult:
        raise InvalidArchitecture("width_mult disagrees with flag row")
    return arch


def all_nb201() -> list[Architecture]:
    return [nb201(ops) for ops in itertools.product(range(len(NB201_OPS)), repeat=6)]


# ---------------------------------------------------------------- validation


def validate(space: str, ops: np.ndarray, adj: np.ndarray | None = None,
             width_mult: float | None = None) -> list[str]:
    """All violated encoding rules (empty list means valid).

    Raises EncodingShapeError when the matrices have the wrong shape.
    """
    ops = np.asarray(ops)
    if ops.shape != SHAPES[space]:
        raise EncodingShapeError(f"{space} expects ops {SHAPES[space]}, got {ops.shape}")
    problems: list[str] = []
    if not np.isin(ops, (0, 1)).all():
        problems.append("ops matrix is not binary")
        return problems
    if space == NB201:
        if adj is not None and np.asarray(adj).shape != (8, 8):
            raise EncodingShapeError(f"nb201 expects adj (8, 8), got {np.asarray(adj).shape}")
        if list(ops[0]) != [1, 0, 0, 0, 0, 0, 0]:
            problems.append("row 0: input placeholder not one-hot on column 0")
        if list(ops[7]) != [0, 0, 0, 0, 0, 0, 1]:
            problems.append("row 7: output placeholder not one-hot on column 6")
        for r in range(1, 7):
            if ops[r, 0] or ops[r, 6]:
                problems.append(f"row {r}: edge uses a placeholder column")
            n = int(ops[r, 1:6].sum())
            if n != 1:
                problems.append(f"row {r}: {n}-hot edge row")
        if adj is not None and not np.array_equal(adj, NB201_ADJ):
            problems.append("adjacency differs from the fixed NB201 connectivity")
        return problems

    flag = ops[0]
    if not (flag.all() or not flag.any()):
        problems.append("row 0: width flag row neither all-zero nor all-one")
    elif width_mult is not None and width_mult != (1.2 if flag.all() else 1.0):
        problems.append("row 0: width flag disagrees with width_mult")
    active = []
    for r in range(1, 21):
        n = int(ops[r].sum())
        if n > 1:
            problems.append(f"row {r}: {n}-hot block row")
        active.append(n >= 1)
    for s in range(MBV3_STAGES):
        pattern = [active[r - 1] for r in mbv3_stage_rows(s)]
        depth = sum(pattern)
        if pattern != [True] * depth + [False] * (4 - depth):
            problems.append(f"stage {s}: active blocks are not a prefix")
        if depth not in MBV3_DEPTHS:
            problems.append(f"stage {s}: depth {depth} not in {MBV3_DEPTHS}")
    if adj is not None:
        adj = np.asarray(adj)
        if adj.shape != (20, 20):
            raise EncodingShapeError(f"mbv3 expects adj (20, 20), got {adj.shape}")
        if not np.array_equal(adj, mbv3_chain_adjacency(active)):
            problems.append("adjacency is not the chain over active blocks")
    return problems


# ------------------------------------------------------------------ sampling


def sample_nb201(rng: np.random.Generator, top_set: Sequence[Architecture] = (), bias: float = 0.0) -> Architecture:
    """With probability ``bias`` a uniform draw from ``top_set``, else uniform over all cells."""
    if not 0.0 <= bias <= 1.0:
        raise ValueError(f"bias must be in [0, 1], got {bias}")
    if bias > 0 and not top_set:
        raise ValueError("top_set is empty but bias > 0")
    if bias > 0 and rng.random() < bias:
        return top_set[int(rng.integers(len(top_set)))]
    return nb201(rng.integers(len(NB201_OPS), size=6).tolist())


def sample_mbv3(rng: np.random.Generator) -> Architecture:
    width = MBV3_WIDTHS[int(rng.integers(2))]
    stages = []
    for _ in range(MBV3_STAGES):
        depth = MBV3_DEPTHS[int(rng.integers(3))]
        stages.append([(MBV3_EXPANDS[int(rng.integers(3))], MBV3_KERNELS[int(rng.integers(3))]) for _ in range(depth)])
    return mbv3(width, stages)


# ---------------------------------------------------- continuous <-> discrete


def to_continuous(arch: Architecture) -> ContinuousArch:
    return ContinuousArch(arch.space, arch.ops.astype(np.float64))


def _repair_depth(active: Sequence[bool]) -> int:
    """Legal depth needing the fewest flipped rows; ties go to the smaller depth."""
    best, best_cost = None, None
    for d in MBV3_DEPTHS:
        cost = sum(a != (i < d) for i, a in enumerate(active))
        if best_cost is None or cost < best_cost:
            best, best_cost = d, cost
    return best


def quantize(x: ContinuousArch) -> Architecture:
    """Project a continuous sample to the nearest-by-rule valid architecture."""
    v = np.asarray(x.values, dtype=np.float64)
    if v.shape != SHAPES[x.space]:
        raise EncodingShapeError(f"{x.space} expects {SHAPES[x.space]}, got {v.shape}")
    if x.space == NB201:
        return nb201(np.argmax(v[1:7, 1:6], axis=1).tolist())
    width = 1.2 if v[0].mean() >= 0.5 else 1.0
    stages = []
    for s in range(MBV3_STAGES):
        rows = v[list(mbv3_stage_rows(s))]
        maxima = rows.max(axis=1)
        threshold = 0.5 * maxima.mean()
        depth = _repair_depth(list(maxima >= threshold))
        blocks = []
        for row in rows[:depth]:
            c = int(np.argmax(row))
            blocks.append((MBV3_EXPANDS[c // 3], MBV3_KERNELS[c % 3]))
        stages.append(blocks)
    return mbv3(width, stages)


def strict_valid(x: ContinuousArch) -> bool:
    """True iff rounding every entry at 0.5 already gives a valid encoding."""
    r = (np.asarray(x.values) >= 0.5).astype(np.int64)
    return not validate(x.space, r)


def arch_hash(a: Architecture) -> str:
    if a.space == NB201:
        return "nb201:" + "|".join(a.edge_ops())
    stages = ["-".join(f"e{e}k{k}" for e, k in blocks) for blocks in a.blocks()]
    return f"mbv3:w{a.width_mult:.1f}:" + "/".join(stages)
