"""Synthetic classification tasks and a hidden ground-truth accuracy function.

A task is a set of 20 unit-norm class prototypes drawn around a random centre;
the closer the prototypes sit to each other, the harder the task. Accuracy of
an architecture on a task is a sigmoid of a capacity term with diminishing
returns plus a task-dependent preference for particular operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import itertools

import numpy as np

from . import cost_model
from .search_space import (MBV3, MBV3_EXPANDS, MBV3_KERNELS, NB201, NB201_EDGES, NB201_OPS,
                           Architecture, nb201)

N_CLASSES = 20
D_TASK = 32
STYLE_DIMS = 4
TOP_SET_SIZE = 250
PANEL_TASKS = 3


@dataclass(frozen=True, eq=False)
class TaskDescriptor:
    task_id: int
    class_prototypes: np.ndarray
    difficulty: float

    def __post_init__(self):
        p = np.array(self.class_prototypes, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != N_CLASSES:
            raise ValueError(f"expected {N_CLASSES} prototypes, got shape {p.shape}")
        p.flags.writeable = False
        object.__setattr__(self, "class_prototypes", p)

    def __eq__(self, other):
        return (isinstance(other, TaskDescriptor) and self.task_id == other.task_id
                and self.difficulty == other.difficulty
                and np.array_equal(self.class_prototypes, other.class_prototypes))

    def __hash__(self):
        return hash((self.task_id, self.difficulty, self.class_prototypes.tobytes()))

    def to_json(self) -> dict:
        return {"task_id": self.task_id, "difficulty": self.difficulty,
                "prototypes": self.class_prototypes.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "TaskDescriptor":
        return cls(int(obj["task_id"]), np.array(obj["prototypes"]), float(obj["difficulty"]))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_task(rng: np.random.Generator, task_id: int = 0, d_task: int = D_TASK) -> TaskDescriptor:
    """20 prototypes at cosine ``difficulty`` from a random centre."""
    difficulty = float(rng.uniform(0.2, 0.9))
    centre = _unit_rows(rng.standard_normal(d_task))
    spread = _unit_rows(rng.standard_normal((N_CLASSES, d_task)))
    protos = _unit_rows(difficulty * centre + np.sqrt(1.0 - difficulty**2) * spread)
    return TaskDescriptor(task_id, protos, difficulty)


def task_matrix(task: TaskDescriptor) -> np.ndarray:
    """Prototype rows in canonical order (lexicographic, first coordinate first)."""
    p = task.class_prototypes
    order = np.lexsort(p.T[::-1])
    return p[order]


# --------------------------------------------------------------- features


def _capacity(params: np.ndarray, macs: np.ndarray, space: str) -> np.ndarray:
    """Saturating in both parameter count and MACs."""
    if space == NB201:
        return 1.4 * (1.0 - np.exp(-params / 4e5)) + 0.6 * (1.0 - np.exp(-macs / 6e7))
    return 1.4 * (1.0 - np.exp(-params / 3e6)) + 0.6 * (1.0 - np.exp(-macs / 2.5e8))


_NB201_FEATURES: tuple[np.ndarray, np.ndarray] | None = None


def nb201_feature_table() -> tuple[np.ndarray, np.ndarray]:
    """Operation mix (15625 x 5) and capacity (15625,) for every cell."""
    global _NB201_FEATURES
    if _NB201_FEATURES is None:
        combos = np.array(list(itertools.product(range(len(NB201_OPS)), repeat=6)))
        mix = np.stack([(combos == k).sum(axis=1) for k in range(len(NB201_OPS))], axis=1) / 6.0
        live = combos != 0
        reach = {0: np.ones(len(combos), dtype=bool)}
        for n in (1, 2, 3):
            reach[n] = np.zeros(len(combos), dtype=bool)
            for e, (src, dst) in enumerate(NB201_EDGES):
                if dst == n:
                    reach[n] |= reach[src] & live[:, e]
        params, macs = cost_model.nb201_cost_table()
        capacity = _capacity(params.astype(float), macs.astype(float), NB201) - 2.0 * (~reach[3])
        _NB201_FEATURES = (mix, capacity)
    return _NB201_FEATURES


def arch_features(a: Architecture) -> tuple[np.ndarray, float]:
    """(operation mix vector, capacity score) for the oracle."""
    if a.space == NB201:
        mix, capacity = nb201_feature_table()
        i = cost_model.nb201_index(a)
        return mix[i], float(capacity[i])
    params, macs = cost_model.count_params(a), cost_model.count_macs(a)
    blocks = [b for stage in a.blocks() for b in stage]
    mix = np.zeros(len(MBV3_EXPANDS) * len(MBV3_KERNELS) + 2)
    for e, k in blocks:
        mix[3 * MBV3_EXPANDS.index(e) + MBV3_KERNELS.index(k)] += 1.0 / len(blocks)
    mix[-2] = len(blocks) / 20.0
    mix[-1] = 1.0 if a.width_mult == 1.2 else 0.0
    return mix, float(_capacity(np.float64(params), np.float64(macs), MBV3))


# ----------------------------------------------------------------- oracle


@dataclass(frozen=True, eq=False)
class OracleParams:
    """Hidden weights, regenerated deterministically from ``seed``."""

    seed: int = 0
    d_task: int = D_TASK
    style_proj: np.ndarray = field(init=False, repr=False)
    pref: dict = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 0x0AC1E])
        proj = rng.standard_normal((self.d_task, STYLE_DIMS)) * 3.0
        pref = {
            NB201: rng.uniform(-1.0, 1.0, size=(len(NB201_OPS), STYLE_DIMS)) * 0.35,
            MBV3: rng.uniform(-1.0, 1.0, size=(11, STYLE_DIMS)) * 0.35,
        }
        object.__setattr__(self, "style_proj", proj)
        object.__setattr__(self, "pref", pref)

    def style(self, task: TaskDescriptor) -> np.ndarray:
        m = task.class_prototypes.mean(axis=0)
        return np.tanh(m @ self.style_proj)


def oracle_logit(a: Architecture, task: TaskDescriptor, oracle: OracleParams) -> float:
    mix, capacity = arch_features(a)
    return float(_logit(mix, capacity, task, oracle, a.space))


def _logit(mix, capacity, task: TaskDescriptor, oracle: OracleParams, space: str):
    preference = mix @ oracle.pref[space] @ oracle.style(task)
    slope = 1.6 - 1.0 * task.difficulty
    return slope * (1.5 * capacity + preference - 0.2 - 2.0 * task.difficulty)


def oracle_accuracy(a: Architecture, task: TaskDescriptor, oracle: OracleParams | None = None) -> float:
    """Deterministic accuracy in (0, 1) of ``a`` trained on ``task``."""
    z = oracle_logit(a, task, oracle or OracleParams())
    return float(1.0 / (1.0 + np.exp(-z)))


def panel_tasks(oracle: OracleParams, n: int = PANEL_TASKS) -> list[TaskDescriptor]:
    return [sample_task(np.random.default_rng([oracle.seed, 0x9A4E1, i]), task_id=-1 - i, d_task=oracle.d_task)
            for i in range(n)]


_TOP_CACHE: dict[tuple[int, int], list[Architecture]] = {}


def nb201_top_set(oracle: OracleParams, size: int = TOP_SET_SIZE) -> list[Architecture]:
    """Cells ranked by mean oracle accuracy over a fixed task panel."""
    key = (oracle.seed, size)
    if key not in _TOP_CACHE:
        mix, capacity = nb201_feature_table()
        score = np.mean([1.0 / (1.0 + np.exp(-_logit(mix, capacity, t, oracle, NB201)))
                         for t in panel_tasks(oracle)], axis=0)
        order = np.argsort(-score, kind="stable")[:size]
        combos = list(itertools.product(range(len(NB201_OPS)), repeat=6))
        _TOP_CACHE[key] = [nb201(list(combos[i])) for i in order]
    return list(_TOP_CACHE[key])
