"""Dataset encoder and the five task-aware performance predictors.

Every head is a small masked transformer over ops-matrix rows (same token
layout as the score network) whose pooled output, concatenated with the task
embedding, is mapped to a logit; the prediction is its sigmoid. The dataset
encoder is trained together with the denoised accuracy head and then frozen,
so all heads read the same task embedding.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import cost_model
from .meta_dataset import MetaDataset
from .numeric import engine as E
from .numeric import nn
from .numeric.checkpoint import load as load_tensors
from .numeric.checkpoint import save as save_tensors
from .numeric.engine import NonFiniteError, Tensor, no_grad
from .numeric.optim import AdamW, cosine_lr
from .score_network import SdeSchedule, TrainingDiverged, embed_tokens, init_trunk, run_trunk, sample_times
from .search_space import SHAPES, attention_mask
from .task_oracle import D_TASK, TaskDescriptor, task_matrix

HEADS = ("acc", "params", "macs", "latency", "acc_denoised")
NOISY_HEADS = HEADS[:4]
TARGET_FIELD = {"acc": "y", "acc_denoised": "y", "params": "p", "macs": "m", "latency": "l"}


@dataclass(frozen=True)
class PredictorConfig:
    d_model: int = 32
    n_heads: int = 4
    n_blocks: int = 2
    time_dim: int = 64
    d_embed: int = 64
    d_task: int = D_TASK
    sigma_data: float = 0.5


@dataclass(frozen=True)
class PredictorTrainConfig:
    steps: int = 1200
    batch_size: int = 64
    lr: float = 2e-3
    lr_min: float = 1e-5
    warmup: int = 50
    weight_decay: float = 5e-3
    t_min: float = 1e-3
    holdout: float = 0.1
    seed: int = 0


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    x, y = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two equal-length 1-d sequences")
    if x.size < 2:
        raise ValueError("spearman needs at least two points")
    rx, ry = rankdata(x), rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise ValueError("spearman is undefined for constant input")
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return float((rx @ ry) / math.sqrt((rx @ rx) * (ry @ ry)))


def satisfaction_target(value, population: Sequence[float], metric: str):
    """Accuracy passes through; cost metrics become 1 - rank position (smaller is better)."""
    if metric in ("acc", "acc_denoised", "y"):
        return value
    return 1.0 - cost_model.normalize_metric(value, population)


# ----------------------------------------------------------------- encoder


def init_encoder(ps: nn.ParamStore, cfg: PredictorConfig) -> None:
    ps.linear("enc.l1", cfg.d_task, cfg.d_embed)
    ps.linear("enc.l2", cfg.d_embed, cfg.d_embed)


def pooled_prototypes(tasks: Sequence[TaskDescriptor]) -> np.ndarray:
    return np.stack([task_matrix(t).mean(axis=0) for t in tasks])


def _encode(P, pooled: Tensor) -> Tensor:
    return nn.linear(P, "enc.l2", E.gelu(nn.linear(P, "enc.l1", pooled)))


# ------------------------------------------------------------------ heads


class Head:
    """A predictor network: logits(x, t, D~) for one or more outputs; predictions are sigmoids."""

    def __init__(self, space: str, outputs: Sequence[str], cfg: PredictorConfig = PredictorConfig(),
                 sde: SdeSchedule = SdeSchedule(), seed: int = 0):
        unknown = set(outputs) - set(HEADS)
        if unknown:
            raise ValueError(f"unknown heads {sorted(unknown)}")
        self.space, self.outputs, self.cfg, self.sde = space, tuple(outputs), cfg, sde
        self.noisy = "acc_denoised" not in self.outputs
        if not self.noisy and len(self.outputs) > 1:
            raise ValueError("the denoised head cannot share a network with noisy heads")
        self.mask = attention_mask(space)
        ps = nn.ParamStore(np.random.default_rng([seed, HEADS.index(self.outputs[0]), 0xF1]))
        init_trunk(ps, space, cfg.d_model, cfg.n_blocks, cfg.time_dim)
        ps.linear("task_in", cfg.d_embed, cfg.d_model)
        ps.linear("out1", cfg.d_model + cfg.d_embed, cfg.d_model)
        ps.linear("out2", cfg.d_model, len(self.outputs))
        self.params = ps

    @property
    def key(self) -> str:
        return "+".join(self.outputs)

    def _c_in(self, t: np.ndarray) -> np.ndarray:
        sigma = self.sde.sigma(t) if self.noisy else np.zeros_like(t)
        return 1.0 / np.sqrt(sigma**2 + self.cfg.sigma_data**2)

    def logits(self, P, x: Tensor, t, emb: Tensor) -> Tensor:
        """x: (B, R, C); t: scalar or (B,); emb: (B, d_embed). Returns (B, n_outputs)."""
        B = x.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (B,)).copy()
        if not self.noisy:
            t = np.zeros(B)
        xs = E.mul(x, self._c_in(t).reshape(-1, 1, 1))
        h = embed_tokens(P, xs, t, self.cfg.time_dim, self.sde.T)
        h = E.add(h, E.reshape(nn.linear(P, "task_in", emb), (B, 1, -1)))
        h = run_trunk(P, h, self.mask, self.cfg.n_blocks, self.cfg.n_heads)
        pooled = E.mean(h, axis=1)
        z = E.gelu(nn.linear(P, "out1", E.concat([pooled, emb], axis=-1)))
        return nn.linear(P, "out2", z)


@dataclass
class TrainReport:
    losses: dict[str, list[float]] = field(default_factory=dict)
    spearman: dict[str, float] = field(default_factory=dict)


class PredictorSet:
    """Five heads. With ``shared_trunk`` the four noisy heads are outputs of one network."""

    def __init__(self, space: str, cfg: PredictorConfig = PredictorConfig(), sde: SdeSchedule = SdeSchedule(),
                 seed: int = 0, norm_stats: dict | None = None, shared_trunk: bool = True):
        self.space, self.cfg, self.sde, self.seed = space, cfg, sde, seed
        self.shared_trunk = shared_trunk
        groups = [NOISY_HEADS] if shared_trunk else [(h,) for h in NOISY_HEADS]
        groups.append(("acc_denoised",))
        self.nets = [Head(space, g, cfg, sde, seed) for g in groups]
        self.net_of = {h: net for net in self.nets for h in net.outputs}
        self.encoder = nn.ParamStore(np.random.default_rng([seed, 0xE1C]))
        init_encoder(self.encoder, cfg)
        self.norm_stats = norm_stats or {}

    def encode_dataset(self, task: TaskDescriptor | Sequence[TaskDescriptor]) -> np.ndarray:
        """Task embedding D~ (d_embed,) or (n, d_embed) for a list of tasks."""
        single = isinstance(task, TaskDescriptor)
        tasks = [task] if single else list(task)
        with no_grad():
            out = _encode(self.encoder.leaves(False), Tensor(pooled_prototypes(tasks))).data
        return out[0] if single else out

    def _net(self, which: str) -> Head:
        if which not in self.net_of:
            raise ValueError(f"unknown head {which!r}; expected one of {HEADS}")
        return self.net_of[which]

    def _emb(self, emb, B: int) -> Tensor:
        emb = np.asarray(emb, dtype=np.float64)
        return Tensor(np.broadcast_to(emb.reshape(-1, self.cfg.d_embed), (B, self.cfg.d_embed)))

    def logits(self, net: Head, x, t, emb) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        return net.logits(net.params.leaves(False), x, t, self._emb(emb, x.shape[0]))

    def predict(self, which: str, x, t, emb) -> np.ndarray:
        """Predictions in (0, 1), shape (B,)."""
        net = self._net(which)
        with no_grad():
            z = self.logits(net, x, t, emb).data[:, net.outputs.index(which)]
        return 1.0 / (1.0 + np.exp(-z))

    def grad_log_sum(self, weights: dict[str, float], x: np.ndarray, t, emb, floor: float = 1e-12) -> np.ndarray:
        """d/dx of sum_h w_h * log f_h(x), per chain, with each f floored at ``floor``.

        Heads living on one network share a single backward pass.
        """
        total = None
        for net in self.nets:
            w = np.array([weights.get(h, 0.0) for h in net.outputs], dtype=np.float64)
            if not w.any():
                continue
            xt = Tensor(x, requires_grad=True)
            obj = E.sum_(E.mul(E.log_sigmoid(self.logits(net, xt, t, emb), floor), w))
            g = E.grad(obj, [xt])[0]
            total = g if total is None else total + g
        return np.zeros_like(np.asarray(x, dtype=np.float64)) if total is None else total

    def grad_log(self, which: str, x: np.ndarray, t, emb, floor: float = 1e-12) -> np.ndarray:
        """d/dx of log f_which(x) per chain."""
        self._net(which)
        return self.grad_log_sum({which: 1.0}, x, t, emb, floor)

    # ------------------------------------------------------------ targets

    def targets(self, which: str, values: np.ndarray) -> np.ndarray:
        f = TARGET_FIELD[which]
        if f == "y":
            return np.asarray(values, dtype=np.float64)
        return np.asarray(satisfaction_target(np.asarray(values), self.norm_stats[f], which), dtype=np.float64)

    # -------------------------------------------------------- persistence

    def save(self, path: str | Path, run: dict | None = None) -> None:
        path = Path(path)
        tensors = {f"encoder/{k}": v for k, v in self.encoder.arrays.items()}
        for net in self.nets:
            tensors.update({f"{net.key}/{k}": v for k, v in net.params.arrays.items()})
        save_tensors(path, tensors)
        meta = {"space": self.space, "config": asdict(self.cfg), "sde": asdict(self.sde), "seed": self.seed,
                "norm_stats": self.norm_stats, "shared_trunk": self.shared_trunk}
        if run is not None:
            meta["run"] = run
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))

    @classmethod
    def load(cls, path: str | Path) -> "PredictorSet":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        ps = cls(meta["space"], PredictorConfig(**meta["config"]), SdeSchedule(**meta["sde"]), meta["seed"],
                 meta["norm_stats"], meta["shared_trunk"])
        tensors = load_tensors(path)
        stores = {"encoder": ps.encoder, **{net.key: net.params for net in ps.nets}}
        for prefix, store in stores.items():
            for k in store.arrays:
                key = f"{prefix}/{k}"
                if key not in tensors:
                    raise ValueError(f"checkpoint is missing {key}")
                store.arrays[k] = np.array(tensors[key])
        return ps


# ---------------------------------------------------------------- training


def _split(n: int, holdout: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 0x5917]).permutation(n)
    n_val = int(round(holdout * n)) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def _fit_net(pset: PredictorSet, net: Head, x0: np.ndarray, pooled: np.ndarray, emb: np.ndarray | None,
             target: np.ndarray, cfg: PredictorTrainConfig, log_every: int = 0) -> list[float]:
    """Squared error on sigmoid outputs; ``target`` has one column per network output."""
    joint = not net.noisy
    store = nn.ParamStore()
    store.arrays = dict(net.params.arrays)
    if joint:
        store.arrays.update(pset.encoder.arrays)
    opt = AdamW(store, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, HEADS.index(net.outputs[0]), 0x7A1])
    losses = []
    for step in range(cfg.steps):
        idx = rng.integers(len(x0), size=cfg.batch_size)
        x = x0[idx]
        if net.noisy:
            t = sample_times(rng, cfg.batch_size, cfg.t_min, pset.sde.T)
            x = x + pset.sde.sigma(t).reshape(-1, 1, 1) * rng.standard_normal(x.shape)
        else:
            t = np.zeros(cfg.batch_size)
        P = store.leaves(True)
        try:
            e = _encode(P, Tensor(pooled[idx])) if joint else Tensor(emb[idx])
            pred = E.sigmoid(net.logits(P, Tensor(x), t, e))
            r = E.sub(pred, Tensor(target[idx]))
            loss = E.mean(E.mul(r, r))
        except NonFiniteError as err:
            raise TrainingDiverged(f"{net.key} step {step}: {err}") from err
        if not math.isfinite(loss.item()):
            raise TrainingDiverged(f"{net.key} step {step}: loss is {loss.item()}")
        grads = E.backward(loss)
        opt.step({k: grads[P[k]._id] for k in P}, cosine_lr(step, cfg.steps, cfg.lr, cfg.lr_min, cfg.warmup))
        losses.append(loss.item())
        if log_every and step % log_every == 0:
            print(f"{net.key} step {step} loss {np.mean(losses[-log_every:]):.5f}", flush=True)
    for k in net.params.arrays:
        net.params.arrays[k] = store.arrays[k]
    if joint:
        for k in pset.encoder.arrays:
            pset.encoder.arrays[k] = store.arrays[k]
    return losses


def evaluate_head(pset: PredictorSet, which: str, ds: MetaDataset, idx: Sequence[int] | None = None,
                  t: float = 0.0, seed: int = 0) -> float:
    """Spearman between the head's prediction and its target on records ``idx``."""
    idx = np.arange(len(ds)) if idx is None else np.asarray(idx)
    recs = [ds.records[i] for i in idx]
    x = np.stack([r.arch.ops.astype(np.float64) for r in recs])
    if which != "acc_denoised" and t > 0:
        x = x + pset.sde.sigma(t) * np.random.default_rng([seed, 0xE7]).standard_normal(x.shape)
    emb = pset.encode_dataset([ds.task_of(r) for r in recs])
    pred = np.concatenate([pset.predict(which, x[i:i + 256], t, emb[i:i + 256]) for i in range(0, len(x), 256)])
    target = pset.targets(which, np.array([r.objective(TARGET_FIELD[which]) for r in recs], dtype=np.float64))
    return spearman(pred, target)


def train_predictors(ds: MetaDataset, sde: SdeSchedule = SdeSchedule(),
                     config: PredictorTrainConfig = PredictorTrainConfig(),
                     net_config: PredictorConfig = PredictorConfig(), shared_trunk: bool = True,
                     eval_t: float = 0.1, log_every: int = 0) -> tuple[PredictorSet, TrainReport]:
    """Fit every network; reports held-out Spearman per head (noisy heads at ``eval_t``)."""
    if not ds.records:
        raise ValueError("meta-dataset is empty")
    pset = PredictorSet(ds.space, net_config, sde, config.seed, ds.norm_stats(), shared_trunk)
    train_idx, val_idx = _split(len(ds), config.holdout, config.seed)
    recs = [ds.records[i] for i in train_idx]
    x0 = np.stack([r.arch.ops.astype(np.float64) for r in recs])
    tasks = [ds.task_of(r) for r in recs]
    pooled = pooled_prototypes(tasks)
    report = TrainReport()
    # the encoder is learned with the denoised accuracy head, so that network goes first
    emb = None
    for net in sorted(pset.nets, key=lambda n: n.noisy):
        if net.noisy and emb is None:
            emb = pset.encode_dataset(tasks)
        cols = [pset.targets(h, np.array([r.objective(TARGET_FIELD[h]) for r in recs], dtype=np.float64))
                for h in net.outputs]
        report.losses[net.key] = _fit_net(pset, net, x0, pooled, emb, np.stack(cols, axis=1), config, log_every)
    if len(val_idx) >= 2:
        for h in HEADS:
            report.spearman[h] = evaluate_head(pset, h, ds, val_idx, 0.0 if h == "acc_denoised" else eval_t,
                                               config.seed)
    return pset, report
