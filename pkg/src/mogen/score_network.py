"""Transformer score model over ops-matrix rows under a variance-exploding SDE.

The network is preconditioned: a raw transformer F sees ``c_in * x`` and the
denoised estimate is ``D = c_skip * x + c_out * F``, giving the score
``(D - x) / sigma^2``. Training minimises the denoising score matching loss
re-weighted so that every noise level contributes on a comparable scale.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numeric import engine as E
from .numeric import nn
from .numeric.checkpoint import load as load_tensors
from .numeric.checkpoint import save as save_tensors
from .numeric.engine import NonFiniteError, Tensor, no_grad
from .numeric.optim import AdamW, cosine_lr
from .search_space import SHAPES, Architecture, ContinuousArch, attention_mask


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SdeSchedule:
    """VE-SDE: zero drift, sigma(t) = sigma_min * (sigma_max / sigma_min) ** t."""

    sigma_min: float = 0.1
    sigma_max: float = 5.0
    T: float = 1.0
    N: int = 200

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def sigma(self, t):
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** np.asarray(t, dtype=np.float64)

    def g(self, t):
        return self.sigma(t) * math.sqrt(2.0 * math.log(self.sigma_max / self.sigma_min))

    @property
    def dt(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        """Reverse grid T, T - dt, ..., dt."""
        return self.T - self.dt * np.arange(self.N)


@dataclass(frozen=True)
class ScoreConfig:
    d_model: int = 64
    n_heads: int = 4
    n_blocks: int = 3
    time_dim: int = 64
    sigma_data: float = 0.5


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1500
    batch_size: int = 64
    lr: float = 2e-3
    lr_min: float = 1e-5
    warmup: int = 50
    t_min: float = 1e-3
    weight_decay: float = 5e-3
    seed: int = 0


def init_trunk(ps: nn.ParamStore, space: str, d: int, n_blocks: int, time_dim: int, prefix: str = "") -> None:
    rows, cols = SHAPES[space]
    ps.glorot(f"{prefix}emb_ops", cols, d)
    ps.glorot(f"{prefix}emb_pos", rows, d)
    ps.linear(f"{prefix}emb_time", time_dim, d)
    for b in range(n_blocks):
        nn.init_block(ps, f"{prefix}block{b}", d)
    ps.layer_norm(f"{prefix}ln_f", d)


def embed_tokens(P: dict[str, Tensor], x: Tensor, t, time_dim: int, T: float = 1.0, prefix: str = "") -> Tensor:
    """token_i = x_i @ Emb_ops + Emb_pos[i] + Emb_time(t); x has shape (B, R, C)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if np.any(t < 0) or np.any(t > T):
        raise ValueError(f"t must lie in [0, {T}]")
    if t.size == 1 and x.shape[0] != 1:
        t = np.full(x.shape[0], t[0])
    ops = E.matmul(x, P[f"{prefix}emb_ops"])
    time = nn.linear(P, f"{prefix}emb_time", Tensor(nn.sinusoidal(t, time_dim)))
    return E.add(E.add(ops, P[f"{prefix}emb_pos"]), E.reshape(time, (x.shape[0], 1, -1)))


def run_trunk(P, h: Tensor, mask: np.ndarray, n_blocks: int, n_heads: int, prefix: str = "") -> Tensor:
    for b in range(n_blocks):
        h = nn.block(P, f"{prefix}block{b}", h, mask, n_heads)
    return nn.layer_norm(P, f"{prefix}ln_f", h)


class ScoreNet:
    def __init__(self, space: str, config: ScoreConfig = ScoreConfig(), sde: SdeSchedule = SdeSchedule(),
                 seed: int = 0):
        self.space = space
        self.config = config
        self.sde = sde
        self.mask = attention_mask(space)
        ps = nn.ParamStore(np.random.default_rng([seed, 0x5C0E]))
        init_trunk(ps, space, config.d_model, config.n_blocks, config.time_dim)
        ps.linear("head", config.d_model, SHAPES[space][1])
        ps.arrays["head.w"] *= 0.1
        self.params = ps

    @property
    def shape(self) -> tuple[int, int]:
        return SHAPES[self.space]

    def leaves(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return self.params.leaves(requires_grad)

    def _coefs(self, t):
        sigma = self.sde.sigma(np.asarray(t, dtype=np.float64).reshape(-1))
        sd2 = self.config.sigma_data**2
        c_in = 1.0 / np.sqrt(sigma**2 + sd2)
        c_skip = sd2 / (sigma**2 + sd2)
        c_out = sigma * self.config.sigma_data / np.sqrt(sigma**2 + sd2)
        return sigma, c_in, c_skip, c_out

    def raw(self, P, x: Tensor, t) -> Tensor:
        """Unpreconditioned transformer output F, same shape as x."""
        cfg = self.config
        h = embed_tokens(P, x, t, cfg.time_dim, self.sde.T)
        h = run_trunk(P, h, self.mask, cfg.n_blocks, cfg.n_heads)
        return nn.linear(P, "head", h)

    def denoise(self, P, x: Tensor, t) -> Tensor:
        sigma, c_in, c_skip, c_out = self._coefs(t)
        col = lambda v: v.reshape(-1, 1, 1)  # noqa: E731
        f = self.raw(P, E.mul(x, col(c_in)), t)
        return E.add(E.mul(x, col(c_skip)), E.mul(f, col(c_out)))

    def score(self, x, t, P=None) -> Tensor:
        """s_theta(x, t) for a batch x of shape (B, R, C)."""
        P = P or self.leaves()
        x = x if isinstance(x, Tensor) else Tensor(x)
        sigma = self.sde.sigma(np.asarray(t, dtype=np.float64).reshape(-1)).reshape(-1, 1, 1)
        return E.mul(E.sub(self.denoise(P, x, t), x), 1.0 / sigma**2)

    def score_np(self, x: np.ndarray, t) -> np.ndarray:
        with no_grad():
            return self.score(x, t).data

    # ---------------------------------------------------------- persistence

    def save(self, path: str | Path, run: dict | None = None) -> None:
        path = Path(path)
        save_tensors(path, self.params.arrays)
        meta = {"space": self.space, "config": asdict(self.config), "sde": asdict(self.sde)}
        if run is not None:
            meta["run"] = run
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ScoreNet":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        net = cls(meta["space"], ScoreConfig(**meta["config"]), SdeSchedule(**meta["sde"]))
        arrays = load_tensors(path)
        if set(arrays) != set(net.params.arrays):
            raise ValueError("checkpoint tensors do not match the network layout")
        net.params.arrays = {k: np.array(arrays[k]) for k in net.params.arrays}
        return net


# ---------------------------------------------------------------- DSM


def one_hot_batch(archs: Sequence[Architecture]) -> np.ndarray:
    return np.stack([a.ops.astype(np.float64) for a in archs])


def perturb(a: Architecture, t: float, rng: np.random.Generator, sde: SdeSchedule = SdeSchedule()):
    """(x_t, true score) with x_t = one_hot(a) + sigma(t) * eps."""
    if not 0 < t <= sde.T:
        raise ValueError(f"t must lie in (0, {sde.T}]")
    x0 = a.ops.astype(np.float64)
    sigma = float(sde.sigma(t))
    xt = x0 + sigma * rng.standard_normal(x0.shape)
    return ContinuousArch(a.space, xt), -(xt - x0) / sigma**2


def dsm_loss_from_scores(scores: np.ndarray, true_scores: np.ndarray, sigmas: np.ndarray) -> float:
    """mean_b sigma_b^2 * ||s_b - true_b||^2."""
    d = np.asarray(scores) - np.asarray(true_scores)
    per = (d * d).reshape(len(d), -1).sum(axis=1)
    return float(np.mean(np.asarray(sigmas) ** 2 * per))


def sample_times(rng: np.random.Generator, n: int, t_min: float, T: float = 1.0) -> np.ndarray:
    """Log-uniform in [t_min, T]."""
    return np.exp(rng.uniform(math.log(t_min), math.log(T), size=n))


def _weighted_loss(net: ScoreNet, P, x0: np.ndarray, t: np.ndarray, eps: np.ndarray) -> Tensor:
    """DSM loss with per-sample weight (sigma^2 + sigma_data^2) / sigma_data^2."""
    sigma, _, _, c_out = net._coefs(t)
    xt = x0 + sigma.reshape(-1, 1, 1) * eps
    d = net.denoise(P, Tensor(xt), t)
    w = (1.0 / c_out**2).reshape(-1, 1, 1) / x0.shape[0]
    r = E.sub(d, Tensor(x0))
    return E.sum_(E.mul(E.mul(r, r), w))


def dsm_loss(net: ScoreNet, archs: Sequence[Architecture], t: np.ndarray, rng: np.random.Generator) -> float:
    """Unweighted DSM loss on a batch of architectures at times ``t``."""
    x0 = one_hot_batch(archs)
    sigma = net.sde.sigma(np.asarray(t, dtype=np.float64))
    eps = rng.standard_normal(x0.shape)
    xt = x0 + sigma.reshape(-1, 1, 1) * eps
    return dsm_loss_from_scores(net.score_np(xt, t), -eps / sigma.reshape(-1, 1, 1), sigma)


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)


def train_score(archs: Sequence[Architecture], space: str, config: TrainConfig = TrainConfig(),
                net_config: ScoreConfig = ScoreConfig(), sde: SdeSchedule = SdeSchedule(),
                log_every: int = 0) -> tuple[ScoreNet, TrainLog]:
    """Fit s_theta on the empirical distribution of ``archs``."""
    if not archs:
        raise ValueError("no training architectures")
    net = ScoreNet(space, net_config, sde, seed=config.seed)
    data = one_hot_batch(archs)
    rng = np.random.default_rng([config.seed, 0xD5])
    opt = AdamW(net.params, lr=config.lr, weight_decay=config.weight_decay)
    log = TrainLog()
    for step in range(config.steps):
        idx = rng.integers(len(data), size=config.batch_size)
        t = sample_times(rng, config.batch_size, config.t_min, sde.T)
        eps = rng.standard_normal((config.batch_size,) + data.shape[1:])
        P = net.leaves(requires_grad=True)
        try:
            loss = _weighted_loss(net, P, data[idx], t, eps)
        except NonFiniteError as e:
            raise TrainingDiverged(f"step {step}: {e}") from e
        if not math.isfinite(loss.item()):
            raise TrainingDiverged(f"step {step}: loss is {loss.item()}")
        grads = E.backward(loss)
        opt.step({k: grads[P[k]._id] for k in P},
                 cosine_lr(step, config.steps, config.lr, config.lr_min, config.warmup))
        log.losses.append(loss.item())
        if log_every and step % log_every == 0:
            print(f"score step {step} loss {np.mean(log.losses[-log_every:]):.4f}")
    return net, log
