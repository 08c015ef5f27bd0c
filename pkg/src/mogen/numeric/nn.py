"""Parameter storage, initialisation and the transformer building blocks."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import engine as E
from .engine import Tensor


class ParamStore:
    """Ordered name -> float64 array mapping with Glorot-style initialisers."""

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng
        self.arrays: dict[str, np.ndarray] = {}

    def glorot(self, name: str, fan_in: int, fan_out: int, shape=None) -> None:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        shape = shape or (fan_in, fan_out)
        self.arrays[name] = self.rng.uniform(-limit, limit, size=shape)

    def zeros(self, name: str, shape) -> None:
        self.arrays[name] = np.zeros(shape)

    def ones(self, name: str, shape) -> None:
        self.arrays[name] = np.ones(shape)

    def linear(self, name: str, d_in: int, d_out: int, bias: bool = True) -> None:
        self.glorot(f"{name}.w", d_in, d_out)
        if bias:
            self.zeros(f"{name}.b", (d_out,))

    def layer_norm(self, name: str, d: int) -> None:
        self.ones(f"{name}.g", (d,))
        self.zeros(f"{name}.b", (d,))

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in self.arrays.items()}

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self) -> int:
        return len(self.arrays)

    def n_values(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ParamStore":
        out = ParamStore(self.rng)
        out.arrays = {k: v.copy() for k, v in self.arrays.items()}
        return out


def linear(P: dict[str, Tensor], name: str, x: Tensor) -> Tensor:
    y = E.matmul(x, P[f"{name}.w"])
    b = P.get(f"{name}.b")
    return y if b is None else E.add(y, b)


def layer_norm(P: dict[str, Tensor], name: str, x: Tensor) -> Tensor:
    return E.add(E.mul(E.layer_norm(x), P[f"{name}.g"]), P[f"{name}.b"])


def sinusoidal(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal features of a batch of scalars, shape (B, dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = 1000.0 * t * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def init_block(ps: ParamStore, name: str, d: int, mlp_ratio: int = 4) -> None:
    ps.layer_norm(f"{name}.ln1", d)
    ps.linear(f"{name}.qkv", d, 3 * d)
    ps.linear(f"{name}.proj", d, d)
    ps.layer_norm(f"{name}.ln2", d)
    ps.linear(f"{name}.fc1", d, mlp_ratio * d)
    ps.linear(f"{name}.fc2", mlp_ratio * d, d)


def attention(P, name: str, h: Tensor, mask: np.ndarray, n_heads: int) -> Tensor:
    """Multi-head self-attention; ``mask[i, j]`` True lets token i see token j."""
    B, R, d = h.shape
    dh = d // n_heads
    qkv = linear(P, f"{name}.qkv", h)
    qkv = E.transpose(E.reshape(qkv, (B, R, 3, n_heads, dh)), (2, 0, 3, 1, 4))
    q, k, v = (E.reshape(_select(qkv, i), (B, n_heads, R, dh)) for i in range(3))
    scores = E.mul(E.matmul(q, E.swap_last(k)), 1.0 / math.sqrt(dh))
    att = E.masked_softmax(scores, mask)
    out = E.matmul(att, v)
    out = E.reshape(E.transpose(out, (0, 2, 1, 3)), (B, R, d))
    return linear(P, f"{name}.proj", out)


def _select(x: Tensor, i: int) -> Tensor:
    """x[i] along the leading axis, as a differentiable op."""
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[i] = g
        return (out,)

    return Tensor._result("select", x.data[i], (x,), vjp)


def block(P, name: str, h: Tensor, mask: np.ndarray, n_heads: int) -> Tensor:
    h = E.add(h, attention(P, name, layer_norm(P, f"{name}.ln1", h), mask, n_heads))
    m = linear(P, f"{name}.fc2", E.gelu(linear(P, f"{name}.fc1", layer_norm(P, f"{name}.ln2", h))))
    return E.add(h, m)
