"""Parameter containers and Transformer building blocks."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor


class Module:
    """Holds named parameters and child modules in insertion order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, value) -> Tensor:
        t = ad.tensor(np.array(value, dtype=ad.default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for n, t in self._params.items():
            yield prefix + n, t
        for n, c in self._children.items():
            yield from c.named_parameters(f"{prefix}{n}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing, extra = set(own) - set(state), set(state) - set(own)
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for n, t in own.items():
            if state[n].shape != t.shape:
                raise ValueError(f"shape mismatch for {n}: {state[n].shape} vs {t.shape}")
            t.data[...] = state[n]

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def set_trainable(self, flag: bool) -> None:
        for t in self.parameters():
            t.requires_grad = flag


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, std: float | None = None, bias: bool = True):
        super().__init__()
        std = 1.0 / math.sqrt(d_in) if std is None else std
        self.w = self.param("w", rng.standard_normal((d_in, d_out)) * std)
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.w, self.b)

    @property
    def pair(self):
        return self.w, self.b


class LayerNorm(Module):
    def __init__(self, d: int):
        super().__init__()
        self.gain = self.param("gain", np.ones(d))
        self.bias = self.param("bias", np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layernorm(x, self.gain, self.bias)


class MLP(Module):
    """Linear layers with GELU between them."""

    def __init__(self, rng, dims: list[int], last_std: float | None = None):
        super().__init__()
        self.layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            std = last_std if (i == len(dims) - 2 and last_std is not None) else None
            self.layers.append(self.child(f"l{i}", Linear(rng, a, b, std)))

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.gelu(x)
        return x


class MultiHeadAttention(Module):
    def __init__(self, rng, d: int, heads: int, out_std: float | None = None):
        super().__init__()
        if d % heads:
            raise ValueError("model width must be divisible by the head count")
        self.heads = heads
        self.q = self.child("q", Linear(rng, d, d))
        self.k = self.child("k", Linear(rng, d, d))
        self.v = self.child("v", Linear(rng, d, d))
        self.o = self.child("o", Linear(rng, d, d, out_std))

    def __call__(self, queries: Tensor, context: Tensor) -> Tensor:
        return ad.softmax_attention(queries, context, context, self.heads, self.q.pair, self.k.pair, self.v.pair,
                                    self.o.pair)


class FeedForward(Module):
    def __init__(self, rng, d: int, hidden: int, out_std: float | None = None):
        super().__init__()
        self.inner = self.child("inner", Linear(rng, d, hidden))
        self.outer = self.child("outer", Linear(rng, hidden, d, out_std))

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(ad.gelu(self.inner(x)))


class PostNormBlock(Module):
    """Attention, residual, layernorm, feed-forward, residual, layernorm.

    With ``context=None`` the block attends to its own input (self-attention).
    """

    def __init__(self, rng, d: int, heads: int, ffn_dim: int):
        super().__init__()
        self.att = self.child("att", MultiHeadAttention(rng, d, heads))
        self.norm1 = self.child("norm1", LayerNorm(d))
        self.ffn = self.child("ffn", FeedForward(rng, d, ffn_dim))
        self.norm2 = self.child("norm2", LayerNorm(d))

    def __call__(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        ctx = x if context is None else context
        x = self.norm1(ad.add(x, self.att(x, ctx)))
        return self.norm2(ad.add(x, self.ffn(x)))


class PreNormBlock(Module):
    """x + Att(LN(x), C), then + FFN(LN(.)); identity when both output projections are zero."""

    def __init__(self, rng, d: int, heads: int, ffn_dim: int, out_std: float):
        super().__init__()
        self.norm1 = self.child("norm1", LayerNorm(d))
        self.att = self.child("att", MultiHeadAttention(rng, d, heads, out_std))
        self.norm2 = self.child("norm2", LayerNorm(d))
        self.ffn = self.child("ffn", FeedForward(rng, d, ffn_dim, out_std))

    def __call__(self, x: Tensor, context: Tensor) -> Tensor:
        x = ad.add(x, self.att(self.norm1(x), context))
        return ad.add(x, self.ffn(self.norm2(x)))


def sinusoidal_grid_encoding(rows: int, cols: int, d: int) -> np.ndarray:
    """2D sinusoidal encoding: half the channels encode the row, half the column."""
    if d % 4:
        raise ValueError("encoding width must be divisible by 4")
    quarter = d // 4
    freq = 1.0 / (10000.0 ** (np.arange(quarter) / quarter))
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    r, c = r.reshape(-1, 1) * freq, c.reshape(-1, 1) * freq
    return np.concatenate([np.sin(r), np.cos(r), np.sin(c), np.cos(c)], axis=1)
