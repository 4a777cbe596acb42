"""Static drape network: hair encoder, body encoder, hair-body cross-attention, head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..body import POSE_DIM, SHAPE_DIM
from .layers import MLP, Linear, Module, PostNormBlock, sinusoidal_grid_encoding


@dataclass(frozen=True)
class StaticNetConfig:
    d_z: int = 512
    d_m: int = 512
    grid: tuple[int, int] = (8, 8)  # (rows, cols) of the deformation map
    n_enc: int = 2
    n_hb: int = 2
    heads: int = 4
    ffn_dim: int | None = None  # defaults to 2 * d_m
    n_vertices: int = 100
    clip: float = 0.01  # bound on initial per-vertex deformations (m)

    def __post_init__(self):
        if self.d_m % self.heads:
            raise ValueError("d_m must be divisible by heads")
        if self.n_vertices < 3:
            raise ValueError("strands need at least 3 vertices")

    @property
    def n_cells(self) -> int:
        return self.grid[0] * self.grid[1]

    @property
    def ffn(self) -> int:
        return self.ffn_dim or 2 * self.d_m

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StaticNetConfig":
        d = dict(d)
        d["grid"] = tuple(d["grid"])
        return cls(**d)


def desk_config(**kw) -> StaticNetConfig:
    """Small network used for CPU experiments."""
    base = dict(d_m=64, grid=(4, 4), heads=4)
    base.update(kw)
    return StaticNetConfig(**base)


class PredictionHead(MLP):
    """L x d_m tokens -> L x (N*3) raw deformations.

    The last layer starts small so that initial deformations stay below
    ``cfg.clip`` (see ``initial_deformation_bound``).
    """

    def __init__(self, rng, cfg: StaticNetConfig):
        out = 3 * cfg.n_vertices
        hidden = cfg.ffn
        super().__init__(rng, [cfg.d_m, hidden, out], last_std=0.0)
        w = rng.standard_normal((hidden, out))
        w = np.clip(w, -2.0, 2.0)  # truncated normal
        # rows of the hidden activation are GELU of unit-scale features; this
        # scale keeps typical outputs a few tenths of the clip
        self.layers[-1].w.data[...] = w * (0.1 * cfg.clip / np.sqrt(hidden))


def clone_head(src: PredictionHead, rng, cfg: StaticNetConfig) -> PredictionHead:
    head = PredictionHead(rng, cfg)
    head.load_state(src.state())
    return head


class StaticNet(Module):
    def __init__(self, cfg: StaticNetConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = cfg.d_m
        L = cfg.n_cells
        self.queries = self.param("queries", rng.standard_normal((L, d)) * 0.02)
        self.pos = sinusoidal_grid_encoding(cfg.grid[0], cfg.grid[1], d).astype(ad.default_dtype())
        self.latent_proj = self.child("latent_proj", Linear(rng, cfg.d_z, d))
        self.encoder = [self.child(f"enc{i}", PostNormBlock(rng, d, cfg.heads, cfg.ffn)) for i in range(cfg.n_enc)]
        self.body = self.child("body", MLP(rng, [SHAPE_DIM + POSE_DIM, d, d]))
        self.cross = [self.child(f"hb{i}", PostNormBlock(rng, d, cfg.heads, cfg.ffn)) for i in range(cfg.n_hb)]
        self.head = self.child("head", PredictionHead(rng, cfg))

    # components ---------------------------------------------------------------

    def hair_encoder(self, z) -> Tensor:
        z = ad.as_tensor(np.asarray(z).reshape(1, -1)) if not isinstance(z, Tensor) else ad.reshape(z, (1, -1))
        tokens = ad.concat([ad.add_const(self.queries, self.pos), self.latent_proj(z)], axis=0)
        for block in self.encoder:
            tokens = block(tokens)
        return ad.rows(tokens, 0, self.cfg.n_cells)

    def body_encoder(self, shape, pose) -> Tensor:
        x = ad.as_tensor(np.concatenate([np.asarray(shape, float), np.asarray(pose, float)]).reshape(1, -1))
        return self.body(x)

    def fuse(self, H: Tensor, C: Tensor) -> Tensor:
        for block in self.cross:
            H = block(H, C)
        return H

    def deformation(self, H: Tensor, head: PredictionHead | None = None) -> Tensor:
        """Head output reshaped to (L, N, 3)."""
        out = (head or self.head)(H)
        return ad.reshape(out, (self.cfg.n_cells, self.cfg.n_vertices, 3))

    def __call__(self, z, shape, pose) -> tuple[Tensor, Tensor]:
        """Returns (D_static as (L, N, 3), H_static as (L, d_m))."""
        H = self.fuse(self.hair_encoder(z), self.body_encoder(shape, pose))
        return self.deformation(H), H


def as_grid(D: np.ndarray, cfg: StaticNetConfig) -> np.ndarray:
    """(L, N, 3) -> (rows, cols, N, 3)."""
    return np.asarray(D).reshape(cfg.grid[0], cfg.grid[1], cfg.n_vertices, 3)
