"""Dynamic network: recurrent motion encoder, static-dynamic cross-attention, head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..body import SHAPE_DIM
from .layers import MLP, Module, PreNormBlock
from .motion import DESCRIPTOR_DIM
from .static import PredictionHead, StaticNetConfig, clone_head


@dataclass(frozen=True)
class DynamicNetConfig:
    n_sd: int = 2
    window: int = 10
    dt: float = 1.0 / 60.0
    residual_std: float = 1e-3  # init scale of the residual output projections

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicNetConfig":
        return cls(**d)


class GRU(Module):
    def __init__(self, rng, d_in: int, d_h: int):
        super().__init__()
        s_in, s_h = 1.0 / np.sqrt(d_in), 1.0 / np.sqrt(d_h)
        for gate in ("z", "r", "n"):
            self.param(f"W_{gate}", rng.standard_normal((d_in, d_h)) * s_in)
            self.param(f"U_{gate}", rng.standard_normal((d_h, d_h)) * s_h)
            self.param(f"b_{gate}", np.zeros(d_h))
        self.d_h = d_h

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return ad.gru_cell(x, h, self._params)


class MotionEncoder(Module):
    """Descriptors and shape through an MLP, then a GRU over the window."""

    def __init__(self, rng, d_m: int):
        super().__init__()
        self.fc = self.child("fc", MLP(rng, [DESCRIPTOR_DIM + SHAPE_DIM, d_m, d_m]))
        self.gru = self.child("gru", GRU(rng, d_m, d_m))
        self.d_m = d_m

    def __call__(self, descriptors: np.ndarray, shape, hidden: Tensor | None) -> Tensor:
        T = descriptors.shape[0]
        x = np.concatenate([descriptors, np.broadcast_to(np.asarray(shape, float), (T, SHAPE_DIM))], axis=1)
        feats = self.fc(ad.as_tensor(x))
        h = hidden if hidden is not None else ad.tensor(np.zeros((1, self.d_m)))
        for t in range(T):
            h = self.gru(ad.rows(feats, t, t + 1), h)
        return h


class DynamicNet(Module):
    """Carries the GRU hidden state between calls of ``step``."""

    def __init__(self, static_cfg: StaticNetConfig, cfg: DynamicNetConfig, static_head: PredictionHead, seed: int = 1):
        super().__init__()
        self.static_cfg = static_cfg
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = static_cfg.d_m
        self.encoder = self.child("encoder", MotionEncoder(rng, d))
        self.blocks = [
            self.child(f"sd{i}", PreNormBlock(rng, d, static_cfg.heads, static_cfg.ffn, cfg.residual_std))
            for i in range(cfg.n_sd)
        ]
        self.head = self.child("head", clone_head(static_head, rng, static_cfg))
        self.hidden: np.ndarray | None = None

    def reset(self) -> None:
        self.hidden = None

    def encode(self, descriptors: np.ndarray, shape, hidden=None) -> Tensor:
        h = None if hidden is None else ad.as_tensor(hidden)
        return self.encoder(descriptors, shape, h)

    def decode(self, H_static: Tensor, C_dyn: Tensor) -> tuple[Tensor, Tensor]:
        H = H_static
        for block in self.blocks:
            H = block(H, C_dyn)
        out = self.head(H)
        D = ad.reshape(out, (self.static_cfg.n_cells, self.static_cfg.n_vertices, 3))
        return D, H

    def step(self, H_static: Tensor, descriptors: np.ndarray, shape) -> tuple[Tensor, Tensor, Tensor]:
        """One timestep from the carried hidden state; updates the carry.

        The carry is stored detached, so gradients do not cross timesteps.
        """
        C = self.encode(descriptors, shape, self.hidden)
        self.hidden = C.data.copy()
        D, H = self.decode(H_static, C)
        return D, H, C


def func_reg_loss(H_static: Tensor, static_head: PredictionHead, dynamic_head: PredictionHead, lam: float) -> Tensor:
    """lam * MSE(dynamic_head(H), frozen static_head(H)); no gradient reaches the static head."""
    H = ad.detach(H_static)
    target = ad.detach(static_head(H))
    return ad.scale(ad.mse(dynamic_head(H), target), lam)
