"""Direct optimization of all free hair vertices (no network)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..body import PosedBody
from ..energy import EnergyParams, scalp_normals, total_dynamic_loss, total_static_loss
from ..energy.terms import N_FIXED
from ..geometry import HairAsset, PosedHair, rigid_pose_hair
from .optim import AdamState, OptimResult, adam_step, lbfgs_minimize


@dataclass(frozen=True)
class DirectConfig:
    method: str = "lbfgs"  # "lbfgs" or "adam"
    max_iter: int = 2000
    patience: int = 200
    lr: float = 1e-4
    history: int = 10


def _pack(P):
    return P[:, N_FIXED:].reshape(-1).copy()


def _unpack(x, P_ref):
    P = P_ref.copy()
    P[:, N_FIXED:] = x.reshape(P.shape[0], P.shape[1] - N_FIXED, 3)
    return P


def _minimize(loss, P0, cfg: DirectConfig) -> tuple[np.ndarray, OptimResult]:
    def objective(x):
        rep = loss(_unpack(x, P0))
        return rep.total, _pack(rep.grad)

    x0 = _pack(P0)
    if cfg.method == "lbfgs":
        res = lbfgs_minimize(objective, x0, history=cfg.history, max_iter=cfg.max_iter, patience=cfg.patience)
    elif cfg.method == "adam":
        res = _adam_minimize(objective, x0, cfg)
    else:
        raise ValueError(f"unknown method {cfg.method!r}")
    return _unpack(res.x, P0), res


def _adam_minimize(objective, x0, cfg: DirectConfig) -> OptimResult:
    x = x0.copy()
    state = AdamState.zeros_like(x)
    f, g = objective(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    best, best_x, since = f, x.copy(), 0
    hist = [float(f)]
    reason = "max_iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        x, state = adam_step(x, g, state, cfg.lr)
        f, g = objective(x)
        hist.append(float(f))
        if f < best:
            best, best_x, since = f, x.copy(), 0
        else:
            since += 1
            if since >= cfg.patience:
                reason = "patience"
                break
    return OptimResult(best_x, float(best), it, it + 1, reason, hist)


def direct_optimize(asset: HairAsset, body: PosedBody, params: EnergyParams, cfg: DirectConfig = DirectConfig()):
    """Drape for one pose starting from rigid posing. Returns (PosedHair, OptimResult)."""
    P_rigid = rigid_pose_hair(asset, body).positions
    normals = scalp_normals(body, asset)

    def loss(P):
        return total_static_loss(P, P_rigid, body, asset, params, normals=normals)

    P, res = _minimize(loss, P_rigid, cfg)
    return PosedHair(P, asset, body.tag), res


def direct_optimize_sequence(asset: HairAsset, bodies: list[PosedBody], params: EnergyParams,
                             cfg: DirectConfig = DirectConfig()) -> list[PosedHair]:
    """Frame-by-frame drapes with the inertia term active from the third frame."""
    out: list[PosedHair] = []
    history: list[np.ndarray] = []
    for body in bodies:
        P_rigid = rigid_pose_hair(asset, body).positions
        normals = scalp_normals(body, asset)
        prev = history[-2:] if len(history) >= 2 else [None, None]

        def loss(P, P_rigid=P_rigid, body=body, normals=normals, prev=prev):
            return total_dynamic_loss(P, prev[1], prev[0], P_rigid, body, asset, params, normals=normals)

        start = history[-1] if history else P_rigid
        start = start.copy()
        start[:, :N_FIXED] = P_rigid[:, :N_FIXED]
        P, _ = _minimize(loss, start, cfg)
        history.append(P)
        out.append(PosedHair(P, asset, body.tag))
    return out
