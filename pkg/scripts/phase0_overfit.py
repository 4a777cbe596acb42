"""Overfit the static network to one rest-pose scene and report loss and penetration."""

import argparse
import time
from pathlib import Path

import numpy as np

from strandsim.energy import total_static_loss
from strandsim.metrics import length_change_pct, penetration_pct
from strandsim.nets import StaticNet
from strandsim.scenes import long_hair_latent
from strandsim.training.config import RunConfig, TrainConfig
from strandsim.training.static import SampleFactory, predict_static, train_static


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--out", default="runs/phase0")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = RunConfig(train=TrainConfig(phase_iters=(args.iters, 0, 0, 0), seed=args.seed))
    t0 = time.perf_counter()
    res = train_static(cfg, Path(args.out), phases=(0,))
    print(f"trained {args.iters} iterations in {time.perf_counter() - t0:.0f} s")
    s = SampleFactory(cfg.scene.grid, cfg.static_net.grid)(long_hair_latent(), np.zeros(66), np.zeros(16))
    params = cfg.energy.replace(b_p=cfg.train.bp_end)
    P_init = predict_static(StaticNet(cfg.static_net, seed=args.seed), s)
    P = predict_static(res.net, s)
    init = total_static_loss(P_init, s.P_rigid, s.body, s.asset, params, with_grad=False).total
    final = total_static_loss(P, s.P_rigid, s.body, s.asset, params, with_grad=False).total
    print(f"total loss at b_p={params.b_p}: {init:.4g} -> {final:.4g} ({100 * final / init:.1f}%)")
    print(f"penetration: rigid {penetration_pct(s.P_rigid, s.body):.3f}%  net {penetration_pct(P, s.body):.3f}%")
    print(f"length change: {length_change_pct(P, s.asset):.3f}%")


if __name__ == "__main__":
    main()
