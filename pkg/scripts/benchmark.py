"""Median timings of the static forward pass and the full static energy at M strands."""

import argparse

import numpy as np
from threadpoolctl import threadpool_limits

from strandsim.energy import contact, total_static_loss
from strandsim.metrics import time_drape
from strandsim.nets import StaticNet
from strandsim.scenes import long_hair_latent
from strandsim.training.config import RunConfig
from strandsim.training.static import SampleFactory, predict_static


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, nargs=2, default=(32, 32))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()
    import numba

    numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    cfg = RunConfig()
    net = StaticNet(cfg.static_net, seed=0)
    s = SampleFactory(tuple(args.grid), cfg.static_net.grid)(long_hair_latent(), np.zeros(66), np.zeros(16))
    P, e = s.P_rigid, cfg.energy
    timings = {
        "static forward": lambda: predict_static(net, s),
        "hair-body contact": lambda: contact.hair_body(P, s.body, e.hb_coeffs(), e.lam_contact),
        "hair-hair contact": lambda: contact.hair_hair(P, e.hh_coeffs(), e.lam_contact),
        "total static energy": lambda: total_static_loss(P, P, s.body, s.asset, e),
    }
    print(f"M={P.shape[0]} N={P.shape[1]} threads={args.threads}")
    with threadpool_limits(args.threads):
        for name, fn in timings.items():
            print(f"{name:>20}: {time_drape(fn, repeats=args.repeats):8.2f} ms")


if __name__ == "__main__":
    main()
