"""Comparison table on the tilted-head long-hair scene."""

import argparse

from strandsim.geometry import rigid_pose_hair
from strandsim.metrics import evaluate, format_table
from strandsim.scenes import tilted_head_scene
from strandsim.training.config import RunConfig
from strandsim.cli import drape_with


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, nargs=2, default=(16, 16))
    ap.add_argument("--pitch", type=float, default=30.0)
    ap.add_argument("--checkpoint", help="static network checkpoint to add as a row")
    ap.add_argument("--max-iter", type=int)
    args = ap.parse_args()
    asset, body = tilted_head_scene(tuple(args.grid), args.pitch)
    cfg = RunConfig()
    rows = [evaluate(rigid_pose_hair(asset, body).positions, body, asset, None, body.tag, "Initial State")]
    methods = [("direct:adam", "Adam"), ("direct:lbfgs", "L-BFGS")]
    if args.checkpoint:
        methods.insert(0, ("checkpoint", "Static Net"))
    for method, label in methods:
        P, ms = drape_with(method, asset, body, cfg, args.checkpoint, args.max_iter)
        rows.append(evaluate(P, body, asset, ms, body.tag, label))
    print(format_table(rows))


if __name__ == "__main__":
    main()
