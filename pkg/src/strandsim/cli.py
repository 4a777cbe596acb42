"""Command-line interface: generate, drape, simulate, train, eval.

Every command writes ``manifest.json`` next to its outputs. Options resolve
from the command line first, then ``STRANDSIM_<NAME>`` environment variables
(CONFIG, SEED, THREADS, DETERMINISTIC, OUT), then defaults. With
``--deterministic`` wall-clock timings go to stderr only, so that reruns
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .body import BodyParams, pose_body
from .energy import total_static_loss
from .geometry import (EmptyHairstyleError, generate_procedural_hair, load_asset, read_binary, rigid_pose_hair,
                       save_asset, write_binary, write_obj)
from .metrics import MetricsReport, evaluate, format_table
from .scenes import head_pitch_pose, long_hair_latent
from .training.config import RunConfig, load_config, save_config
from .training.direct import DirectConfig, direct_optimize
from .training.sequences import KINDS, PoseSequence, synth_pose_sequences

MANIFEST = "manifest.json"


class CliError(Exception):
    pass


# -- options -------------------------------------------------------------------


def _env(name: str, default=None):
    return os.environ.get(f"STRANDSIM_{name}", default)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="run configuration JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")


def _resolve(args) -> None:
    args.config = args.config or _env("CONFIG")
    args.seed = int(args.seed if args.seed is not None else _env("SEED", 0))
    if args.deterministic is None:
        args.deterministic = _env("DETERMINISTIC", "0").lower() in ("1", "true", "yes")
    args.threads = int(args.threads if args.threads is not None else _env("THREADS", 1))
    args.out = Path(args.out or _env("OUT", "strandsim_out"))


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = cfg.with_seed(args.seed)
    return replace(cfg, energy=cfg.energy.replace(deterministic=bool(args.deterministic) or cfg.energy.deterministic))


def _limit_threads(n: int):
    from threadpoolctl import threadpool_limits

    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    return threadpool_limits(n)


# -- manifests -----------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _inputs(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        out[str(p)] = _sha256(p)
        if p.suffix == ".json":
            # content hash of the sibling blob of checkpoints and assets
            try:
                blob = json.loads(p.read_text()).get("blob")
            except (ValueError, AttributeError):
                blob = None
            if blob:
                out[str(p.parent / blob)] = _sha256(p.parent / blob)
    return out


def write_manifest(args, command: str, cfg: RunConfig | None, inputs, outputs) -> Path:
    manifest = {
        "command": command,
        "argv": [a for a in sys.argv[1:]] if args.argv is None else list(args.argv),
        "config_path": args.config,
        "config": cfg.to_dict() if cfg is not None else None,
        "seed": args.seed,
        "deterministic": bool(args.deterministic),
        "threads": args.threads,
        "inputs": _inputs(inputs),
        "outputs": {str(Path(p).relative_to(args.out)): _sha256(p) for p in sorted(set(map(Path, outputs)))},
    }
    path = args.out / MANIFEST
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


# -- inputs --------------------------------------------------------------------


def parse_pose(spec: str | None) -> BodyParams:
    """'rest', 'pitch:DEG', or a JSON file with "pose" (66) and optional "shape" (16)."""
    if spec is None or spec == "rest":
        return BodyParams(np.zeros(66), np.zeros(16))
    if spec.startswith("pitch:"):
        return BodyParams(head_pitch_pose(float(spec.split(":", 1)[1])), np.zeros(16))
    path = Path(spec)
    if not path.exists():
        raise CliError(f"pose file not found: {spec}")
    d = json.loads(path.read_text())
    return BodyParams(np.asarray(d["pose"], float), np.asarray(d.get("shape", np.zeros(16)), float))


def parse_sequence(spec: str, frames: int, rng: np.random.Generator, base: BodyParams) -> PoseSequence:
    """A generator kind, 'constant' (the --pose held), or a JSON file with "poses"."""
    if spec == "constant":
        return PoseSequence(np.repeat(base.pose[None], frames, 0), base.shape.copy(), kind="constant")
    if spec in KINDS:
        seq = synth_pose_sequences(spec, 1, rng, frames=frames).sequences[0]
        seq.shape = base.shape.copy()
        return seq
    path = Path(spec)
    if not path.exists():
        raise CliError(f"unknown sequence {spec!r}: not a generator kind ({', '.join(KINDS)}, constant) or a file")
    d = json.loads(path.read_text())
    return PoseSequence(np.asarray(d["poses"], float), np.asarray(d.get("shape", np.zeros(16)), float),
                        float(d.get("fps", 60.0)), "file")


def _asset(args):
    if args.asset is None:
        raise CliError("--asset is required")
    try:
        return load_asset(args.asset)
    except FileNotFoundError as e:
        raise CliError(str(e)) from e


def _checkpoint(path: str | None, what: str) -> Path:
    if not path:
        raise CliError(f"a {what} checkpoint path is required")
    p = Path(path)
    if p.suffix != ".json":
        p = p.with_suffix(".json")
    if not p.exists():
        raise CliError(f"{what} checkpoint not found: {path}")
    return p


def _write_strands(out: Path, stem: str, P) -> list[Path]:
    obj, bin_ = out / f"{stem}.obj", out / f"{stem}.hstr"
    write_obj(obj, P)
    write_binary(bin_, P)
    return [obj, bin_]


def _log_time(args, label: str, ms: float) -> float | None:
    print(f"{label}: {ms:.3f} ms", file=sys.stderr)
    return None if args.deterministic else ms


# -- drape methods ---------------------------------------------------------------


def drape_with(method: str, asset, body, cfg: RunConfig, checkpoint: str | None = None, max_iter: int | None = None):
    """Returns (positions, wall ms) for 'initial', 'direct:adam', 'direct:lbfgs' or 'checkpoint'."""
    t0 = time.perf_counter()
    if method == "initial":
        P = rigid_pose_hair(asset, body).positions
    elif method.startswith("direct:"):
        kind = method.split(":", 1)[1]
        if kind not in ("adam", "lbfgs"):
            raise CliError(f"unknown direct method {kind!r}")
        dcfg = DirectConfig(method=kind, max_iter=max_iter or DirectConfig.max_iter,
                            lr=1e-4 if kind == "adam" else DirectConfig.lr)
        P = direct_optimize(asset, body, cfg.energy, dcfg)[0].positions
    elif method == "checkpoint":
        from .training.static import SampleFactory, load_static, predict_static

        net, _ = load_static(_checkpoint(checkpoint, "static"))
        factory = SampleFactory((1, 1), net.cfg.grid)
        factory.register(asset)
        s = factory(asset.latent, body.params.pose, body.params.shape)
        t0 = time.perf_counter()
        P = predict_static(net, s)
    else:
        raise CliError(f"unknown method {method!r}; use initial, checkpoint, direct:adam or direct:lbfgs")
    return P, (time.perf_counter() - t0) * 1e3


# -- commands --------------------------------------------------------------------


def cmd_generate(args) -> list[Path]:
    cfg = _run_config(args)
    if args.latent == "long":
        latent = long_hair_latent()
    elif args.latent == "zero":
        latent = np.zeros(512)
    else:
        latent = np.random.default_rng(args.seed).standard_normal(512)
    grid = tuple(args.grid) if args.grid else tuple(cfg.scene.grid)
    try:
        asset = generate_procedural_hair(latent, grid=grid, min_length=args.min_length)
    except EmptyHairstyleError as e:
        raise CliError(str(e)) from e
    args.out.mkdir(parents=True, exist_ok=True)
    asset_json = save_asset(args.out / "hair", asset, {"grid": list(grid), "min_length": args.min_length,
                                                       "latent_choice": args.latent})
    outputs = [asset_json, asset_json.with_suffix(".bin")] + _write_strands(args.out, "hair", asset.strands)
    print(f"{asset.n_strands} strands x {asset.n_vertices} vertices -> {asset_json}")
    write_manifest(args, "generate", cfg, [], outputs)
    return outputs


def cmd_drape(args) -> list[Path]:
    cfg = _run_config(args)
    asset = _asset(args)
    params = parse_pose(args.pose)
    body = pose_body(params)
    method = args.method
    if method.startswith("checkpoint:"):
        method, args.checkpoint = "checkpoint", method.split(":", 1)[1]
    P, ms = drape_with(method, asset, body, cfg, args.checkpoint, args.max_iter)
    args.out.mkdir(parents=True, exist_ok=True)
    outputs = _write_strands(args.out, "drape", P)
    rep = evaluate(P, body, asset, _log_time(args, method, ms), body.tag, method)
    (args.out / "metrics.json").write_text(rep.to_json() + "\n")
    energy = total_static_loss(P, rigid_pose_hair(asset, body).positions, body, asset, cfg.energy, with_grad=False)
    (args.out / "energy.json").write_text(energy.to_json() + "\n")
    outputs += [args.out / "metrics.json", args.out / "energy.json"]
    print(format_table([rep]))
    inputs = [args.asset] + ([_checkpoint(args.checkpoint, "static")] if method == "checkpoint" else [])
    if args.pose and Path(args.pose).exists():
        inputs.append(args.pose)
    write_manifest(args, "drape", cfg, inputs, outputs)
    return outputs


def cmd_simulate(args) -> list[Path]:
    from .training.dynamic import load_dynamic, simulate
    from .training.static import SampleFactory, load_static

    cfg = _run_config(args)
    asset = _asset(args)
    static_path = _checkpoint(args.static_ckpt, "static")
    net, _ = load_static(static_path)
    dyn, dyn_path = None, None
    if args.dynamic_ckpt:
        dyn_path = _checkpoint(args.dynamic_ckpt, "dynamic")
        dyn, _ = load_dynamic(dyn_path, net)
    base = parse_pose(args.pose)
    seq = parse_sequence(args.sequence, args.frames, np.random.default_rng(args.seed), base)
    factory = SampleFactory((1, 1), net.cfg.grid)
    factory.register(asset)
    t0 = time.perf_counter()
    sim = simulate(net, dyn, asset.latent, seq, factory=factory)
    ms = (time.perf_counter() - t0) * 1e3 / max(len(seq), 1)
    frames_dir = args.out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    per_frame = []
    prev = None
    for t, P in enumerate(sim.dynamic):
        path = frames_dir / f"frame_{t:04d}.hstr"
        write_binary(path, P)
        outputs.append(path)
        body = pose_body(BodyParams(seq.poses[t], seq.shape))
        m = evaluate(P, body, asset)
        step = 0.0 if prev is None else float(np.linalg.norm(P - prev, axis=-1).max())
        per_frame.append({"frame": t, "penetration_pct": m.penetration_pct,
                          "length_change_pct": m.length_change_pct, "max_step_m": step})
        prev = P
    report = {"frames": len(seq), "dynamic": dyn is not None, "time_ms_per_frame": _log_time(args, "frame", ms),
              "per_frame": per_frame}
    (args.out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    outputs.append(args.out / "report.json")
    inputs = [args.asset, static_path] + ([dyn_path] if dyn_path else [])
    if Path(args.sequence).exists():
        inputs.append(args.sequence)
    write_manifest(args, "simulate", cfg, inputs, outputs)
    print(f"{len(seq)} frames -> {frames_dir}")
    return outputs


def cmd_train(args) -> list[Path]:
    cfg = _run_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, args.out / "config.json")
    outputs = [args.out / "config.json"]
    inputs = [args.config] if args.config else []
    if args.which == "static":
        from .training.static import TrainingAborted, train_static

        phases = tuple(int(p) for p in args.phases.split(",")) if args.phases else (0, 1, 2, 3)
        resume = _checkpoint(args.resume, "resume") if args.resume else None
        try:
            res = train_static(cfg, args.out, phases=phases, resume=resume)
        except TrainingAborted as e:
            raise CliError(f"{e}; batch written to {args.out / 'nan_dump.npz'}") from e
        for ck in res.checkpoints:
            outputs += [ck, ck.with_suffix(".bin")]
        outputs.append(args.out / "train_log.jsonl")
        if resume:
            inputs.append(resume)
        print(f"trained {res.iteration} iterations -> {res.checkpoints[-1]}")
    else:
        from .training.dynamic import train_dynamic
        from .training.static import load_static

        static_path = _checkpoint(args.static_ckpt, "static")
        net, manifest = load_static(static_path)
        latent = manifest["extra"].get("latent")
        res = train_dynamic(net, cfg, out_dir=args.out, latent=latent, iterations=args.iterations,
                            static_source=str(static_path))
        if res.static_hash_before != res.static_hash_after:
            raise CliError("static weights changed during dynamic training")
        outputs += [res.checkpoint, res.checkpoint.with_suffix(".bin"), args.out / "dynamic_log.jsonl"]
        inputs.append(static_path)
        print(f"trained {len(res.log)} dynamic iterations -> {res.checkpoint}")
    write_manifest(args, f"train {args.which}", cfg, inputs, outputs)
    return outputs


def cmd_eval(args) -> list[Path]:
    cfg = _run_config(args)
    if args.asset:
        asset = _asset(args)
    else:
        asset = generate_procedural_hair(long_hair_latent(), grid=tuple(cfg.scene.grid))
    body = pose_body(parse_pose(args.pose or f"pitch:{cfg.scene.pitch_deg}"))
    rows: list[MetricsReport] = []
    names = {"initial": "Initial State", "checkpoint": "Static Net", "direct:adam": "Adam", "direct:lbfgs": "L-BFGS"}
    for method in args.methods:
        P, ms = drape_with(method, asset, body, cfg, args.checkpoint, args.max_iter)
        t = None if method == "initial" else _log_time(args, method, ms)
        rows.append(evaluate(P, body, asset, t, body.tag, names.get(method, method)))
    args.out.mkdir(parents=True, exist_ok=True)
    table = format_table(rows)
    (args.out / "table.txt").write_text(table + "\n")
    (args.out / "metrics.jsonl").write_text("".join(r.to_json() + "\n" for r in rows))
    print(table)
    inputs = ([args.asset] if args.asset else []) + ([_checkpoint(args.checkpoint, "static")]
                                                     if "checkpoint" in args.methods else [])
    outputs = [args.out / "table.txt", args.out / "metrics.jsonl"]
    write_manifest(args, "eval", cfg, inputs, outputs)
    return outputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strandsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="procedural hairstyle from a latent")
    _common(p)
    p.add_argument("--latent", choices=("seed", "long", "zero"), default="seed",
                   help="seed: standard normal latent from --seed")
    p.add_argument("--grid", type=int, nargs=2, metavar=("ROWS", "COLS"))
    p.add_argument("--min-length", type=float, default=0.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("drape", help="drape one pose")
    _common(p)
    p.add_argument("--asset", required=True)
    p.add_argument("--pose", default="rest", help="rest, pitch:DEG or a pose JSON file")
    p.add_argument("--method", default="direct:lbfgs",
                   help="checkpoint (with --checkpoint), checkpoint:PATH, direct:adam, direct:lbfgs, initial")
    p.add_argument("--checkpoint")
    p.add_argument("--max-iter", type=int)
    p.set_defaults(func=cmd_drape)

    p = sub.add_parser("simulate", help="run the networks over a pose sequence")
    _common(p)
    p.add_argument("--asset", required=True)
    p.add_argument("--sequence", default="oscillate", help=f"{', '.join(KINDS)}, constant or a sequence JSON file")
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--pose", default="rest", help="pose held by the constant sequence")
    p.add_argument("--static-ckpt", required=True)
    p.add_argument("--dynamic-ckpt")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the static or dynamic network")
    _common(p)
    p.add_argument("which", choices=("static", "dynamic"))
    p.add_argument("--phases", help="comma-separated static phases, default 0,1,2,3")
    p.add_argument("--resume", help="static checkpoint to resume from")
    p.add_argument("--static-ckpt", help="frozen static checkpoint for dynamic training")
    p.add_argument("--iterations", type=int, help="dynamic iterations (default from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="comparison table over methods")
    _common(p)
    p.add_argument("--asset")
    p.add_argument("--pose", help="default: head pitch from the scene config")
    p.add_argument("--methods", nargs="+", default=["initial", "direct:adam", "direct:lbfgs"])
    p.add_argument("--checkpoint")
    p.add_argument("--max-iter", type=int)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    _resolve(args)
    try:
        with _limit_threads(args.threads):
            args.func(args)
    except (CliError, ValueError) as e:
        print(f"strandsim {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
