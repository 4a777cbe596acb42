"""Dynamic network training over pose sequences, and sequence simulation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..energy import EnergyParams, total_dynamic_loss
from ..nets import DynamicNet, StaticNet, func_reg_loss, load_checkpoint, motion_descriptors, save_checkpoint, state_hash, tapered_lookup
from .config import RunConfig, scene_latent
from .optim import AdamState, adam_step
from .sequences import PoseSequence, synth_pose_sequences
from .static import Sample, SampleFactory, TrainingAborted


def window_poses(poses: np.ndarray, t: int, window: int) -> np.ndarray:
    """The ``window`` poses ending at frame t; frames before the start repeat frame 0."""
    idx = np.clip(np.arange(t - window + 1, t + 1), 0, None)
    return poses[idx]


class Rollout:
    """Steps the dynamic network through one sequence, keeping the two previous drapes."""

    def __init__(self, static_net: StaticNet, dyn: DynamicNet, factory: SampleFactory, latent, seq: PoseSequence,
                 dt: float):
        self.static_net = static_net
        self.dyn = dyn
        self.factory = factory
        self.latent = np.asarray(latent, float)
        self.seq = seq
        self.dt = dt
        self.t = 0
        self.history: list[np.ndarray] = []
        dyn.reset()

    def done(self) -> bool:
        return self.t >= len(self.seq)

    def prepare(self) -> tuple[Sample, ad.Tensor, np.ndarray]:
        """Sample, frozen static context and motion descriptors for the current frame."""
        s = self.factory(self.latent, self.seq.poses[self.t], self.seq.shape)
        _, H_static = self.static_net(s.latent, s.body.params.shape, s.body.params.pose)
        win = window_poses(self.seq.poses, self.t, self.dyn.cfg.window)
        return s, ad.detach(H_static), motion_descriptors(win, self.seq.shape, self.dt)

    def previous(self) -> tuple[np.ndarray | None, np.ndarray | None]:
        if len(self.history) < 2:
            return None, None
        return self.history[-1], self.history[-2]

    def advance(self, P: np.ndarray) -> None:
        self.history = (self.history + [P])[-2:]
        self.t += 1


def dynamic_step_loss(roll: Rollout, params: EnergyParams):
    """One frame: forward, dynamic energy, backward into the dynamic weights."""
    s, H_static, desc = roll.prepare()
    P_tm1, P_tm2 = roll.previous()
    with ad.Tape() as tape:
        D, _, _ = roll.dyn.step(H_static, desc, s.body.params.shape)
        delta = tapered_lookup(D, s.cells, s.P_rigid.shape[1])
        P = s.P_rigid + delta.data.astype(float)
        fr = func_reg_loss(H_static, roll.static_net.head, roll.dyn.head, params.lam_fr)
        fr_value = float(fr.data)
        rep = total_dynamic_loss(P, P_tm1, P_tm2, s.P_rigid, s.body, s.asset, params, func_reg=fr_value,
                                 normals=s.normals)
        if not np.isfinite(rep.total) or not np.all(np.isfinite(rep.grad)):
            raise TrainingAborted("non-finite loss")
        energy = ad.external_scalar(delta, rep.total - fr_value, rep.grad)
        tape.backward(ad.add(energy, fr))
    roll.advance(P)
    return rep


@dataclass
class DynamicTrainResult:
    net: DynamicNet
    log: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None
    static_hash_before: str = ""
    static_hash_after: str = ""


def training_sequences(cfg: RunConfig, rng: np.random.Generator, kind: str = "oscillate") -> list[PoseSequence]:
    """Scores ``score_samples`` synthetic sequences, keeps those at or above the median,
    and subsamples each kept sequence by its own interval drawn from ``sample_interval``.
    """
    t = cfg.train
    pool = synth_pose_sequences(kind, t.score_samples, rng, frames=t.dyn_frames).filter_by_median()
    lo, hi = t.sample_interval
    picks = rng.choice(len(pool.sequences), size=min(t.dyn_sequences, len(pool.sequences)), replace=False)
    return [pool.sequences[i].subsample(int(rng.integers(lo, hi + 1))) for i in picks]


def train_dynamic(static_net: StaticNet, cfg: RunConfig, rng: np.random.Generator | None = None,
                  out_dir: str | Path | None = None, sequences: list[PoseSequence] | None = None,
                  latent=None, iterations: int | None = None, static_source: str = "",
                  progress=None) -> DynamicTrainResult:
    """Trains the dynamic network with the static network frozen.

    Each iteration is one optimizer update. Per-frame losses are summed over
    ``dyn_frames_per_update`` consecutive frames of a sequence (the rest of the
    sequence when 0) before the update; sequences are visited in turn. Inertia
    is active from the third frame of every sequence.
    """
    t = cfg.train
    rng = np.random.default_rng(t.seed) if rng is None else rng
    static_net.set_trainable(False)
    before = state_hash(static_net.state())
    dyn = DynamicNet(cfg.static_net, cfg.dynamic_net, static_net.head, seed=t.seed + 1)
    adam = {n: AdamState.zeros_like(p.data) for n, p in dyn.named_parameters()}
    latent = scene_latent(cfg.scene, rng) if latent is None else np.asarray(latent, float)
    sequences = training_sequences(cfg, rng) if sequences is None else sequences
    factory = SampleFactory(cfg.scene.grid, cfg.static_net.grid)
    params = cfg.energy.replace(dt=cfg.dynamic_net.dt)
    n_iter = t.dyn_iters if iterations is None else iterations
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    log_file = open(out / "dynamic_log.jsonl", "a") if out is not None else None
    result = DynamicTrainResult(dyn, static_hash_before=before)
    seq_i = 0
    roll = None
    try:
        for k in range(n_iter):
            if roll is None or roll.done():
                roll = Rollout(static_net, dyn, factory, latent, sequences[seq_i % len(sequences)], params.dt)
                seq_i += 1
            first = roll.t
            reps = []
            while not roll.done() and (t.dyn_frames_per_update == 0 or len(reps) < t.dyn_frames_per_update):
                reps.append(dynamic_step_loss(roll, params))
            for name, p in dyn.named_parameters():
                if p.grad is not None:
                    p.data[...], _ = adam_step(p.data, p.grad / len(reps), adam[name], t.dyn_lr)
                    p.grad = None
            losses = {n: float(np.mean([r.terms[n] for r in reps])) for n in reps[0].terms}
            record = {"iter": k, "phase": "dynamic", "b_p": params.b_p, "frames": [first, roll.t - 1],
                      "losses": losses, "total": float(np.mean([r.total for r in reps]))}
            result.log.append(record)
            if log_file is not None and k % t.log_every == 0:
                log_file.write(json.dumps(record) + "\n")
            if progress is not None:
                progress(record)
    finally:
        if log_file is not None:
            log_file.close()
    result.static_hash_after = state_hash(static_net.state())
    if out is not None:
        result.checkpoint = save_dynamic(out / "dynamic", dyn, cfg, t.seed, n_iter, static_source, before)
    return result


def save_dynamic(path, dyn: DynamicNet, cfg: RunConfig, seed: int, iteration: int = 0, static_source: str = "",
                 static_hash: str = "") -> Path:
    meta = {"iteration": iteration, "kind": "dynamic", "net_seed": seed + 1, "static_checkpoint": static_source,
            "static_hash": static_hash}
    return save_checkpoint(path, dyn.state(), cfg.to_dict(), seed, meta)


def load_dynamic(path, static_net: StaticNet) -> tuple[DynamicNet, dict]:
    state, manifest = load_checkpoint(path)
    if manifest["extra"].get("kind") != "dynamic":
        raise ValueError(f"{path} is not a dynamic-network checkpoint")
    cfg = RunConfig.from_dict(manifest["config"])
    dyn = DynamicNet(cfg.static_net, cfg.dynamic_net, static_net.head, seed=manifest["extra"].get("net_seed", 1))
    dyn.load_state(state)
    return dyn, manifest


@dataclass
class Simulation:
    dynamic: np.ndarray  # (T, M, N, 3)
    static: np.ndarray  # (T, M, N, 3) per-frame static inference
    rigid: np.ndarray  # (T, M, N, 3)


def simulate(static_net: StaticNet, dyn: DynamicNet | None, asset_latent, seq: PoseSequence, grid=(16, 16),
             dt: float | None = None, factory: SampleFactory | None = None) -> Simulation:
    """Runs both networks over a sequence. Without a dynamic network only the static drape is produced."""
    factory = factory or SampleFactory(grid, static_net.cfg.grid)
    dt = (dyn.cfg.dt if dyn is not None else 1.0 / 60.0) if dt is None else dt
    dyn_frames, static_frames, rigid_frames = [], [], []
    if dyn is not None:
        roll = Rollout(static_net, dyn, factory, asset_latent, seq, dt)
    for t in range(len(seq)):
        if dyn is not None:
            s, H_static, desc = roll.prepare()
        else:
            s = factory(asset_latent, seq.poses[t], seq.shape)
        D_s, H = static_net(s.latent, s.body.params.shape, s.body.params.pose)
        static_frames.append(s.P_rigid + tapered_lookup(D_s, s.cells, s.P_rigid.shape[1]).data.astype(float))
        rigid_frames.append(s.P_rigid)
        if dyn is not None:
            D, _, _ = dyn.step(H_static, desc, s.body.params.shape)
            P = s.P_rigid + tapered_lookup(D, s.cells, s.P_rigid.shape[1]).data.astype(float)
            roll.advance(P)
            dyn_frames.append(P)
    static_arr = np.stack(static_frames)
    return Simulation(np.stack(dyn_frames) if dyn_frames else static_arr.copy(), static_arr, np.stack(rigid_frames))


def tip_lag(a: np.ndarray, b: np.ndarray, max_lag: int | None = None) -> int:
    """Offset (frames) at which the cross-correlation of a against b peaks; positive when a trails b."""
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    n = a.size
    max_lag = n // 2 if max_lag is None else max_lag
    lags = np.arange(-max_lag, max_lag + 1)
    corr = [np.dot(a[max(k, 0):n + min(k, 0)], b[max(-k, 0):n - max(k, 0)]) for k in lags]
    return int(lags[int(np.argmax(corr))])
