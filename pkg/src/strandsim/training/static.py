"""Self-supervised training of the static drape network with a four-phase curriculum."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..body import BodyParams, PosedBody, pose_body
from ..energy import EnergyParams, scalp_normals, total_static_loss
from ..geometry import HairAsset, generate_procedural_hair, rigid_pose_hair
from ..nets import StaticNet, cell_index, load_checkpoint, save_checkpoint, tapered_lookup
from .config import RunConfig, scene_latent
from .optim import AdamState, adam_step
from .sequences import head_ellipsoid, oscillate, walk


class TrainingAborted(RuntimeError):
    pass


@dataclass
class Sample:
    """One training example with everything the loss needs precomputed."""

    latent: np.ndarray
    body: PosedBody
    asset: HairAsset
    P_rigid: np.ndarray
    normals: np.ndarray
    cells: np.ndarray


class SampleFactory:
    """Builds samples, caching the hair asset per latent."""

    def __init__(self, grid: tuple[int, int], net_grid: tuple[int, int]):
        self.grid = grid
        self.net_grid = net_grid
        self._assets: dict[bytes, HairAsset] = {}

    def register(self, asset: HairAsset) -> None:
        """Use a prebuilt asset for its latent instead of regenerating it."""
        self._assets[np.asarray(asset.latent, dtype=float).tobytes()] = asset

    def asset(self, latent: np.ndarray) -> HairAsset:
        key = np.asarray(latent, dtype=float).tobytes()
        if key not in self._assets:
            self._assets[key] = generate_procedural_hair(latent, grid=self.grid)
        return self._assets[key]

    def __call__(self, latent, pose, shape) -> Sample:
        asset = self.asset(latent)
        body = pose_body(BodyParams(pose, shape))
        P_rigid = rigid_pose_hair(asset, body).positions
        return Sample(np.asarray(latent, float), body, asset, P_rigid, scalp_normals(body, asset),
                      cell_index(asset.root_uv, self.net_grid))


def sample_loss(net: StaticNet, s: Sample, params: EnergyParams, weight: float = 1.0):
    """Forward, energy and backward for one sample; gradients accumulate on the weights.

    Returns the energy report of the predicted drape.
    """
    with ad.Tape() as tape:
        D, _ = net(s.latent, s.body.params.shape, s.body.params.pose)
        delta = tapered_lookup(D, s.cells, s.P_rigid.shape[1])
        P = s.P_rigid + delta.data.astype(float)
        rep = total_static_loss(P, s.P_rigid, s.body, s.asset, params, normals=s.normals)
        if not np.isfinite(rep.total) or not np.all(np.isfinite(rep.grad)):
            raise TrainingAborted("non-finite loss")
        loss = ad.external_scalar(delta, weight * rep.total, weight * rep.grad)
        tape.backward(loss)
    return rep


def predict_static(net: StaticNet, s: Sample) -> np.ndarray:
    D, _ = net(s.latent, s.body.params.shape, s.body.params.pose)
    return s.P_rigid + tapered_lookup(D, s.cells, s.P_rigid.shape[1]).data.astype(float)


class Curriculum:
    """Draws (latent, pose, shape) batches for each phase."""

    def __init__(self, cfg: RunConfig, rng: np.random.Generator, base_latent: np.ndarray | None = None):
        t = cfg.train
        self.cfg = cfg
        self.rng = rng
        self.base_latent = scene_latent(cfg.scene, rng) if base_latent is None else np.asarray(base_latent, float)
        self.base_shape = np.zeros(16)
        self.latents2 = [self.base_latent] + [rng.standard_normal(512) for _ in range(t.n_latents - 1)]
        self.latents3 = self.latents2 + [rng.standard_normal(512) for _ in range(t.n_latents)]
        self.dancers = [self._dancer(rng, i == 0) for i in range(t.n_dancers + 3)]

    def _dancer(self, rng, mean_shape: bool):
        shape = np.zeros(16) if mean_shape else np.clip(rng.normal(0, 0.5, 16), -1.5, 1.5)
        poses = np.concatenate([walk(120, rng).poses, oscillate(120, rng).poses])
        return shape, poses

    def batch(self, phase: int, progress: float, size: int):
        out = []
        for _ in range(size):
            if phase == 0:
                out.append((self.base_latent, np.zeros(66), self.base_shape))
            elif phase == 1:
                radius = self.cfg.train.head_radius * progress
                pose = head_ellipsoid(radius, 1, self.rng).poses[0]
                out.append((self.base_latent, pose, self.base_shape))
            elif phase == 2:
                shape, poses = self.dancers[0]
                z = self.latents2[self.rng.integers(len(self.latents2))]
                out.append((z, poses[self.rng.integers(len(poses))], shape))
            else:
                i = self.rng.integers(len(self.dancers))
                shape, poses = self.dancers[i]
                shape = shape + self.rng.normal(0, self.cfg.train.shape_noise, 16)
                z = self.latents3[self.rng.integers(len(self.latents3))]
                out.append((z, poses[self.rng.integers(len(poses))], shape))
        return out


@dataclass
class TrainResult:
    net: StaticNet
    log: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    iteration: int = 0


def _adam_states(net, states=None):
    if states is None:
        return {n: AdamState.zeros_like(t.data) for n, t in net.named_parameters()}
    return states


def _apply_adam(net, states, lr: float, scale: float = 1.0):
    for n, t in net.named_parameters():
        if t.grad is None:
            continue
        new, _ = adam_step(t.data, t.grad * t.data.dtype.type(scale), states[n], lr)
        t.data[...] = new
        t.grad = None


def _adam_to_state(states) -> dict[str, np.ndarray]:
    out = {}
    for n, s in states.items():
        out[f"adam.m.{n}"] = s.m
        out[f"adam.v.{n}"] = s.v
    return out


def _adam_from_state(state: dict, net) -> dict[str, AdamState]:
    t = int(state.get("__adam_t__", 0))
    return {n: AdamState(state[f"adam.m.{n}"].astype(p.data.dtype), state[f"adam.v.{n}"].astype(p.data.dtype), t)
            for n, p in net.named_parameters()}


def save_static(path, net: StaticNet, cfg: RunConfig, seed: int, iteration: int = 0, phase: int = 0,
                adam=None, extra: dict | None = None) -> Path:
    state = {f"net.{k}": v for k, v in net.state().items()}
    meta = {"iteration": iteration, "phase": phase, "kind": "static", "net_seed": seed}
    if adam is not None:
        state.update(_adam_to_state(adam))
        meta["adam_t"] = next(iter(adam.values())).t if adam else 0
    meta.update(extra or {})
    return save_checkpoint(path, state, cfg.to_dict(), seed, meta)


def load_static(path) -> tuple[StaticNet, dict]:
    state, manifest = load_checkpoint(path)
    cfg = RunConfig.from_dict(manifest["config"])
    net = StaticNet(cfg.static_net, seed=manifest["extra"].get("net_seed", manifest["seed"]))
    net.load_state({k[4:]: v for k, v in state.items() if k.startswith("net.")})
    manifest["state"] = state
    return net, manifest


def train_static(cfg: RunConfig, out_dir: str | Path | None = None, rng: np.random.Generator | None = None,
                 phases: tuple[int, ...] = (0, 1, 2, 3), base_latent=None, resume: str | Path | None = None,
                 progress=None) -> TrainResult:
    """Runs the requested curriculum phases in order.

    b_p follows a geometric schedule from ``bp_start`` to ``bp_end`` over the
    iterations of the requested phases. A non-finite loss aborts the run after
    writing the offending batch to ``out_dir/nan_dump.npz``.
    """
    t = cfg.train
    rng = np.random.default_rng(t.seed) if rng is None else rng
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    net = StaticNet(cfg.static_net, seed=t.seed)
    adam = _adam_states(net)
    start_iter = 0
    if resume is not None:
        net, manifest = load_static(resume)
        start_iter = int(manifest["extra"].get("iteration", 0))
        state = manifest["state"]
        if any(k.startswith("adam.") for k in state):
            state = dict(state, __adam_t__=manifest["extra"].get("adam_t", 0))
            adam = _adam_from_state(state, net)
        else:
            adam = _adam_states(net)
    curriculum = Curriculum(cfg, rng, base_latent)
    factory = SampleFactory(cfg.scene.grid, cfg.static_net.grid)
    budget = [(p, t.phase_iters[p]) for p in phases]
    total = sum(n for _, n in budget)
    result = TrainResult(net)
    log_file = open(out / "train_log.jsonl", "a") if out is not None else None
    k = 0
    try:
        for phase, n_iter in budget:
            batch_size = 1 if phase == 0 else t.batch_size
            for i in range(n_iter):
                if k < start_iter:
                    # replay the sampler so a resumed run sees the same data
                    curriculum.batch(phase, i / max(n_iter - 1, 1), batch_size)
                    k += 1
                    continue
                b_p = t.bp_at(k, total)
                params = cfg.energy.replace(b_p=b_p)
                batch = curriculum.batch(phase, i / max(n_iter - 1, 1), batch_size)
                terms = {}
                for latent, pose, shape in batch:
                    s = factory(latent, pose, shape)
                    try:
                        rep = sample_loss(net, s, params, 1.0 / batch_size)
                    except TrainingAborted:
                        net.zero_grad()
                        _dump(out, k, phase, batch, b_p)
                        raise TrainingAborted(f"non-finite loss at iteration {k} (phase {phase})")
                    for name, v in rep.terms.items():
                        terms[name] = terms.get(name, 0.0) + v / batch_size
                _apply_adam(net, adam, t.lr)
                record = {"iter": k, "phase": phase, "b_p": b_p, "losses": terms, "total": float(sum(terms.values()))}
                result.log.append(record)
                if log_file is not None and (k % t.log_every == 0 or i == n_iter - 1):
                    log_file.write(json.dumps(record) + "\n")
                if progress is not None:
                    progress(record)
                k += 1
            if out is not None and n_iter > 0:
                result.checkpoints.append(save_static(out / f"static_phase{phase}", net, cfg, t.seed, k, phase, adam))
    finally:
        if log_file is not None:
            log_file.close()
    if out is not None:
        result.checkpoints.append(save_static(out / "static", net, cfg, t.seed, k, budget[-1][0] if budget else 0, adam,
                                              {"latent": curriculum.base_latent.tolist()}))
    result.iteration = k
    return result


def _dump(out: Path | None, k: int, phase: int, batch, b_p: float) -> None:
    if out is None:
        return
    np.savez(out / "nan_dump.npz", iteration=k, phase=phase, b_p=b_p,
             latents=np.stack([b[0] for b in batch]), poses=np.stack([b[1] for b in batch]),
             shapes=np.stack([b[2] for b in batch]))
