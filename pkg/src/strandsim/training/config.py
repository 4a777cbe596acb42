"""Run configuration: one JSON document with energy, network and training sections.

Schema (every key optional; missing keys take the dataclass defaults)::

    {
      "energy":      {EnergyParams fields},
      "static_net":  {StaticNetConfig fields},
      "dynamic_net": {DynamicNetConfig fields},
      "train":       {TrainConfig fields},
      "scene":       {SceneConfig fields}
    }

Motion descriptors use the fixed 138-value layout documented in
``strandsim.nets.motion``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..energy import EnergyParams
from ..nets.dynamic import DynamicNetConfig
from ..nets.static import StaticNetConfig, desk_config


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 4
    phase_iters: tuple[int, int, int, int] = (2000, 2000, 4000, 4000)
    bp_start: float = 0.9
    bp_end: float = 0.01
    head_radius: float = 0.5  # largest head rotation in phase 1 (radians)
    n_latents: int = 8  # phase-2 latent set; phase 3 doubles it
    n_dancers: int = 1  # phase 2 uses one, phase 3 uses n_dancers + 3
    shape_noise: float = 0.1
    sample_interval: tuple[int, int] = (2, 5)
    score_samples: int = 500
    dyn_iters: int = 500
    dyn_lr: float = 1e-4
    dyn_sequences: int = 8
    dyn_frames: int = 90
    dyn_frames_per_update: int = 0  # frames whose losses are summed per update; 0 = whole sequence
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if not (self.lr > 0 and self.dyn_lr > 0):
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.bp_end > self.bp_start or not (0 < self.bp_end and self.bp_start < 1):
            raise ValueError("b_p schedule must be non-increasing within (0, 1)")
        if self.dyn_frames_per_update < 0:
            raise ValueError("dyn_frames_per_update must be >= 0")
        lo, hi = self.sample_interval
        if not 1 <= lo <= hi:
            raise ValueError("bad frame-sampling interval")

    @property
    def total_static_iters(self) -> int:
        return int(sum(self.phase_iters))

    def bp_at(self, k: int, total: int | None = None) -> float:
        """Geometric interpolation from bp_start (first iteration) to bp_end (last)."""
        total = self.total_static_iters if total is None else total
        if total <= 1:
            return self.bp_end
        frac = min(max(k / (total - 1), 0.0), 1.0)
        return float(self.bp_start * (self.bp_end / self.bp_start) ** frac)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phase_iters"] = list(self.phase_iters)
        d["sample_interval"] = list(self.sample_interval)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("phase_iters", "sample_interval"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class SceneConfig:
    grid: tuple[int, int] = (16, 16)  # hair root grid (M = product)
    latent: str = "long"  # "long" or "random"
    pitch_deg: float = 30.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        if "grid" in d:
            d["grid"] = tuple(d["grid"])
        return cls(**d)


@dataclass(frozen=True)
class RunConfig:
    energy: EnergyParams = EnergyParams()
    static_net: StaticNetConfig = desk_config()
    dynamic_net: DynamicNetConfig = DynamicNetConfig()
    train: TrainConfig = TrainConfig()
    scene: SceneConfig = SceneConfig()

    def to_dict(self) -> dict:
        return {
            "energy": self.energy.to_dict(),
            "static_net": self.static_net.to_dict(),
            "dynamic_net": self.dynamic_net.to_dict(),
            "train": self.train.to_dict(),
            "scene": self.scene.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"energy", "static_net", "dynamic_net", "train", "scene"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        base = cls()
        return cls(
            energy=_merge(base.energy, d.get("energy", {}), EnergyParams.from_dict),
            static_net=_merge(base.static_net, d.get("static_net", {}), StaticNetConfig.from_dict),
            dynamic_net=_merge(base.dynamic_net, d.get("dynamic_net", {}), DynamicNetConfig.from_dict),
            train=_merge(base.train, d.get("train", {}), TrainConfig.from_dict),
            scene=_merge(base.scene, d.get("scene", {}), SceneConfig.from_dict),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=int(seed)))


def _merge(base, overrides: dict, build):
    names = {f.name for f in fields(base)}
    unknown = set(overrides) - names
    if unknown:
        raise ValueError(f"unknown keys for {type(base).__name__}: {sorted(unknown)}")
    d = base.to_dict()
    d.update(overrides)
    return build(d)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as f:
        return RunConfig.from_dict(json.load(f))


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")


def scene_latent(scene: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    from ..scenes import long_hair_latent

    if scene.latent == "long":
        return long_hair_latent()
    if scene.latent == "random":
        return rng.standard_normal(512)
    raise ValueError(f"unknown latent choice {scene.latent!r}")
