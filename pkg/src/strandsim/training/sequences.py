"""Synthetic pose sequences standing in for motion-capture data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..body import POSE_DIM, SHAPE_DIM

FPS = 60.0
NECK, HEAD = 12, 15
L_HIP, R_HIP, L_KNEE, R_KNEE = 1, 2, 4, 5
L_SHOULDER, R_SHOULDER = 16, 17
KINDS = ("head_ellipsoid", "walk", "whiplash", "oscillate")


@dataclass
class PoseSequence:
    poses: np.ndarray  # (T, 66)
    shape: np.ndarray = field(default_factory=lambda: np.zeros(SHAPE_DIM))
    fps: float = FPS
    kind: str = ""

    def __len__(self) -> int:
        return self.poses.shape[0]

    def subsample(self, interval: int) -> "PoseSequence":
        return PoseSequence(self.poses[::interval].copy(), self.shape.copy(), self.fps, self.kind)


@dataclass
class PoseSequenceSet:
    sequences: list[PoseSequence]
    scores: np.ndarray

    def filter_by_median(self) -> "PoseSequenceSet":
        """Keep sequences scoring at least the median score."""
        keep = self.scores >= np.median(self.scores)
        seqs = [s for s, k in zip(self.sequences, keep) if k]
        return PoseSequenceSet(seqs, self.scores[keep])


def dynamic_score(seq: PoseSequence) -> float:
    """Mean over frames of the norm of joint-angle differences per second."""
    if len(seq) < 2:
        return 0.0
    step = np.linalg.norm(np.diff(seq.poses, axis=0), axis=1)
    return float(step.mean() * seq.fps)


def _head_split(rotvec: np.ndarray) -> np.ndarray:
    """Frames of head rotation vectors (T, 3) spread evenly over neck and head."""
    pose = np.zeros((rotvec.shape[0], POSE_DIM))
    pose[:, 3 * NECK : 3 * NECK + 3] = 0.5 * rotvec
    pose[:, 3 * HEAD : 3 * HEAD + 3] = 0.5 * rotvec
    return pose


def head_ellipsoid(radius: float, frames: int, rng: np.random.Generator,
                   axes=(0.6, 1.0, 0.4)) -> PoseSequence:
    """Head rotations on an ellipsoid of the given radius (radians) in (pitch, yaw, roll)."""
    u = rng.standard_normal((frames, 3))
    u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-12)
    rotvec = radius * np.asarray(axes) * u
    return PoseSequence(_head_split(rotvec), kind="head_ellipsoid")


def oscillate(frames: int, rng: np.random.Generator, amplitude: float | None = None,
              frequency: float | None = None) -> PoseSequence:
    """Sinusoidal head yaw."""
    amp = rng.uniform(0.3, 0.6) if amplitude is None else amplitude
    freq = rng.uniform(0.8, 1.5) if frequency is None else frequency
    t = np.arange(frames) / FPS
    rotvec = np.zeros((frames, 3))
    rotvec[:, 1] = amp * np.sin(2 * np.pi * freq * t)
    return PoseSequence(_head_split(rotvec), kind="oscillate")


def whiplash(frames: int, rng: np.random.Generator, angle: float | None = None,
             duration: float | None = None) -> PoseSequence:
    """A fast head yaw that then holds still.

    The turn follows a smoothstep over ``duration`` seconds starting at 0.2 s,
    so the peak angular speed falls in the middle of the turn.
    """
    ang = rng.uniform(0.6, 1.0) * rng.choice([-1.0, 1.0]) if angle is None else angle
    dur = rng.uniform(0.15, 0.3) if duration is None else duration
    t = np.arange(frames) / FPS
    s = np.clip((t - 0.2) / dur, 0.0, 1.0)
    rotvec = np.zeros((frames, 3))
    rotvec[:, 1] = ang * s * s * (3 - 2 * s)
    return PoseSequence(_head_split(rotvec), kind="whiplash")


def walk(frames: int, rng: np.random.Generator) -> PoseSequence:
    """Leg and arm swing with a small head bob."""
    freq = rng.uniform(0.8, 1.2)
    amp = rng.uniform(0.3, 0.5)
    ph = 2 * np.pi * freq * np.arange(frames) / FPS
    pose = np.zeros((frames, POSE_DIM))
    swing = amp * np.sin(ph)
    pose[:, 3 * L_HIP] = swing
    pose[:, 3 * R_HIP] = -swing
    pose[:, 3 * L_KNEE] = amp * np.maximum(0.0, -np.sin(ph))
    pose[:, 3 * R_KNEE] = amp * np.maximum(0.0, np.sin(ph))
    pose[:, 3 * L_SHOULDER] = -0.5 * swing
    pose[:, 3 * R_SHOULDER] = 0.5 * swing
    bob = 0.05 * np.sin(2 * ph)
    pose[:, 3 * NECK] += 0.5 * bob
    pose[:, 3 * HEAD] += 0.5 * bob
    return PoseSequence(pose, kind="walk")


def synth_pose_sequences(kind: str, count: int, rng: np.random.Generator, frames: int = 120,
                         radius: float = 0.5) -> PoseSequenceSet:
    """``count`` sequences of one kind at 60 fps, with their dynamic scores."""
    if kind not in KINDS:
        raise ValueError(f"unknown sequence kind {kind!r}; choose from {KINDS}")
    seqs = []
    for _ in range(count):
        if kind == "head_ellipsoid":
            seqs.append(head_ellipsoid(radius, frames, rng))
        elif kind == "oscillate":
            seqs.append(oscillate(frames, rng))
        elif kind == "whiplash":
            seqs.append(whiplash(frames, rng))
        else:
            seqs.append(walk(frames, rng))
    return PoseSequenceSet(seqs, np.array([dynamic_score(s) for s in seqs]))
