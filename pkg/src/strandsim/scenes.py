"""Reusable desk-scale scenes."""

from __future__ import annotations

import numpy as np

from .body import BodyParams, PosedBody, pose_body
from .geometry import HairAsset, generate_procedural_hair, latent_for_style

NECK, HEAD = 12, 15


def long_hair_latent() -> np.ndarray:
    return latent_for_style(length=0.9, droop=0.9)


def head_pitch_pose(pitch_deg: float) -> np.ndarray:
    """Pose vector pitching the head about the body's x axis, split over neck and head."""
    pose = np.zeros(66)
    half = np.deg2rad(pitch_deg) / 2
    pose[3 * NECK] = half
    pose[3 * HEAD] = half
    return pose


def tilted_head_scene(grid=(16, 16), pitch_deg: float = 30.0) -> tuple[HairAsset, PosedBody]:
    """Long procedural hair on a capsule body with the head pitched."""
    asset = generate_procedural_hair(long_hair_latent(), grid=grid)
    body = pose_body(BodyParams(head_pitch_pose(pitch_deg), np.zeros(16)))
    return asset, body
