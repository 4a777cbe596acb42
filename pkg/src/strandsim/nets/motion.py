"""Per-frame kinematic features for the dynamic encoder.

Layout of one descriptor (138 values):

    [0:66)    joint rotation velocities: log(R_prev^T R_cur) / dt per joint (local frames)
    [66:69)   gravity direction in the root (pelvis) frame
    [69:72)   its velocity
    [72:138)  joint accelerations in the root frame, backward second differences

Frames before the first one repeat it, so the first frames have zero velocity
and acceleration.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from ..body import N_JOINTS, BodyParams, Rig, _forward_kinematics, default_rig

DESCRIPTOR_DIM = 3 * N_JOINTS + 3 + 3 + 3 * N_JOINTS
GRAVITY_DIR = np.array([0.0, -1.0, 0.0])


class WindowError(ValueError):
    pass


def _pose_array(poses) -> np.ndarray:
    return np.stack([p.pose if isinstance(p, BodyParams) else np.asarray(p, float) for p in poses])


def motion_descriptors(poses, shape, dt: float, rig: Rig | None = None) -> np.ndarray:
    """(T, 138) descriptors for a window of T >= 3 poses."""
    rig = rig or default_rig()
    pose = _pose_array(poses)
    T = pose.shape[0]
    if T < 3:
        raise WindowError("a motion window needs at least 3 frames")
    shape = np.asarray(shape, dtype=float)
    len_scale = 1.0 + shape @ rig.length_basis

    rot = Rotation.from_rotvec(pose.reshape(-1, 3)).as_matrix().reshape(T, N_JOINTS, 3, 3)
    prev = np.concatenate([rot[:1], rot[:-1]])
    rel = np.einsum("tjba,tjbc->tjac", prev, rot)  # R_prev^T R_cur
    omega = Rotation.from_matrix(rel.reshape(-1, 3, 3)).as_rotvec().reshape(T, -1) / dt

    G = np.stack([_forward_kinematics(rig, pose[t].reshape(N_JOINTS, 3), len_scale) for t in range(T)])
    R_root = G[:, 0, :3, :3]
    grav = np.einsum("tba,b->ta", R_root, GRAVITY_DIR)
    grav_vel = np.diff(np.concatenate([grav[:1], grav]), axis=0) / dt

    joints = G[:, :, :3, 3] - G[:, :1, :3, 3]
    local = np.einsum("tba,tjb->tja", R_root, joints).reshape(T, -1)
    padded = np.concatenate([local[:1], local[:1], local])
    acc = (padded[2:] - 2 * padded[1:-1] + padded[:-2]) / (dt * dt)
    return np.concatenate([omega, grav, grav_vel, acc], axis=1)
