"""Articulated capsule body: forward kinematics, signed distance and scalp queries.

The rig is a 22-joint tree (SMPL joint order) with capsules attached to joints.
Pose is 66 axis-angle values (root orientation + 21 joints), shape is 16
coefficients acting linearly on bone lengths and capsule radii.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

N_JOINTS = 22
POSE_DIM = 66
SHAPE_DIM = 16


@dataclass(frozen=True)
class Rig:
    """Rest rig definition loaded from a JSON data file."""

    names: tuple[str, ...]
    parents: np.ndarray  # (22,)
    offsets: np.ndarray  # (22, 3) rest offset from parent
    pelvis_position: np.ndarray
    capsule_names: tuple[str, ...]
    capsule_joint: np.ndarray  # (C,)
    capsule_a: np.ndarray  # (C, 3) in joint frame
    capsule_b: np.ndarray
    capsule_radius: np.ndarray  # (C,)
    length_basis: np.ndarray  # (16, 22)
    radius_basis: np.ndarray  # (16, C)
    head_joint: int
    head_capsule: int
    roll_range: tuple[float, float]  # radians
    pitch_range: tuple[float, float]

    @classmethod
    def from_dict(cls, d: dict) -> "Rig":
        joints = d["joints"]
        caps = d["capsules"]
        if len(joints) != N_JOINTS:
            raise ValueError(f"rig must have {N_JOINTS} joints, got {len(joints)}")
        cap_names = tuple(c["name"] for c in caps)
        basis = d["shape_basis"]
        if len(basis) != SHAPE_DIM:
            raise ValueError(f"shape basis must have {SHAPE_DIM} rows")
        patch = d["scalp_patch"]
        return cls(
            names=tuple(j["name"] for j in joints),
            parents=np.array([j["parent"] for j in joints], dtype=int),
            offsets=np.array([j["offset"] for j in joints], dtype=float),
            pelvis_position=np.array(d["pelvis_position"], dtype=float),
            capsule_names=cap_names,
            capsule_joint=np.array([c["joint"] for c in caps], dtype=int),
            capsule_a=np.array([c["a"] for c in caps], dtype=float),
            capsule_b=np.array([c["b"] for c in caps], dtype=float),
            capsule_radius=np.array([c["radius"] for c in caps], dtype=float),
            length_basis=np.array([b["length"] for b in basis], dtype=float),
            radius_basis=np.array([b["radius"] for b in basis], dtype=float),
            head_joint=int(d["head_joint"]),
            head_capsule=cap_names.index(d["head_capsule"]),
            roll_range=tuple(np.deg2rad(patch["roll_deg"])),
            pitch_range=tuple(np.deg2rad(patch["pitch_deg"])),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Rig":
        if path is None:
            return default_rig()
        with open(path) as f:
            return cls.from_dict(json.load(f))


@lru_cache(maxsize=1)
def default_rig() -> Rig:
    text = resources.files("strandsim.data").joinpath("rig_default.json").read_text()
    return Rig.from_dict(json.loads(text))


@dataclass(frozen=True)
class BodyParams:
    pose: np.ndarray = field(default_factory=lambda: np.zeros(POSE_DIM))
    shape: np.ndarray = field(default_factory=lambda: np.zeros(SHAPE_DIM))

    def __post_init__(self):
        pose = np.asarray(self.pose, dtype=float).reshape(-1)
        shape = np.asarray(self.shape, dtype=float).reshape(-1)
        if pose.shape != (POSE_DIM,):
            raise ValueError(f"pose must have {POSE_DIM} entries, got {pose.size}")
        if shape.shape != (SHAPE_DIM,):
            raise ValueError(f"shape must have {SHAPE_DIM} entries, got {shape.size}")
        object.__setattr__(self, "pose", pose)
        object.__setattr__(self, "shape", shape)

    @property
    def joint_rotvecs(self) -> np.ndarray:
        return self.pose.reshape(N_JOINTS, 3)


@dataclass(frozen=True, eq=False)
class PosedBody:
    params: BodyParams
    rig: Rig
    joint_transforms: np.ndarray  # (22, 4, 4)
    cap_a: np.ndarray  # (C, 3) world
    cap_b: np.ndarray
    cap_radius: np.ndarray
    head_transform: np.ndarray  # (4, 4) global head joint transform
    head_local_a: np.ndarray  # head capsule endpoints in head joint frame
    head_local_b: np.ndarray
    head_radius: float
    rest_head_transform: np.ndarray  # head transform of the rest, mean-shape body

    @property
    def tag(self) -> str:
        digest = np.concatenate([self.params.pose, self.params.shape]).tobytes()
        return hashlib.sha1(digest).hexdigest()[:12]

    @property
    def joint_positions(self) -> np.ndarray:
        return self.joint_transforms[:, :3, 3]

    def skinning_head_transform(self) -> np.ndarray:
        """Transform carrying rest-pose world points rigidly with the head."""
        return self.head_transform @ np.linalg.inv(self.rest_head_transform)

    # -- distance queries -------------------------------------------------

    def signed_distance(self, points) -> tuple[np.ndarray, np.ndarray]:
        d, n, _ = capsule_sdf(np.asarray(points, dtype=float), self.cap_a, self.cap_b, self.cap_radius)
        return d, n

    def closest_surface_point(self, points) -> np.ndarray:
        d, n = self.signed_distance(points)
        return np.asarray(points, dtype=float) - d[..., None] * n

    def scalp_frame(self, uv) -> tuple[np.ndarray, np.ndarray]:
        return scalp_frame(self, uv)

    def head_samples(self) -> np.ndarray:
        """Fixed sample points on the posed head capsule (64 points)."""
        local = _head_capsule_points(self.head_local_a, self.head_local_b, self.head_radius)
        return local @ self.head_transform[:3, :3].T + self.head_transform[:3, 3]


def pose_body(params: BodyParams, rig: Rig | None = None) -> PosedBody:
    """Forward kinematics down the joint tree."""
    rig = rig or default_rig()
    len_scale = 1.0 + params.shape @ rig.length_basis  # (22,)
    rad_scale = 1.0 + params.shape @ rig.radius_basis
    G = _forward_kinematics(rig, params.joint_rotvecs, len_scale)

    # capsule geometry in a joint frame scales with that joint's length factor
    cap_scale = len_scale[rig.capsule_joint][:, None]
    la = rig.capsule_a * cap_scale
    lb = rig.capsule_b * cap_scale
    R = G[rig.capsule_joint, :3, :3]
    t = G[rig.capsule_joint, :3, 3]
    cap_a = np.einsum("cij,cj->ci", R, la) + t
    cap_b = np.einsum("cij,cj->ci", R, lb) + t
    radius = rig.capsule_radius * rad_scale
    if np.any(radius <= 0):
        raise ValueError("shape coefficients produce non-positive capsule radius")
    h = rig.head_capsule
    return PosedBody(
        params=params,
        rig=rig,
        joint_transforms=G,
        cap_a=cap_a,
        cap_b=cap_b,
        cap_radius=radius,
        head_transform=G[rig.head_joint].copy(),
        head_local_a=la[h],
        head_local_b=lb[h],
        head_radius=float(radius[h]),
        rest_head_transform=_rest_head_transform(rig),
    )


def rest_body(rig: Rig | None = None) -> PosedBody:
    return pose_body(BodyParams(), rig)


def _forward_kinematics(rig: Rig, rotvecs: np.ndarray, len_scale: np.ndarray) -> np.ndarray:
    R_local = Rotation.from_rotvec(rotvecs).as_matrix()
    G = np.zeros((N_JOINTS, 4, 4))
    for j in range(N_JOINTS):
        local = np.eye(4)
        local[:3, :3] = R_local[j]
        p = rig.parents[j]
        if p < 0:
            local[:3, 3] = rig.pelvis_position
            G[j] = local
        else:
            local[:3, 3] = rig.offsets[j] * len_scale[j]
            G[j] = G[p] @ local
    return G


def _rest_head_transform(rig: Rig) -> np.ndarray:
    G = _forward_kinematics(rig, np.zeros((N_JOINTS, 3)), np.ones(N_JOINTS))
    return G[rig.head_joint].copy()


# -- capsule signed distance ---------------------------------------------------


def _perpendicular(axis: np.ndarray) -> np.ndarray:
    """A fixed unit vector perpendicular to each axis (tie-break direction)."""
    axis = np.asarray(axis, dtype=float)
    ref = np.where(np.abs(axis[..., :1]) < 0.9, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    v = np.cross(axis, ref)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(nv, 1e-300)


def capsule_sdf(points, cap_a, cap_b, cap_radius):
    """Signed distance to a union of capsules (hard minimum).

    Returns ``(d, n, idx)`` where ``n`` is the unit outward gradient at the nearest
    capsule and ``idx`` its index. Ties go to the lowest capsule index. A point
    on a capsule axis gets a fixed perpendicular of that axis as normal.
    """
    x = np.asarray(points, dtype=float)
    flat = x.reshape(-1, 3)
    ab = cap_b - cap_a  # (C, 3)
    ab2 = np.einsum("ci,ci->c", ab, ab)
    safe_ab2 = np.where(ab2 > 0, ab2, 1.0)
    # capsule selection via expanded squared distances (matrix products)
    xa = flat @ cap_a.T  # (P, C)
    xab = flat @ ab.T
    x2 = np.einsum("pi,pi->p", flat, flat)[:, None]
    a2 = np.einsum("ci,ci->c", cap_a, cap_a)
    aab = np.einsum("ci,ci->c", cap_a, ab)
    apab = xab - aab
    t = np.clip(apab / safe_ab2, 0.0, 1.0)
    dist2 = x2 - 2 * xa + a2 - 2 * t * apab + t * t * ab2
    sd = np.sqrt(np.maximum(dist2, 0.0)) - cap_radius
    idx = np.argmin(sd, axis=1)  # first minimum -> lowest index
    # exact evaluation at the selected capsule
    a_i, ab_i = cap_a[idx], ab[idx]
    ap = flat - a_i
    ti = np.clip(np.einsum("pi,pi->p", ap, ab_i) / safe_ab2[idx], 0.0, 1.0)
    dv = ap - ti[:, None] * ab_i
    r = np.sqrt(np.einsum("pi,pi->p", dv, dv))
    d = r - cap_radius[idx]
    degenerate = r <= 1e-15
    n = dv / np.where(degenerate, 1.0, r)[:, None]
    if np.any(degenerate):
        axis = ab_i[degenerate]
        axis = axis / np.maximum(np.linalg.norm(axis, axis=-1, keepdims=True), 1e-300)
        n[degenerate] = _perpendicular(axis)
    shape = x.shape[:-1]
    return d.reshape(shape), n.reshape(shape + (3,)), idx.reshape(shape)


def signed_distance(body: PosedBody, point) -> tuple[np.ndarray, np.ndarray]:
    return body.signed_distance(point)


# -- scalp ---------------------------------------------------------------------


def scalp_local_normal(rig: Rig, uv) -> np.ndarray:
    """Scalp normal in the head joint frame for UV in [0,1]^2.

    u sweeps roll (right to left), v sweeps pitch (back to front). Each half of
    the unit interval maps linearly onto its side of the range so that
    (0.5, 0.5) is always the apex.
    """
    uv = np.asarray(uv, dtype=float)
    if np.any((uv < 0) | (uv > 1)):
        warnings.warn("scalp uv outside [0,1]^2 clamped", stacklevel=3)
        uv = np.clip(uv, 0.0, 1.0)
    roll = _two_sided(uv[..., 0], *rig.roll_range)
    pitch = _two_sided(uv[..., 1], *rig.pitch_range)
    cp = np.cos(pitch)
    return np.stack([np.sin(roll) * cp, np.cos(roll) * cp, np.sin(pitch)], axis=-1)


def _two_sided(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.where(x < 0.5, lo * (1.0 - 2.0 * x), hi * (2.0 * x - 1.0))


def scalp_frame(body: PosedBody, uv) -> tuple[np.ndarray, np.ndarray]:
    """Posed scalp surface point and outward normal for root UV coordinates."""
    n_local = scalp_local_normal(body.rig, uv)
    top = body.head_local_b if body.head_local_b[1] >= body.head_local_a[1] else body.head_local_a
    p_local = top + body.head_radius * n_local
    R = body.head_transform[:3, :3]
    t = body.head_transform[:3, 3]
    return p_local @ R.T + t, n_local @ R.T


def _head_capsule_points(a: np.ndarray, b: np.ndarray, radius: float, count: int = 64) -> np.ndarray:
    """Fibonacci directions mapped onto the two hemispherical caps."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    rxy = np.sqrt(1.0 - z * z)
    dirs = np.stack([rxy * np.cos(phi), z, rxy * np.sin(phi)], axis=-1)
    top, bottom = (b, a) if b[1] >= a[1] else (a, b)
    centers = np.where(dirs[:, 1:2] >= 0, top, bottom)
    return centers + radius * dirs
