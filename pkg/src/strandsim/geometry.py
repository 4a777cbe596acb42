"""Hair strands: procedural generation from a latent code, rigid posing, export."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .body import PosedBody, capsule_sdf, rest_body, scalp_frame

N_VERTICES = 100
LATENT_DIM = 512
DEFAULT_GRID = (32, 32)

# latent -> style features. Each feature is tanh of a fixed random projection,
# so the zero latent maps to all-zero features.
N_FEATURES = 7
STYLE_FEATURES = ("length", "droop", "curl_amplitude", "curl_frequency", "parting", "flow_noise", "length_spread")
_PROJECTION = np.random.default_rng(0x5EED).standard_normal((N_FEATURES, LATENT_DIM)) / np.sqrt(LATENT_DIM)

BASE_LENGTH = 0.15
HEAD_MARGIN = 2e-3


class EmptyHairstyleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HairAsset:
    strands: np.ndarray  # (M, N, 3)
    root_uv: np.ndarray  # (M, 2)
    rest_lengths: np.ndarray  # (M, N-1)
    latent: np.ndarray  # (512,)

    @property
    def n_strands(self) -> int:
        return self.strands.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.strands.shape[1]

    @classmethod
    def from_strands(cls, strands, root_uv, latent=None) -> "HairAsset":
        strands = np.asarray(strands, dtype=float)
        rest = np.linalg.norm(np.diff(strands, axis=1), axis=-1)
        if np.any(rest <= 0):
            raise ValueError("rest segment lengths must be strictly positive")
        latent = np.zeros(LATENT_DIM) if latent is None else np.asarray(latent, dtype=float)
        return cls(strands, np.asarray(root_uv, dtype=float), rest, latent)


@dataclass(frozen=True, eq=False)
class PosedHair:
    positions: np.ndarray  # (M, N, 3)
    source: HairAsset
    body_frame_tag: str = ""

    def with_positions(self, positions) -> "PosedHair":
        return PosedHair(np.asarray(positions, dtype=float), self.source, self.body_frame_tag)


def style_features(latent) -> dict[str, float]:
    f = np.tanh(_PROJECTION @ np.asarray(latent, dtype=float))
    return dict(zip(STYLE_FEATURES, f))


def latent_for_style(**features: float) -> np.ndarray:
    """Minimum-norm latent whose style features take the given values in (-1, 1).

    Unspecified features are zero.
    """
    target = np.zeros(N_FEATURES)
    for k, v in features.items():
        if not -1 < v < 1:
            raise ValueError(f"feature {k} must lie in (-1, 1)")
        target[STYLE_FEATURES.index(k)] = v
    return np.linalg.pinv(_PROJECTION) @ np.arctanh(target)


def _grid_uv(grid: tuple[int, int]) -> np.ndarray:
    mw, mh = grid
    u = (np.arange(mw) + 0.5) / mw
    v = (np.arange(mh) + 0.5) / mh
    uu, vv = np.meshgrid(u, v, indexing="xy")
    return np.stack([uu.ravel(), vv.ravel()], axis=-1)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def generate_procedural_hair(
    latent,
    grid: tuple[int, int] = DEFAULT_GRID,
    min_length: float = 0.0,
    n_vertices: int = N_VERTICES,
    body: PosedBody | None = None,
) -> HairAsset:
    """Deterministic strands rooted on a UV grid over the rest scalp.

    The latent drives length, droop toward gravity, curl amplitude and
    frequency, parting sweep, flow noise and per-strand length spread. Strands
    are marched from the root and kept out of the head capsule only; the rest
    of the body is ignored, so long styles may penetrate the torso.
    """
    latent = np.asarray(latent, dtype=float)
    if latent.shape != (LATENT_DIM,) or not np.all(np.isfinite(latent)):
        raise ValueError("latent must be a finite 512-vector")
    if grid[0] * grid[1] < 1:
        raise ValueError("grid must contain at least one root")
    body = body or rest_body()
    f = style_features(latent)

    uv = _grid_uv(grid)
    M, N = uv.shape[0], n_vertices
    root, normal = scalp_frame(body, uv)

    fixed = np.random.default_rng(1234)
    noise_len = fixed.standard_normal(M)
    noise_dir = fixed.standard_normal((M, 3))
    phase = fixed.uniform(0, 2 * np.pi, M)

    length = BASE_LENGTH * np.exp(1.1 * f["length"]) * np.exp(0.3 * f["length_spread"] * noise_len)
    droop = 1.0 - np.exp(-3.0 * f["droop"] ** 2)
    curl_amp = 0.012 * f["curl_amplitude"] ** 2
    curl_cycles = 4.0 * (1.0 + 0.5 * f["curl_frequency"])
    sweep = 0.6 * (1.0 - np.exp(-3.0 * f["parting"] ** 2))
    part_u = 0.5 + 0.25 * f["parting"]
    flow = 0.3 * f["flow_noise"] ** 2

    R = body.head_transform[:3, :3]
    down = np.array([0.0, -1.0, 0.0])
    lateral = (R @ np.array([1.0, 0.0, 0.0]))[None] * (sweep * np.tanh((uv[:, 0] - part_u) / 0.08))[:, None]
    wander = flow * noise_dir

    seg = (length / (N - 1))[:, None]
    t = np.linspace(0.0, 1.0, N)
    bend = (1.0 - np.exp(-t / 0.08)) / (1.0 - np.exp(-1.0 / 0.08))

    head = body.rig.head_capsule
    ha, hb, hr = body.cap_a[head : head + 1], body.cap_b[head : head + 1], body.cap_radius[head : head + 1]

    center = np.empty((M, N, 3))
    center[:, 0] = root
    for k in range(1, N):
        w = droop * bend[k]
        d = (1.0 - w) * normal + w * (down + lateral + wander)
        d = _unit(d)
        p = center[:, k - 1] + seg * d
        sd, n, _ = capsule_sdf(p, ha, hb, hr)
        inside = sd < 0.0
        p[inside] += (HEAD_MARGIN - sd[inside])[:, None] * n[inside]
        center[:, k] = p

    strands = center
    if curl_amp > 0:
        tangent = np.gradient(center, axis=1)
        tangent = _unit(tangent)
        ref = np.where(np.abs(tangent[..., 1:2]) < 0.9, [0.0, 1.0, 0.0], [1.0, 0.0, 0.0])
        b1 = _unit(np.cross(tangent, ref))
        b2 = np.cross(tangent, b1)
        ang = 2 * np.pi * curl_cycles * t[None] + phase[:, None]
        ramp = np.minimum(1.0, t / 0.15)[None, :, None]
        strands = center + curl_amp * ramp * (np.cos(ang)[..., None] * b1 + np.sin(ang)[..., None] * b2)
        strands = _push_out(strands, ha, hb, hr)
        strands[:, 0] = root

    total = np.linalg.norm(np.diff(strands, axis=1), axis=-1).sum(axis=1)
    keep = total >= min_length
    if not np.any(keep):
        raise EmptyHairstyleError("empty hairstyle: every strand was filtered out")
    return HairAsset.from_strands(strands[keep], uv[keep], latent.copy())


def _push_out(points, a, b, r):
    sd, n, _ = capsule_sdf(points, a, b, r)
    inside = sd < 0.0
    out = points.copy()
    out[inside] += (HEAD_MARGIN - sd[inside])[..., None] * n[inside]
    return out


def _check_rigid(M: np.ndarray, tol: float = 1e-6) -> None:
    A = M[:3, :3]
    if not np.all(np.isfinite(M)) or abs(np.linalg.det(A) - 1.0) > tol or np.abs(A.T @ A - np.eye(3)).max() > tol:
        raise ValueError("non-rigid head transform")


def rigid_pose_hair(asset: HairAsset, body: PosedBody) -> PosedHair:
    """Carry rest hair with the head, then snap each root onto the posed scalp.

    p_rigid = M_head p_init + t_align + t_root[s]
    """
    M = body.skinning_head_transform()
    _check_rigid(M)
    R, t = M[:3, :3], M[:3, 3]
    moved = asset.strands @ R.T + t

    rest = rest_body(body.rig)
    posed_samples = body.head_samples()
    rest_samples = rest.head_samples() @ R.T + t
    t_align = (posed_samples - rest_samples).mean(axis=0)
    moved = moved + t_align

    roots = moved[:, 0]
    snap = body.closest_surface_point(roots) - roots
    return PosedHair(moved + snap[:, None, :], asset, body.tag)


# -- export ----------------------------------------------------------------

_MAGIC = b"HSTR"


def write_obj(path: str | Path, positions) -> None:
    P = np.asarray(positions, dtype=float)
    M, N, _ = P.shape
    with open(path, "w") as f:
        f.write(f"# strands {M} vertices {N}\n")
        for p in P.reshape(-1, 3):
            f.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for s in range(M):
            idx = " ".join(str(s * N + v + 1) for v in range(N))
            f.write(f"l {idx}\n")


def read_obj(path: str | Path) -> np.ndarray:
    verts, lines = [], []
    with open(path) as f:
        for line in f:
            if line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:4]])
            elif line.startswith("l "):
                lines.append([int(x) - 1 for x in line.split()[1:]])
    V = np.array(verts)
    lengths = {len(l) for l in lines}
    if len(lengths) != 1:
        raise ValueError("polylines have differing vertex counts")
    return np.stack([V[l] for l in lines])


def write_binary(path: str | Path, positions) -> None:
    P = np.asarray(positions, dtype="<f4")
    M, N, _ = P.shape
    with open(path, "wb") as f:
        f.write(_MAGIC + struct.pack("<III", M, N, 0))
        f.write(np.ascontiguousarray(P).tobytes())


def read_binary(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if header[:4] != _MAGIC:
            raise ValueError("not a strand file (bad magic)")
        M, N, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(M * N * 12), dtype="<f4")
    return data.reshape(M, N, 3).astype(float)


ASSET_FORMAT = "strandsim-asset/1"


def save_asset(path: str | Path, asset: HairAsset, extra: dict | None = None) -> Path:
    """Writes ``<path>.json`` (latent, root uv, blob hash) and ``<path>.bin`` (float64 strands)."""
    base = Path(path).with_suffix("")
    blob = np.ascontiguousarray(asset.strands, dtype="<f8").tobytes()
    base.with_suffix(".bin").write_bytes(blob)
    header = {
        "format": ASSET_FORMAT,
        "n_strands": asset.n_strands,
        "n_vertices": asset.n_vertices,
        "blob": base.with_suffix(".bin").name,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "root_uv": asset.root_uv.tolist(),
        "latent": asset.latent.tolist(),
        "extra": extra or {},
    }
    out = base.with_suffix(".json")
    out.write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")
    return out


def load_asset(path: str | Path) -> HairAsset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"hair asset not found: {path}")
    header = json.loads(path.read_text())
    if header.get("format") != ASSET_FORMAT:
        raise ValueError(f"{path} is not a hair asset file")
    blob = (path.parent / header["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise ValueError(f"asset blob hash mismatch for {path}")
    strands = np.frombuffer(blob, dtype="<f8").reshape(header["n_strands"], header["n_vertices"], 3).astype(float)
    return HairAsset.from_strands(strands, np.array(header["root_uv"], dtype=float), np.array(header["latent"]))
