import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from strandsim.body import (POSE_DIM, SHAPE_DIM, BodyParams, Rig, capsule_sdf, default_rig, pose_body, rest_body,
                            scalp_frame)
from strandsim.scenes import head_pitch_pose

from oracles import capsule_distance_sampled, capsule_surface_samples

poses = st.lists(st.floats(-0.8, 0.8), min_size=POSE_DIM, max_size=POSE_DIM).map(np.array)


def test_param_lengths_validated():
    with pytest.raises(ValueError):
        BodyParams(np.zeros(65), np.zeros(SHAPE_DIM))
    with pytest.raises(ValueError):
        BodyParams(np.zeros(POSE_DIM), np.zeros(10))


def test_rig_data_file():
    rig = default_rig()
    assert len(rig.names) == 22 and len(rig.capsule_names) >= 19
    assert np.all(rig.capsule_radius > 0)
    assert rig.parents[0] == -1 and np.all(rig.parents[1:] < np.arange(1, 22))
    assert Rig.load() is rig


def test_rest_forward_kinematics_is_translation_chain():
    body = rest_body()
    rig = body.rig
    np.testing.assert_allclose(body.head_transform, body.rest_head_transform, atol=1e-15)
    for j in range(22):
        np.testing.assert_allclose(body.joint_transforms[j, :3, :3], np.eye(3), atol=1e-15)
        expect = rig.pelvis_position if rig.parents[j] < 0 else body.joint_positions[rig.parents[j]] + rig.offsets[j]
        np.testing.assert_allclose(body.joint_positions[j], expect, atol=1e-15)


def test_root_rotation_rotates_every_capsule_about_pelvis():
    rest = rest_body()
    pose = np.zeros(POSE_DIM)
    pose[:3] = [0.0, np.pi / 2, 0.0]
    body = pose_body(BodyParams(pose))
    R = Rotation.from_rotvec([0.0, np.pi / 2, 0.0]).as_matrix()
    c = rest.rig.pelvis_position
    for rest_pts, posed in ((rest.cap_a, body.cap_a), (rest.cap_b, body.cap_b)):
        np.testing.assert_allclose(posed, (rest_pts - c) @ R.T + c, atol=1e-9)


def test_first_shape_coefficient_scales_bones():
    rest = rest_body()
    shape = np.zeros(SHAPE_DIM)
    shape[0] = 1.0
    body = pose_body(BodyParams(np.zeros(POSE_DIM), shape))
    rig = rest.rig
    for j in range(1, 22):
        p = rig.parents[j]
        bone = body.joint_positions[j] - body.joint_positions[p]
        np.testing.assert_allclose(bone, 1.05 * rig.offsets[j], atol=1e-9)


def test_rotation_blocks_orthonormal():
    rng = np.random.default_rng(0)
    body = pose_body(BodyParams(rng.uniform(-1, 1, POSE_DIM), rng.uniform(-1, 1, SHAPE_DIM)))
    R = body.joint_transforms[:, :3, :3]
    np.testing.assert_allclose(np.einsum("jab,jac->jbc", R, R), np.broadcast_to(np.eye(3), R.shape), atol=1e-6)
    assert np.all(body.cap_radius > 0)


@given(pose=poses, a=st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3))
def test_property_root_composition(pose, a):
    # root rotation A composed with B equals posing with B then rotating by A about the pelvis
    A = Rotation.from_rotvec(a)
    B = Rotation.from_rotvec(pose[:3])
    composed = pose.copy()
    composed[:3] = (A * B).as_rotvec()
    left = pose_body(BodyParams(composed))
    right = pose_body(BodyParams(pose))
    c = right.rig.pelvis_position
    np.testing.assert_allclose(left.joint_positions, (right.joint_positions - c) @ A.as_matrix().T + c, atol=1e-9)


# -- signed distance --------------------------------------------------------------------


def test_sdf_surface_and_centre_points():
    body = rest_body()
    c = 5
    a, b, r = body.cap_a[c], body.cap_b[c], body.cap_radius[c]
    mid = 0.5 * (a + b)
    axis = (b - a) / np.linalg.norm(b - a)
    perp = np.cross(axis, [1.0, 0.0, 0.0])
    perp /= np.linalg.norm(perp)
    d, n, idx = capsule_sdf(mid[None], body.cap_a[c:c + 1], body.cap_b[c:c + 1], body.cap_radius[c:c + 1])
    assert d[0] == pytest.approx(-r) and np.linalg.norm(n[0]) == pytest.approx(1.0)
    d, _, _ = capsule_sdf((mid + r * perp)[None], body.cap_a[c:c + 1], body.cap_b[c:c + 1], body.cap_radius[c:c + 1])
    assert d[0] == pytest.approx(0.0, abs=1e-15)


def test_sdf_far_points_match_surface_sampling():
    body = rest_body()
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, (20, 3)) + np.array([0.0, 1.0, 0.0])
    d, _ = body.signed_distance(pts)
    ref = np.stack([capsule_distance_sampled(pts, a, b, r, 20_001)
                    for a, b, r in zip(body.cap_a, body.cap_b, body.cap_radius)]).min(axis=0)
    keep = ref > 0.05
    np.testing.assert_allclose(d[keep], ref[keep], atol=1e-6)
    surf = np.concatenate([capsule_surface_samples(a, b, r, 48, 48, 24)
                           for a, b, r in zip(body.cap_a, body.cap_b, body.cap_radius)])
    by_surface = np.linalg.norm(pts[:, None] - surf[None], axis=-1).min(axis=1)
    # outside every capsule the SDF is the distance to the union's surface, never more
    assert np.all(d[keep] <= by_surface[keep] + 1e-12)


def test_sdf_ties_go_to_lowest_capsule():
    a = np.array([[0.0, 0, 0], [0.0, 0, 0]])
    b = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    _, _, idx = capsule_sdf(np.array([[0.5, 1.0, 0.0]]), a, b, np.array([0.1, 0.1]))
    assert idx[0] == 0


def test_sdf_on_axis_normal_is_unit():
    a, b = np.array([[0.0, 0, 0]]), np.array([[0.0, 1.0, 0]])
    d, n, _ = capsule_sdf(np.array([[0.0, 0.5, 0.0]]), a, b, np.array([0.1]))
    assert d[0] == pytest.approx(-0.1)
    assert np.linalg.norm(n[0]) == pytest.approx(1.0) and abs(n[0] @ [0, 1, 0]) < 1e-12


@given(seed=st.integers(0, 10_000))
def test_property_sdf_is_one_lipschitz_with_unit_normals(seed):
    rng = np.random.default_rng(seed)
    body = pose_body(BodyParams(rng.uniform(-0.5, 0.5, POSE_DIM)))
    x = rng.uniform(-0.8, 0.8, (200, 3)) + [0.0, 1.0, 0.0]
    y = x + rng.normal(0, 0.05, x.shape)
    dx, nx = body.signed_distance(x)
    dy, _ = body.signed_distance(y)
    assert np.all(np.abs(dx - dy) <= np.linalg.norm(x - y, axis=1) + 1e-12)
    np.testing.assert_allclose(np.linalg.norm(nx, axis=1), 1.0, atol=1e-6)


def test_closest_surface_point_is_on_surface():
    body = rest_body()
    pts = np.random.default_rng(4).uniform(-0.5, 0.5, (50, 3)) + [0.0, 1.2, 0.0]
    d, _ = body.signed_distance(body.closest_surface_point(pts))
    assert np.abs(d).max() < 1e-9


# -- scalp ------------------------------------------------------------------------------


def test_scalp_apex():
    body = rest_body()
    p, n = scalp_frame(body, np.array([0.5, 0.5]))
    h = body.rig.head_capsule
    top = max(body.cap_a[h], body.cap_b[h], key=lambda q: q[1])
    np.testing.assert_allclose(n, [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(p, top + body.cap_radius[h] * n, atol=1e-12)
    centre = 0.5 * (body.cap_a[h] + body.cap_b[h])
    assert (p - centre) @ n > 0


@given(u=st.floats(0, 1), v=st.floats(0, 1))
def test_property_scalp_points_on_surface(u, v):
    body = rest_body()
    p, n = scalp_frame(body, np.array([u, v]))
    d, _ = body.signed_distance(p)
    assert abs(float(d)) < 1e-6
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-9)


def test_scalp_normal_follows_head_rotation():
    rest = rest_body()
    body = pose_body(BodyParams(head_pitch_pose(30.0)))
    uv = np.random.default_rng(1).uniform(0, 1, (10, 2))
    _, n0 = scalp_frame(rest, uv)
    _, n1 = scalp_frame(body, uv)
    R = body.skinning_head_transform()[:3, :3]
    np.testing.assert_allclose(n1, n0 @ R.T, atol=1e-6)


def test_scalp_uv_outside_unit_square_warns():
    with pytest.warns(UserWarning):
        scalp_frame(rest_body(), np.array([1.5, 0.5]))
