import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strandsim.body import BodyParams, pose_body, rest_body
from strandsim.energy import (DYNAMIC_TERMS, STATIC_TERMS, EnergyParams, EnergyReport, barrier, total_dynamic_loss,
                              total_static_loss)
from strandsim.energy import contact, terms
from strandsim.geometry import HairAsset

from oracles import contact_scene, random_strands

EPS = 1e-7


def straight(M=1, N=5, seg=0.01):
    P = np.zeros((M, N, 3))
    P[:, :, 1] = -seg * np.arange(N)
    P[:, :, 0] = 0.05 * np.arange(M)[:, None]
    return P


# -- inextensibility -------------------------------------------------------------


def test_stretch_zero_at_rest(rng):
    P = random_strands(rng, 3, 8)
    rest = np.linalg.norm(np.diff(P, axis=1), axis=-1)
    assert terms.inextensibility(P, rest, 50.0)[0] == 0.0


def test_stretch_single_segment_doubled():
    P = np.array([[[0.0, 0, 0], [2.0, 0, 0]]])
    value, grad = terms.inextensibility(P, np.array([[1.0]]), 1.0)
    assert value == pytest.approx(1.0)
    assert np.all(grad == 0)  # both vertices are fixed


# -- bending ---------------------------------------------------------------------


def test_bending_straight_strand_only_sees_normalization_eps():
    # unit vectors are e / (|e| + eps), so a straight joint has cos = (l / (l + eps))^2
    seg = 0.01
    value, _ = terms.bending(straight(N=10, seg=seg), 1.0, EPS)
    assert value == pytest.approx(8 * np.arccos((seg / (seg + EPS)) ** 2), rel=1e-6)


def test_bending_straight_strand_within_clamp_bound_for_long_edges():
    # cos = 1 - 2 eps / l is clamped at 1 - eps once l >= 2
    value, _ = terms.bending(straight(N=10, seg=2.5), 1.0, EPS)
    assert value <= 8 * np.arccos(1 - EPS) * (1 + 1e-9)


def test_bending_right_angle():
    P = np.array([[[0.0, 0, 0], [1.0, 0, 0], [1.0, 1.0, 0]]])
    value, _ = terms.bending(P, 1.0, EPS)
    assert value == pytest.approx(np.pi / 2, abs=1e-6)


def test_bending_zero_length_segment_contributes_nothing():
    P = np.array([[[0.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0], [1.0, 1.0, 0]]])
    value, grad = terms.bending(P, 1.0, EPS)
    assert value == 0.0
    assert np.all(np.isfinite(grad))


def test_bending_normalized_flag_divides_by_joint_count(rng):
    P = random_strands(rng, 3, 7)
    raw = terms.bending(P, 1.0, EPS)[0]
    assert terms.bending(P, 1.0, EPS, normalize=True)[0] == pytest.approx(raw / (3 * 5))


# -- auxiliary, smoothness, gravity ------------------------------------------------


def test_aux_zero_and_uniform_offset(rng):
    P = random_strands(rng, 3, 6)
    assert terms.auxiliary(P, P, 1.0)[0] == 0.0
    delta = np.array([0.01, -0.02, 0.005])
    value, _ = terms.auxiliary(P + delta, P, 2.0)
    assert value == pytest.approx(2.0 * delta @ delta / 3)


def test_aux_gradient_closed_form(rng):
    P, R = random_strands(rng, 2, 6), random_strands(rng, 2, 6)
    _, g = terms.auxiliary(P, R, 1.5)
    expect = 2 * 1.5 * (P - R) / (3 * 2 * 6)
    expect[:, :2] = 0
    np.testing.assert_allclose(g, expect, rtol=1e-12)


def test_smoothness_examples():
    assert terms.smoothness(straight(N=6), 1.0)[0] == pytest.approx(0.0, abs=1e-30)
    P = np.array([[[0.0, 0, 0], [1.0, 0, 0], [2.0, 1.0, 0]]])
    assert terms.smoothness(P, 1.0)[0] == pytest.approx(1.0)


def test_gravity_lowering_and_fixed_vertices(rng):
    P = random_strands(rng, 3, 6)
    m, g = 1e-5, (0.0, -9.81, 0.0)
    v0, grad = terms.gravity(P, m, g)
    lowered = P.copy()
    lowered[:, 2:, 1] -= 0.1
    assert terms.gravity(lowered, m, g)[0] == pytest.approx(v0 - 3 * 4 * m * 9.81 * 0.1)
    moved_roots = P.copy()
    moved_roots[:, :2] += 1.0
    assert terms.gravity(moved_roots, m, g)[0] == v0
    np.testing.assert_array_equal(grad[:, 2:], np.broadcast_to(-m * np.array(g), grad[:, 2:].shape))
    assert np.all(grad[:, :2] == 0)


# -- root alignment ----------------------------------------------------------------


def _root_scene(sign):
    P = straight(M=2, N=6)
    normals = np.tile([0.0, -sign, 0.0], (2, 1))
    return P, normals


def test_root_alignment_parallel_and_antiparallel():
    seg, eps = 0.01, 1e-8
    shrink = seg / (seg + eps)
    P, n = _root_scene(1.0)
    assert terms.root_alignment(P, n, 0.1, 3, eps)[0] == pytest.approx(0.1 * (1 - shrink), rel=1e-9)
    P, n = _root_scene(-1.0)
    assert terms.root_alignment(P, n, 0.1, 3, eps)[0] == pytest.approx(0.1 * (1 + shrink), rel=1e-9)


# -- inertia -------------------------------------------------------------------------


def test_inertia_constant_velocity_is_zero(rng):
    P2 = random_strands(rng, 2, 6)
    v = rng.normal(0, 1e-3, P2.shape)
    P1, P0 = P2 + v, P2 + 2 * v
    value, grad = terms.inertia(P0, P1, P2, 1.0, 1e-5, 1 / 60)
    assert value == pytest.approx(0.0, abs=1e-20)
    assert np.abs(grad).max() < 1e-15


def test_inertia_single_vertex_closed_form():
    P = straight(M=2, N=5)
    delta = np.array([0.0, 0.003, -0.004])
    Pt = P.copy()
    Pt[1, 3] += delta
    lam, m, dt = 2.0, 1e-5, 1 / 60
    value, _ = terms.inertia(Pt, P, P, lam, m, dt)
    assert value == pytest.approx(lam * m * (delta @ delta) / (2 * dt**2 * 2 * 3))


def test_inertia_history_gets_no_gradient(rng):
    P = random_strands(rng, 2, 6)
    Ptm1 = P + rng.normal(0, 1e-3, P.shape)
    Ptm2 = P + rng.normal(0, 1e-3, P.shape)
    params = EnergyParams()
    asset = HairAsset.from_strands(P, np.full((2, 2), 0.5))
    rep = total_dynamic_loss(P, Ptm1, Ptm2, P, rest_body(), asset, params)
    rep2 = total_dynamic_loss(P, Ptm1 + 1e-3, Ptm2, P, rest_body(), asset, params)
    assert rep.terms["inertia"] != rep2.terms["inertia"]
    # the report only carries a gradient for the current frame
    assert rep.grad.shape == P.shape


# -- contact -------------------------------------------------------------------------


def test_hair_body_zero_far_from_body():
    params = EnergyParams()
    P = straight(M=2, N=6) + np.array([5.0, 5.0, 5.0])
    value, grad = contact.hair_body(P, rest_body(), params.hb_coeffs(), params.lam_contact)
    assert value == 0.0 and np.all(grad == 0)


def test_hair_body_deep_vertex_is_finite_and_positive():
    params = EnergyParams()
    body = rest_body()
    h = body.rig.head_capsule
    centre = 0.5 * (body.cap_a[h] + body.cap_b[h])
    P = straight(M=1, N=4) + np.array([5.0, 5.0, 5.0])
    P[0, 3] = centre
    value, grad = contact.hair_body(P, body, params.hb_coeffs(), params.lam_contact)
    assert np.isfinite(value) and value > 0
    assert np.all(np.isfinite(grad))


def test_hair_body_moving_along_normal_reduces_loss():
    params = EnergyParams()
    body = rest_body()
    h = body.rig.head_capsule
    centre = 0.5 * (body.cap_a[h] + body.cap_b[h])
    P = straight(M=1, N=4) + np.array([5.0, 5.0, 5.0])
    P[0, 3] = centre + np.array([0.0, 0.0, body.cap_radius[h] - 2e-3])
    _, n = body.signed_distance(P[0, 3])
    v0, _ = contact.hair_body(P, body, params.hb_coeffs(), params.lam_contact)
    P[0, 3] += 1e-4 * n
    v1, _ = contact.hair_body(P, body, params.hb_coeffs(), params.lam_contact)
    assert v1 < v0


def _two_strand_scene(gap):
    # strand 0 along x, strand 1 along z; their third segments cross at distance gap
    P = np.zeros((2, 5, 3))
    P[0, :, 0] = np.linspace(-0.02, 0.02, 5) + 0.005
    P[1, :, 2] = np.linspace(-0.02, 0.02, 5) + 0.005
    P[1, :, 1] = gap
    return P


def test_hair_hair_far_apart_is_zero():
    params = EnergyParams()
    co = params.hh_coeffs()
    value, grad = contact.hair_hair(_two_strand_scene(2 * co.cutoff), co, params.lam_contact)
    assert value == 0.0 and np.all(grad == 0)


def test_hair_hair_crossing_at_zero_distance():
    params = EnergyParams()
    co = params.hh_coeffs()
    value, _, pairs = contact.hair_hair(_two_strand_scene(0.0), co, params.lam_contact, return_pairs=True)
    assert len(pairs) == 1
    assert value == pytest.approx(params.lam_contact * barrier(np.array([0.0]), co)[0], rel=1e-12)


def test_hair_hair_excludes_nearby_segments_of_one_strand():
    P = np.zeros((1, 6, 3))
    P[0, :, 0] = 1e-5 * np.arange(6)  # all segments far closer than the cutoff
    pairs = contact.close_pairs(P, 1e-3, window=2)
    i, j = pairs[:, 0], pairs[:, 1]
    assert np.all(np.abs(i - j) > 2)
    assert len(pairs) == len(contact.brute_force_pairs(P, 1e-3, 2))


def test_hash_pairs_equal_brute_force_small_scene():
    params = EnergyParams()
    rng = np.random.default_rng(3)
    P = random_strands(rng, 4, 10, seg=2e-4, jitter=1.0, origin_spread=3e-4)
    r = params.hh_coeffs().cutoff
    hashed = contact.close_pairs(P, r)
    brute = contact.brute_force_pairs(P, r)
    brute = brute[np.lexsort((brute[:, 1], brute[:, 0]))]
    assert len(brute) > 0
    np.testing.assert_array_equal(hashed, brute)


# -- totals --------------------------------------------------------------------------


def _asset_for(P):
    return HairAsset.from_strands(P, np.full((P.shape[0], 2), 0.5))


def test_total_static_all_weights_zero():
    P, P_rigid, *_ = contact_scene(0)
    body = rest_body()
    params = EnergyParams(k_s=0, k_b=0, lam_aux=0, lam_smooth=0, lam_contact=0, lam_root=0, mass=0)
    rep = total_static_loss(P, P_rigid, body, _asset_for(P_rigid), params)
    assert rep.total == 0.0
    assert np.all(rep.grad == 0)


def test_report_total_is_sum_of_terms():
    P, P_rigid, P1, P2, _, body = contact_scene(1)
    params = EnergyParams()
    asset = _asset_for(P_rigid)
    rep = total_static_loss(P, P_rigid, body, asset, params)
    assert tuple(rep.terms) == STATIC_TERMS
    assert rep.total == sum(rep.terms.values())
    dyn = total_dynamic_loss(P, P1, P2, P_rigid, body, asset, params, func_reg=0.25)
    assert tuple(dyn.terms) == DYNAMIC_TERMS
    assert dyn.terms["func_reg"] == 0.25
    assert dyn.total == pytest.approx(sum(dyn.terms.values()))


def test_report_json_round_trip():
    P, P_rigid, *_ , body = contact_scene(2)
    rep = total_static_loss(P, P_rigid, body, _asset_for(P_rigid), EnergyParams())
    back = EnergyReport.from_json(rep.to_json())
    assert back.terms == rep.terms


def test_params_validation():
    for bad in (dict(xi_hb=0.0), dict(b_p=1.0), dict(dt=0.0), dict(k_s=-1.0)):
        with pytest.raises(ValueError):
            EnergyParams(**bad)


# -- properties ------------------------------------------------------------------------


@given(seed=st.integers(0, 10_000))
def test_property_fixed_vertex_gradients_are_zero(seed):
    P, P_rigid, P1, P2, normals, body = contact_scene(seed % 50)
    rep = total_dynamic_loss(P, P1, P2, P_rigid, body, _asset_for(P_rigid), EnergyParams(), normals=normals)
    assert np.all(rep.grad[:, :2] == 0)


@given(seed=st.integers(0, 10_000))
def test_property_terms_non_negative_except_gravity(seed):
    rng = np.random.default_rng(seed)
    P = random_strands(rng, 3, 8) + np.array([0.0, 1.6, 0.1])
    P_rigid = P + rng.normal(0, 1e-3, P.shape)
    rep = total_static_loss(P, P_rigid, rest_body(), _asset_for(P_rigid), EnergyParams())
    for name, v in rep.terms.items():
        if name != "gravity":
            assert v >= 0.0


@given(pitch=st.floats(-40, 40), yaw=st.floats(-40, 40))
def test_property_posed_body_energy_is_finite(pitch, yaw):
    pose = np.zeros(66)
    pose[3 * 15:3 * 15 + 3] = np.deg2rad([pitch, yaw, 0.0])
    body = pose_body(BodyParams(pose, np.zeros(16)))
    P = random_strands(np.random.default_rng(0), 2, 10) + body.head_transform[:3, 3]
    rep = total_static_loss(P, P, body, _asset_for(P), EnergyParams())
    assert np.isfinite(rep.total) and np.all(np.isfinite(rep.grad))


# -- kernels against independent references ---------------------------------------------


@given(seed=st.integers(0, 10_000))
def test_property_compiled_sdf_matches_numpy(seed):
    from strandsim.body import capsule_sdf
    from strandsim.energy import kernels
    rng = np.random.default_rng(seed)
    body = rest_body()
    x = body.joint_positions[rng.integers(0, 22, 64)] + rng.normal(0, 0.08, (64, 3))
    d0, n0, _ = capsule_sdf(x, body.cap_a, body.cap_b, body.cap_radius)
    d1, n1 = kernels.capsule_sdf_points(x, body.cap_a, body.cap_b, body.cap_radius)
    np.testing.assert_allclose(d1, d0, rtol=0, atol=1e-14)
    np.testing.assert_allclose(n1, n0, atol=1e-12)


@given(seed=st.integers(0, 10_000), jitter=st.sampled_from([0.0, 0.3, 3.0]), short=st.booleans())
def test_property_compiled_bending_matches_numpy(seed, jitter, short):
    from strandsim.energy.terms import bending, bending_reference
    rng = np.random.default_rng(seed)
    P = random_strands(rng, 3, 9, jitter=jitter)
    if short:
        P[:, 5] = P[:, 4] + 1e-8  # an edge below eps switches its joints off
    v0, g0 = bending_reference(P, 2.0, EPS)
    v1, g1 = bending(P, 2.0, EPS)
    # near-straight joints sit where arccos amplifies last-bit differences in the dot product
    assert v1 == pytest.approx(v0, rel=1e-10, abs=1e-15)
    assert np.abs(g1 - g0).max() <= 1e-8 * max(np.abs(g0).max(), 1e-300)


@given(seed=st.integers(0, 10_000))
def test_property_segment_distance_matches_sampling(seed):
    from oracles import segment_distance_sampled
    rng = np.random.default_rng(seed)
    p1, q1, p2, q2 = rng.normal(0, 1, (4, 1, 3))
    dist, _ = contact.segment_distance(p1, q1, p2, q2)
    ref = segment_distance_sampled(p1[0], q1[0], p2[0], q2[0])
    assert dist[0] <= ref + 1e-12
    assert dist[0] == pytest.approx(ref, abs=1e-5)


@given(seed=st.integers(0, 10_000))
def test_property_segment_distance_gradient(seed):
    from oracles import central_diff_grad
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 1, (4, 3))
    f = lambda Y: contact.segment_distance(*(Y[k:k + 1] for k in range(4)))[0][0]
    _, grads = contact.segment_distance(*(X[k:k + 1] for k in range(4)))
    g = np.concatenate(grads)
    fd = central_diff_grad(f, X, 1e-7)
    np.testing.assert_allclose(g, fd, atol=1e-6)


@given(seed=st.integers(0, 10_000), window=st.integers(1, 3))
def test_property_hashed_pairs_equal_brute_force(seed, window):
    rng = np.random.default_rng(seed)
    P = random_strands(rng, int(rng.integers(1, 6)), int(rng.integers(3, 12)), seg=3e-4, jitter=1.0,
                       origin_spread=5e-4)
    r = float(rng.uniform(1e-4, 1e-3))
    brute = contact.brute_force_pairs(P, r, window)
    brute = brute[np.lexsort((brute[:, 1], brute[:, 0]))] if len(brute) else brute.reshape(0, 2)
    np.testing.assert_array_equal(contact.close_pairs(P, r, window).reshape(-1, 2), brute.reshape(-1, 2))
