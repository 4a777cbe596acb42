"""Hair-body and hair-hair contact energies."""

from __future__ import annotations

import numpy as np

from ..body import PosedBody
from . import kernels
from .barrier import BarrierCoeffs, barrier_and_grad
from .terms import N_FIXED, _zero_fixed

# -- hair-body -----------------------------------------------------------------


def hair_body(P, body: PosedBody, co: BarrierCoeffs, lam: float):
    """lam * sum of B(sdf) over the moving vertices.

    Fixed vertices never move, so including them would only add a constant.
    """
    M, N, _ = P.shape
    mov = np.ascontiguousarray(P[:, N_FIXED:].reshape(-1, 3), dtype=float)
    d, n = kernels.capsule_sdf_points(mov, body.cap_a, body.cap_b, body.cap_radius)
    b, db = barrier_and_grad(d, co)
    grad = np.zeros_like(P)
    grad[:, N_FIXED:] = (lam * db[:, None] * n).reshape(M, N - N_FIXED, 3)
    return lam * float(b.sum()), grad


# -- segment distance ------------------------------------------------------------


def segment_distance(p1, q1, p2, q2):
    """Closest distance between segment pairs, with gradients w.r.t. endpoints.

    All arrays are (K, 3). Returns ``dist`` (K,) and ``(g_p1, g_q1, g_p2, g_q2)``.
    For intersecting segments the gradient direction is the normalized cross
    product of the segment directions (any perpendicular when parallel).
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ki,ki->k", d1, d1)
    e = np.einsum("ki,ki->k", d2, d2)
    f = np.einsum("ki,ki->k", d2, r)
    c = np.einsum("ki,ki->k", d1, r)
    b = np.einsum("ki,ki->k", d1, d2)
    denom = a * e - b * b
    safe_a = np.where(a > 0, a, 1.0)
    safe_e = np.where(e > 0, e, 1.0)
    par = denom <= 1e-14 * a * e
    s = np.where(par, 0.0, (b * f - c * e) / np.where(par, 1.0, denom))
    s = np.clip(s, 0.0, 1.0)
    t = (b * s + f) / safe_e
    below, above = t < 0, t > 1
    t = np.clip(t, 0.0, 1.0)
    s = np.where(below, np.clip(-c / safe_a, 0, 1), s)
    s = np.where(above, np.clip((b - c) / safe_a, 0, 1), s)

    c1 = p1 + s[:, None] * d1
    c2 = p2 + t[:, None] * d2
    diff = c1 - c2
    dist = np.linalg.norm(diff, axis=-1)
    tiny = dist <= 1e-14
    n = diff / np.where(tiny, 1.0, dist)[:, None]
    if np.any(tiny):
        cr = np.cross(d1[tiny], d2[tiny])
        ncr = np.linalg.norm(cr, axis=-1)
        ref = np.where(np.abs(d1[tiny][:, :1]) < 0.9 * np.linalg.norm(d1[tiny], axis=-1, keepdims=True), [1.0, 0, 0], [0, 1.0, 0])
        alt = np.cross(d1[tiny], ref)
        cr = np.where((ncr > 1e-14)[:, None], cr, alt)
        n[tiny] = cr / np.linalg.norm(cr, axis=-1, keepdims=True)
    grads = ((1 - s)[:, None] * n, s[:, None] * n, -(1 - t)[:, None] * n, -t[:, None] * n)
    return dist, grads


# -- broad phase -----------------------------------------------------------------

def _strand_exclusion(i, j, n_seg: int, window: int):
    si, sj = i // n_seg, j // n_seg
    return (si == sj) & (np.abs(i - j) <= window)


def close_pairs(P, radius: float, window: int = 2):
    """Segment pairs closer than ``radius``, found with a uniform spatial hash.

    Pairs on one strand at most ``window`` segments apart are excluded.
    Returns (i < j) index pairs into the flattened (M * (N-1)) segment list,
    sorted lexicographically.
    """
    M, N, _ = P.shape
    a = np.ascontiguousarray(P[:, :-1].reshape(-1, 3), dtype=float)
    b = np.ascontiguousarray(P[:, 1:].reshape(-1, 3), dtype=float)
    if a.shape[0] < 2:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = kernels.close_segment_pairs(a, b, float(radius), N - 1, int(window))
    if pairs.size:
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    return pairs


def brute_force_pairs(P, radius: float, window: int = 2):
    """All segment pairs closer than ``radius`` (reference for the hash)."""
    M, N, _ = P.shape
    n_seg = N - 1
    a = P[:, :-1].reshape(-1, 3)
    b = P[:, 1:].reshape(-1, 3)
    S = a.shape[0]
    I, J = np.triu_indices(S, k=1)
    keep = ~_strand_exclusion(I, J, n_seg, window)
    I, J = I[keep], J[keep]
    dist, _ = segment_distance(a[I], b[I], a[J], b[J])
    close = dist < radius
    return np.stack([I[close], J[close]], axis=1)


def hair_hair(P, co: BarrierCoeffs, lam: float, window: int = 2, return_pairs: bool = False):
    """lam * sum of B(segment distance) over nearby segment pairs."""
    M, N, _ = P.shape
    pairs = close_pairs(P, co.cutoff, window)
    grad = np.zeros_like(P)
    value = 0.0
    close = pairs
    if pairs.size:
        a = P[:, :-1].reshape(-1, 3)
        b = P[:, 1:].reshape(-1, 3)
        I, J = pairs[:, 0], pairs[:, 1]
        dist, (gp1, gq1, gp2, gq2) = segment_distance(a[I], b[I], a[J], b[J])
        active = dist < co.cutoff
        close = pairs[active]
        I, J, dist = I[active], J[active], dist[active]
        val, db = barrier_and_grad(dist, co)
        value = lam * float(val.sum())
        w = (lam * db)[:, None]
        flat = np.zeros((M * N, 3))
        # vertex index of segment k's start is k + k // (N-1)
        vI = I + I // (N - 1)
        vJ = J + J // (N - 1)
        for idx, gg in ((vI, gp1[active]), (vI + 1, gq1[active]), (vJ, gp2[active]), (vJ + 1, gq2[active])):
            np.add.at(flat, idx, w * gg)
        grad = _zero_fixed(flat.reshape(M, N, 3))
    if return_pairs:
        return value, grad, close
    return value, grad
