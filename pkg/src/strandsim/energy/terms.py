"""Per-term strand energies with analytic gradients.

Every function takes vertex positions ``P`` of shape (M, N, 3) and returns
``(value, grad)`` with ``grad`` the same shape as ``P``. Vertices 0 and 1 of
each strand are fixed, so their gradient rows are always zero.
"""

from __future__ import annotations

import numpy as np

from .kernels import bending_sum

N_FIXED = 2


def _zero_fixed(grad: np.ndarray) -> np.ndarray:
    grad[:, :N_FIXED] = 0.0
    return grad


def _scatter_edges(dE: np.ndarray, N: int) -> np.ndarray:
    """Gradient w.r.t. vertices from gradient w.r.t. edges e_i = p_{i+1} - p_i."""
    M = dE.shape[0]
    g = np.zeros((M, N, 3))
    g[:, 1:] += dE
    g[:, :-1] -= dE
    return g


def inextensibility(P, rest_lengths, k_s: float):
    M, N, _ = P.shape
    e = np.diff(P, axis=1)
    length = np.linalg.norm(e, axis=-1)
    r = length - rest_lengths
    scale = k_s / (M * (N - 1))
    value = scale * np.sum(r * r)
    dE = (2 * scale * r / np.where(length > 0, length, 1.0))[..., None] * e
    return value, _zero_fixed(_scatter_edges(dE, N))


def bending(P, k_b: float, eps: float, normalize: bool = False):
    """Sum of turning angles; joints next to an edge shorter than eps contribute 0."""
    M, N, _ = P.shape
    scale = k_b / (M * (N - 2)) if normalize else k_b
    total, grad = bending_sum(np.ascontiguousarray(P, dtype=float), float(eps))
    return scale * total, scale * grad


def bending_reference(P, k_b: float, eps: float, normalize: bool = False):
    """Vectorized twin of ``bending``, kept as its reference."""
    M, N, _ = P.shape
    e = np.diff(P, axis=1)
    length = np.linalg.norm(e, axis=-1)
    u = e / (length + eps)[..., None]
    ea, eb = e[:, :-1], e[:, 1:]
    ua, ub = u[:, :-1], u[:, 1:]
    la, lb = length[:, :-1], length[:, 1:]
    valid = (la > eps) & (lb > eps)
    theta = np.einsum("mij,mij->mi", ua, ub)
    clamped = np.clip(theta, -1 + eps, 1 - eps)
    alpha = np.where(valid, np.arccos(clamped), 0.0)
    interior = valid & (theta > -1 + eps) & (theta < 1 - eps)
    dalpha = np.where(interior, -1.0 / np.sqrt(np.maximum(1 - clamped * clamped, 1e-300)), 0.0)

    scale = k_b / (M * (N - 2)) if normalize else k_b
    value = scale * np.sum(alpha)

    def dtheta(e_own, l_own, w):
        # d(u_own . w)/d e_own with u = e / (|e| + eps)
        lpe = (l_own + eps)[..., None]
        proj = np.einsum("mij,mij->mi", e_own, w)[..., None]
        return w / lpe - e_own * proj / (np.where(l_own > 0, l_own, 1.0)[..., None] * lpe * lpe)

    coef = (scale * dalpha)[..., None]
    dE = np.zeros_like(e)
    dE[:, :-1] += coef * dtheta(ea, la, ub)
    dE[:, 1:] += coef * dtheta(eb, lb, ua)
    return value, _zero_fixed(_scatter_edges(dE, N))


def auxiliary(P, P_rigid, lam: float):
    M, N, _ = P.shape
    diff = P - P_rigid
    scale = lam / (3 * M * N)
    value = scale * np.sum(diff * diff)
    return value, _zero_fixed(2 * scale * diff)


def smoothness(P, lam: float):
    M, N, _ = P.shape
    lap = P[:, 2:] - 2 * P[:, 1:-1] + P[:, :-2]
    scale = lam / (M * (N - 2))
    value = scale * np.sum(lap * lap)
    g = np.zeros_like(P)
    dl = 2 * scale * lap
    g[:, 2:] += dl
    g[:, 1:-1] -= 2 * dl
    g[:, :-2] += dl
    return value, _zero_fixed(g)


def gravity(P, mass: float, g_vec):
    """Gravitational potential of the moving vertices (signed)."""
    force = mass * np.asarray(g_vec, dtype=float)
    value = -np.sum(P[:, N_FIXED:] @ force)
    grad = np.zeros_like(P)
    grad[:, N_FIXED:] = -force
    return value, grad


def root_alignment(P, scalp_normals, lam: float, k_align: int, eps_norm: float):
    """lam * (1 - mean over strands and segments 1..k of d_hat . n_scalp)."""
    M, N, _ = P.shape
    k = min(k_align, N - 2)
    e = P[:, 2 : k + 2] - P[:, 1 : k + 1]  # segments i = 1..k
    length = np.linalg.norm(e, axis=-1)
    lpe = (length + eps_norm)[..., None]
    n = np.asarray(scalp_normals, dtype=float)[:, None, :]
    dots = np.einsum("mij,mij->mi", e, np.broadcast_to(n, e.shape)) / lpe[..., 0]
    value = lam * (1.0 - dots.mean())
    en = (dots * lpe[..., 0])[..., None]
    de = n / lpe - e * en / (np.where(length > 0, length, 1.0)[..., None] * lpe * lpe)
    de = -lam / (M * k) * de
    g = np.zeros_like(P)
    g[:, 2 : k + 2] += de
    g[:, 1 : k + 1] -= de
    return value, _zero_fixed(g)


def inertia(P_t, P_tm1, P_tm2, lam: float, mass: float, dt: float):
    """Deviation from constant-velocity extrapolation; history is a constant."""
    M, N, _ = P_t.shape
    n_mov = N - N_FIXED
    proj = 2 * np.asarray(P_tm1)[:, N_FIXED:] - np.asarray(P_tm2)[:, N_FIXED:]
    diff = P_t[:, N_FIXED:] - proj
    scale = lam / (M * n_mov) * mass / (2 * dt * dt)
    value = scale * np.sum(diff * diff)
    grad = np.zeros_like(P_t)
    grad[:, N_FIXED:] = 2 * scale * diff
    return value, grad
