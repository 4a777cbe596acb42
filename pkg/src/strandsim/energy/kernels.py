"""Compiled inner loops for the contact terms.

The numpy routines in ``body.capsule_sdf``, ``contact.brute_force_pairs`` and
``terms.bending_reference`` compute the same quantities and serve as their
reference.
"""

from __future__ import annotations

import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True, fastmath=False)


@_jit
def capsule_sdf_points(x, cap_a, cap_b, cap_radius):
    """(d, n) for points x (P, 3) against a capsule union; ties -> lowest index."""
    P = x.shape[0]
    C = cap_a.shape[0]
    # bounding spheres give a cheap lower bound on each capsule's distance
    center = 0.5 * (cap_a + cap_b)
    bound = np.empty(C)
    for c in range(C):
        e2 = 0.0
        for k in range(3):
            e2 += (cap_b[c, k] - cap_a[c, k]) ** 2
        bound[c] = 0.5 * np.sqrt(e2) + cap_radius[c]
    d_out = np.empty(P)
    n_out = np.empty((P, 3))
    for p in range(P):
        best = np.inf
        bi = 0
        bt = 0.0
        for c in range(C):
            cx = x[p, 0] - center[c, 0]
            cy = x[p, 1] - center[c, 1]
            cz = x[p, 2] - center[c, 2]
            lb = np.sqrt(cx * cx + cy * cy + cz * cz) - bound[c]
            if lb >= best:
                continue
            abx = cap_b[c, 0] - cap_a[c, 0]
            aby = cap_b[c, 1] - cap_a[c, 1]
            abz = cap_b[c, 2] - cap_a[c, 2]
            apx = x[p, 0] - cap_a[c, 0]
            apy = x[p, 1] - cap_a[c, 1]
            apz = x[p, 2] - cap_a[c, 2]
            ab2 = abx * abx + aby * aby + abz * abz
            t = 0.0
            if ab2 > 0:
                t = (apx * abx + apy * aby + apz * abz) / ab2
                t = min(max(t, 0.0), 1.0)
            dx = apx - t * abx
            dy = apy - t * aby
            dz = apz - t * abz
            sd = np.sqrt(dx * dx + dy * dy + dz * dz) - cap_radius[c]
            if sd < best:
                best = sd
                bi = c
                bt = t
        abx = cap_b[bi, 0] - cap_a[bi, 0]
        aby = cap_b[bi, 1] - cap_a[bi, 1]
        abz = cap_b[bi, 2] - cap_a[bi, 2]
        dx = x[p, 0] - cap_a[bi, 0] - bt * abx
        dy = x[p, 1] - cap_a[bi, 1] - bt * aby
        dz = x[p, 2] - cap_a[bi, 2] - bt * abz
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        d_out[p] = r - cap_radius[bi]
        if r > 1e-15:
            n_out[p, 0] = dx / r
            n_out[p, 1] = dy / r
            n_out[p, 2] = dz / r
        else:
            # fixed perpendicular of the axis, as in the numpy version
            na = np.sqrt(abx * abx + aby * aby + abz * abz)
            if na > 0:
                abx /= na
                aby /= na
                abz /= na
            if abs(abx) < 0.9:
                vx, vy, vz = 0.0, abz, -aby  # axis x (1,0,0)
            else:
                vx, vy, vz = -abz, 0.0, abx  # axis x (0,1,0)
            nv = max(np.sqrt(vx * vx + vy * vy + vz * vz), 1e-300)
            n_out[p, 0] = vx / nv
            n_out[p, 1] = vy / nv
            n_out[p, 2] = vz / nv
    return d_out, n_out


@_jit
def _segment_dist2(A, B, i, j):
    """Squared closest distance between segments A[i]B[i] and A[j]B[j]."""
    d1x, d1y, d1z = B[i, 0] - A[i, 0], B[i, 1] - A[i, 1], B[i, 2] - A[i, 2]
    d2x, d2y, d2z = B[j, 0] - A[j, 0], B[j, 1] - A[j, 1], B[j, 2] - A[j, 2]
    rx, ry, rz = A[i, 0] - A[j, 0], A[i, 1] - A[j, 1], A[i, 2] - A[j, 2]
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    c = d1x * rx + d1y * ry + d1z * rz
    b = d1x * d2x + d1y * d2y + d1z * d2z
    denom = a * e - b * b
    sa = a if a > 0 else 1.0
    se = e if e > 0 else 1.0
    s = 0.0
    if denom > 1e-14 * a * e:
        s = (b * f - c * e) / denom
    s = min(max(s, 0.0), 1.0)
    t = (b * s + f) / se
    if t < 0:
        t = 0.0
        s = min(max(-c / sa, 0.0), 1.0)
    elif t > 1:
        t = 1.0
        s = min(max((b - c) / sa, 0.0), 1.0)
    dx = rx + s * d1x - t * d2x
    dy = ry + s * d1y - t * d2y
    dz = rz + s * d1z - t * d2z
    return dx * dx + dy * dy + dz * dz


# bound on the dense cell count of the counting sort; larger extents use coarser cells
_MAX_CELLS = 1 << 22


@_jit
def close_segment_pairs(seg_a, seg_b, radius, n_seg, window):
    """Segment pairs (i < j) closer than ``radius``, via a uniform grid.

    Segments are binned by midpoint with cell edge ``radius + longest
    segment``, so each close pair has midpoints in neighbouring cells. The
    half neighbourhood (13 offsets plus the cell itself) visits each unordered
    cell pair once. Pairs on one strand at most ``window`` segments apart are
    skipped.
    """
    S = seg_a.shape[0]
    mids = np.empty((S, 3))
    reach = np.empty(S)
    hmax = 0.0
    for q in range(S):
        l2 = 0.0
        for c in range(3):
            mids[q, c] = 0.5 * (seg_a[q, c] + seg_b[q, c])
            e = seg_b[q, c] - seg_a[q, c]
            l2 += e * e
        reach[q] = 0.5 * np.sqrt(l2) + 0.5 * radius
        hmax = max(hmax, reach[q])
    h = 2.0 * hmax
    lo3 = np.empty(3)
    dims = np.empty(3, dtype=np.int64)
    for c in range(3):
        lo3[c] = mids[:, c].min()
    while True:
        total = 1
        for c in range(3):
            dims[c] = int(np.floor((mids[:, c].max() - lo3[c]) / h)) + 1
            total *= dims[c]
        if total <= _MAX_CELLS:
            break
        h *= 1.5  # coarser cells stay correct, only slower
    key = np.empty(S, dtype=np.int64)
    for q in range(S):
        cx = min(int((mids[q, 0] - lo3[0]) / h), dims[0] - 1)
        cy = min(int((mids[q, 1] - lo3[1]) / h), dims[1] - 1)
        cz = min(int((mids[q, 2] - lo3[2]) / h), dims[2] - 1)
        key[q] = (cx * dims[1] + cy) * dims[2] + cz
    # counting sort by cell
    cstart = np.zeros(total + 1, dtype=np.int64)
    for q in range(S):
        cstart[key[q] + 1] += 1
    for c in range(total):
        cstart[c + 1] += cstart[c]
    order = np.empty(S, dtype=np.int64)
    for q in range(S):
        order[cstart[key[q]]] = q
        cstart[key[q]] += 1
    # occupied cells in key order, with the range of sorted segments in each
    ukey = np.empty(S, dtype=np.int64)
    ustart = np.empty(S + 1, dtype=np.int64)
    U = 0
    for q in range(S):
        kq = key[order[q]]
        if U == 0 or kq != ukey[U - 1]:
            ukey[U] = kq
            ustart[U] = q
            U += 1
    ustart[U] = S
    # sorted copies: midpoint, reach, then the segment's bounding box
    sm = np.empty((S, 10))
    for q in range(S):
        g = order[q]
        sm[q, 0] = mids[g, 0]
        sm[q, 1] = mids[g, 1]
        sm[q, 2] = mids[g, 2]
        sm[q, 3] = reach[g]
        for c in range(3):
            sm[q, 4 + c] = min(seg_a[g, c], seg_b[g, c])
            sm[q, 7 + c] = max(seg_a[g, c], seg_b[g, c])

    offs = np.empty((14, 3), dtype=np.int64)
    n_off = 0
    for dx in range(-1, 2):
        for dy in range(-1, 2):
            for dz in range(-1, 2):
                if (dx, dy, dz) >= (0, 0, 0):
                    offs[n_off, 0] = dx
                    offs[n_off, 1] = dy
                    offs[n_off, 2] = dz
                    n_off += 1
    # every half-neighbourhood offset has a non-negative key delta, so one
    # forward-moving pointer per offset finds the neighbour cells
    delta = np.empty(n_off, dtype=np.int64)
    for o in range(n_off):
        delta[o] = (offs[o, 0] * dims[1] + offs[o, 1]) * dims[2] + offs[o, 2]
    ptr = np.zeros(n_off, dtype=np.int64)

    cap = 1024
    out = np.empty((cap, 2), dtype=np.int64)
    k = 0
    r2 = radius * radius
    for u in range(U):
        ci = ukey[u]
        s0 = ustart[u]
        s1 = ustart[u + 1]
        cz = ci % dims[2]
        cy = (ci // dims[2]) % dims[1]
        cx = ci // (dims[1] * dims[2])
        for o in range(n_off):
            target = ci + delta[o]
            p = ptr[o]
            while p < U and ukey[p] < target:
                p += 1
            ptr[o] = p
            if p == U or ukey[p] != target:
                continue
            nx = cx + offs[o, 0]
            ny = cy + offs[o, 1]
            nz = cz + offs[o, 2]
            if nx >= dims[0] or ny < 0 or ny >= dims[1] or nz < 0 or nz >= dims[2]:
                continue
            t0 = ustart[p]
            t1 = ustart[p + 1]
            for qi in range(s0, s1):
                xi, yi, zi, ri = sm[qi, 0], sm[qi, 1], sm[qi, 2], sm[qi, 3]
                q0 = qi + 1 if o == 0 else t0
                for qj in range(q0, t1):
                    rr = ri + sm[qj, 3]
                    mx = xi - sm[qj, 0]
                    my = yi - sm[qj, 1]
                    mz = zi - sm[qj, 2]
                    if mx * mx + my * my + mz * mz >= rr * rr:
                        continue
                    if (sm[qi, 4] - sm[qj, 7] >= radius or sm[qj, 4] - sm[qi, 7] >= radius
                            or sm[qi, 5] - sm[qj, 8] >= radius or sm[qj, 5] - sm[qi, 8] >= radius
                            or sm[qi, 6] - sm[qj, 9] >= radius or sm[qj, 6] - sm[qi, 9] >= radius):
                        continue
                    i = order[qi]
                    j = order[qj]
                    lo = min(i, j)
                    hi = max(i, j)
                    if hi - lo <= window and lo // n_seg == hi // n_seg:
                        continue
                    if _segment_dist2(seg_a, seg_b, lo, hi) >= r2:
                        continue
                    if k == cap:
                        grown = np.empty((2 * cap, 2), dtype=np.int64)
                        grown[:cap] = out
                        out = grown
                        cap *= 2
                    out[k, 0] = lo
                    out[k, 1] = hi
                    k += 1
    return out[:k]


@_jit
def bending_sum(P, eps):
    """Sum of turning angles and its gradient; numpy twin in ``terms.bending_reference``."""
    M, N, _ = P.shape
    grad = np.zeros((M, N, 3))
    total = 0.0
    ea = np.empty(3)
    eb = np.empty(3)
    for m in range(M):
        for i in range(N - 2):
            la2 = 0.0
            lb2 = 0.0
            for c in range(3):
                ea[c] = P[m, i + 1, c] - P[m, i, c]
                eb[c] = P[m, i + 2, c] - P[m, i + 1, c]
                la2 += ea[c] * ea[c]
                lb2 += eb[c] * eb[c]
            la = np.sqrt(la2)
            lb = np.sqrt(lb2)
            if not (la > eps and lb > eps):
                continue
            pa = la + eps
            pb = lb + eps
            dot = ea[0] * eb[0] + ea[1] * eb[1] + ea[2] * eb[2]
            theta = dot / (pa * pb)
            clamped = min(max(theta, -1 + eps), 1 - eps)
            total += np.arccos(clamped)
            if not (-1 + eps < theta < 1 - eps):
                continue
            dalpha = -1.0 / np.sqrt(max(1 - clamped * clamped, 1e-300))
            # d theta / d e_a and d e_b with u = e / (|e| + eps)
            ka = dot / (la * pa * pa * pb)
            kb = dot / (lb * pb * pb * pa)
            for c in range(3):
                ga = dalpha * (eb[c] / (pa * pb) - ea[c] * ka)
                gb = dalpha * (ea[c] / (pa * pb) - eb[c] * kb)
                grad[m, i, c] -= ga
                grad[m, i + 1, c] += ga - gb
                grad[m, i + 2, c] += gb
    for m in range(M):
        for v in range(min(2, N)):
            for c in range(3):
                grad[m, v, c] = 0.0
    return total, grad
