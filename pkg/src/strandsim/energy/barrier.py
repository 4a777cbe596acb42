"""Log barrier with C2 quartic extrapolation into penetration.

For d >= d_b the IPC-style barrier

    B0(d) = max(0, -(d^2 - (xi + dhat)^2)^2 log((d^2 - xi^2) / (2 xi dhat + dhat^2)))

is used; below the join point d_b = xi + b_p dhat a quartic in tau = d - d_b,
matched to B0 in value and first two derivatives at d_b, takes over.

Two ways of fixing the two remaining quartic coefficients are provided:

``"zero_at_t0"``
    a3, a4 from the closed forms that impose value 0 and slope 0
    at tau = t0 (i.e. d = -(xi + dhat)), so the extrapolation dips back to zero
    a few millimetres inside the body before rising again.
``"monotone"`` (default)
    a3 = 0, a4 = -E1 / t0^4, which doubles the quadratic continuation at t0.
    With f_b' < 0 < f_b'' this keeps the barrier strictly increasing with
    penetration depth for every d < d_b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("monotone", "zero_at_t0")


@dataclass(frozen=True)
class BarrierCoeffs:
    xi: float
    dhat: float
    b_p: float
    d_b: float
    f_b: float
    f_b1: float
    f_b2: float
    D_f: float
    t_0: float
    E_1: float
    E_2: float
    a_3: float
    a_4: float
    variant: str = "monotone"

    @property
    def cutoff(self) -> float:
        """Distance beyond which the barrier is exactly zero."""
        return self.xi + self.dhat


def b0_derivatives(d, xi: float, dhat: float):
    """Unclamped log barrier and its first two derivatives (valid for |d| > xi)."""
    d = np.asarray(d, dtype=float)
    c2 = (xi + dhat) ** 2
    K = 2 * xi * dhat + dhat**2
    s = d * d - c2
    w = d * d - xi * xi
    L = np.log(w / K)
    d2 = d * d
    f = -s * s * L
    f1 = -4 * d * s * L - 2 * d * s * s / w
    f2 = -4 * s * L - 8 * d2 * L - 16 * d2 * s / w - 2 * s * s / w + 4 * d2 * s * s / (w * w)
    return f, f1, f2


def barrier_coeffs(xi: float, dhat: float | None = None, b_p: float = 0.5, variant: str = "monotone") -> BarrierCoeffs:
    if not xi > 0:
        raise ValueError(f"hard barrier distance must be positive, got {xi}")
    if not 0 < b_p < 1:
        raise ValueError(f"b_p must lie in (0, 1), got {b_p}")
    if variant not in VARIANTS:
        raise ValueError(f"unknown barrier variant {variant!r}")
    dhat = 1.5 * xi if dhat is None else float(dhat)
    if not dhat > 0:
        raise ValueError("soft barrier distance must be positive")
    d_b = xi + b_p * dhat
    f_b, f_b1, f_b2 = (float(v) for v in b0_derivatives(d_b, xi, dhat))
    D_f = f_b2 / 2
    t_0 = -(xi + dhat) - d_b
    E_1 = -(f_b + f_b1 * t_0 + D_f * t_0**2)
    E_2 = -(f_b1 + 2 * D_f * t_0)
    if variant == "zero_at_t0":
        a_3 = 4 * E_1 / t_0**3 - E_2 / t_0**2
        a_4 = E_2 / t_0**3 - 3 * E_1 / t_0**4
    else:
        a_3 = 0.0
        a_4 = -E_1 / t_0**4
    return BarrierCoeffs(xi, dhat, b_p, d_b, f_b, f_b1, f_b2, D_f, t_0, E_1, E_2, a_3, a_4, variant)


def quartic(tau, co: BarrierCoeffs):
    """Unclamped extrapolation polynomial and its derivative in tau."""
    tau = np.asarray(tau, dtype=float)
    p = co.f_b + tau * (co.f_b1 + tau * (co.D_f + tau * (co.a_3 + tau * co.a_4)))
    dp = co.f_b1 + tau * (2 * co.D_f + tau * (3 * co.a_3 + tau * 4 * co.a_4))
    return p, dp


def barrier_and_grad(d, co: BarrierCoeffs):
    """B(d) and dB/dd, elementwise. Finite for every finite d."""
    d = np.asarray(d, dtype=float)
    val = np.zeros_like(d)
    grad = np.zeros_like(d)
    lo = d < co.d_b
    hi = (~lo) & (d < co.cutoff)
    if np.any(hi):
        f, f1, _ = b0_derivatives(d[hi], co.xi, co.dhat)
        pos = f > 0
        val[hi] = np.where(pos, f, 0.0)
        grad[hi] = np.where(pos, f1, 0.0)
    if np.any(lo):
        p, dp = quartic(d[lo] - co.d_b, co)
        pos = p > 0
        val[lo] = np.where(pos, p, 0.0)
        grad[lo] = np.where(pos, dp, 0.0)
    return val, grad


def barrier(d, co: BarrierCoeffs):
    return barrier_and_grad(d, co)[0]
