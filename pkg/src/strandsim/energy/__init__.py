"""Physics-based strand energies used as self-supervised losses."""

from .barrier import BarrierCoeffs, barrier, barrier_and_grad, barrier_coeffs
from .total import (
    DYNAMIC_TERMS,
    STATIC_TERMS,
    EnergyParams,
    EnergyReport,
    scalp_normals,
    static_terms,
    total_dynamic_loss,
    total_static_loss,
)

__all__ = [
    "BarrierCoeffs",
    "barrier",
    "barrier_and_grad",
    "barrier_coeffs",
    "DYNAMIC_TERMS",
    "STATIC_TERMS",
    "EnergyParams",
    "EnergyReport",
    "scalp_normals",
    "static_terms",
    "total_dynamic_loss",
    "total_static_loss",
]
