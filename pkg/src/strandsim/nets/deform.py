"""Mapping a coarse deformation map onto strands."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..energy.terms import N_FIXED


def cell_index(root_uv, grid: tuple[int, int]) -> np.ndarray:
    """Flat cell index (row-major over (rows, cols)) of the cell nearest each uv.

    u selects the column and v the row; uv outside [0, 1] maps to border cells.
    """
    uv = np.asarray(root_uv, dtype=float)
    rows, cols = grid
    col = np.clip(np.floor(uv[:, 0] * cols), 0, cols - 1).astype(np.int64)
    row = np.clip(np.floor(uv[:, 1] * rows), 0, rows - 1).astype(np.int64)
    return row * cols + col


def taper(n_vertices: int) -> np.ndarray:
    """Per-vertex scale: v / (N-1), with the fixed vertices forced to zero."""
    t = np.arange(n_vertices) / (n_vertices - 1)
    t[:N_FIXED] = 0.0
    return t


def tapered_lookup(D: Tensor, cells: np.ndarray, n_vertices: int) -> Tensor:
    """taper * D[cell(s)] as a graph node: per-strand displacements (M, N, 3)."""
    if D.shape[1:] != (n_vertices, 3):
        raise ad.ShapeError(f"deformation map has {D.shape[1]} vertices, strands have {n_vertices}")
    return ad.mul_const(ad.take_rows(D, cells), taper(n_vertices)[None, :, None])


def deform_positions(P_rigid, D: Tensor, cells: np.ndarray) -> Tensor:
    """P_rigid + taper * D[cell(s)] as a graph node. D is (L, N, 3)."""
    P_rigid = np.asarray(P_rigid)
    return ad.add_const(tapered_lookup(D, cells, P_rigid.shape[1]), P_rigid)


def apply_deformation(P_rigid, D, root_uv, grid: tuple[int, int]) -> np.ndarray:
    """Numeric version of ``deform_positions`` for inference."""
    D = np.asarray(D.data if isinstance(D, Tensor) else D, dtype=float)
    D = D.reshape(-1, *D.shape[-2:])
    P_rigid = np.asarray(P_rigid, dtype=float)
    return P_rigid + taper(P_rigid.shape[1])[None, :, None] * D[cell_index(root_uv, grid)]
