"""Drape quality metrics and the comparison table."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .body import PosedBody
from .energy.terms import N_FIXED
from .geometry import HairAsset

# Roots are snapped onto the surface, so their distance is zero up to rounding.
# Anything shallower than this is treated as touching rather than inside.
SURFACE_TOL = 1e-9


def _positions(P) -> np.ndarray:
    return np.asarray(getattr(P, "positions", P), dtype=float)


def penetration_pct(P, body: PosedBody, exclude_roots: bool = False, tol: float = SURFACE_TOL) -> float:
    """Percentage of hair vertices strictly inside the body."""
    X = _positions(P)
    if exclude_roots:
        X = X[:, N_FIXED:]
    if X.size == 0:
        return 0.0
    d, _ = body.signed_distance(X.reshape(-1, 3))
    return float(100.0 * np.count_nonzero(d < -tol) / d.size)


def strand_lengths(X: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(X, axis=1), axis=-1).sum(axis=1)


def length_change_pct(P, asset: HairAsset) -> float:
    """Mean over strands of the relative change in total strand length, in percent."""
    X = _positions(P)
    rest = asset.rest_lengths.sum(axis=1)
    return float(100.0 * np.mean(np.abs(strand_lengths(X) - rest) / rest))


def time_drape(fn: Callable[[], object], repeats: int = 5, warmup: int = 1) -> float:
    """Median wall time of ``fn`` in milliseconds over ``repeats`` runs after ``warmup`` runs."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(samples))


@dataclass
class MetricsReport:
    penetration_pct: float
    length_change_pct: float
    time_ms_per_drape: float | None = None
    scene_tag: str = ""
    method_tag: str = ""

    def __post_init__(self):
        for name in ("penetration_pct", "length_change_pct"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0 + 1e-9 and name == "penetration_pct":
                raise ValueError(f"{name} out of range: {v}")
            if v < 0:
                raise ValueError(f"{name} must be non-negative: {v}")
        if self.time_ms_per_drape is not None and not self.time_ms_per_drape > 0:
            raise ValueError("time must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def evaluate(P, body: PosedBody, asset: HairAsset, time_ms: float | None = None,
             scene_tag: str = "", method_tag: str = "", exclude_roots: bool = False) -> MetricsReport:
    return MetricsReport(penetration_pct(P, body, exclude_roots), length_change_pct(P, asset),
                         time_ms, scene_tag, method_tag)


def format_table(reports: Sequence[MetricsReport]) -> str:
    """Aligned table with one row per method in the given order; missing times print as '-'."""
    header = ("Method", "Time (ms/drape)", "Penetration (%)", "Length Change (%)")
    rows = [header]
    for r in reports:
        t = "-" if r.time_ms_per_drape is None else f"{r.time_ms_per_drape:.3f}"
        rows.append((r.method_tag, t, f"{r.penetration_pct:.3f}", f"{r.length_change_pct:.3f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for k, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
