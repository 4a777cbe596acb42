"""Energy parameters, totals and the serializable energy report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..body import PosedBody, scalp_frame
from ..geometry import HairAsset
from . import contact, terms
from .barrier import BarrierCoeffs, barrier_coeffs

STATIC_TERMS = ("stretch", "bending", "aux", "smooth", "gravity", "hair_body", "hair_hair", "root")
DYNAMIC_TERMS = STATIC_TERMS + ("inertia", "func_reg")


@dataclass(frozen=True)
class EnergyParams:
    """Weights and physical constants of the strand energy.

    Defaults are tuned for desk-scale scenes (about 256 guide strands of 100
    vertices, lengths in meters). Stretch is averaged over segments while
    gravity and bending are sums, so for other strand counts ``k_s`` should
    scale roughly with M to keep the same stiffness per segment. Inertia is
    also averaged, so ``lam_inertia`` defaults to M*(N-2) for that scene size,
    which puts it on the same per-vertex footing as the summed gravity.
    """

    k_s: float = 1e7
    k_b: float = 1e-5
    lam_aux: float = 1.0
    lam_smooth: float = 0.1
    lam_contact: float = 1e3
    lam_root: float = 0.1
    lam_inertia: float = 256.0 * 98.0
    lam_fr: float = 1.0
    mass: float = 1e-5
    g: tuple[float, float, float] = (0.0, -9.81, 0.0)
    eps: float = 1e-7
    eps_norm: float = 1e-8
    k_align: int = 3
    dt: float = 1.0 / 60.0
    xi_hb: float = 1e-3
    xi_hh: float = 1e-4
    dhat_ratio: float = 1.5
    b_p: float = 0.01
    barrier_variant: str = "monotone"
    normalize_bending: bool = False
    contact_window: int = 2
    use_hair_hair: bool = True
    deterministic: bool = True

    def __post_init__(self):
        if not (self.xi_hb > 0 and self.xi_hh > 0):
            raise ValueError("hard barrier distances must be positive")
        if not 0 < self.b_p < 1:
            raise ValueError("b_p must lie in (0, 1)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        weights = (self.k_s, self.k_b, self.lam_aux, self.lam_smooth, self.lam_contact, self.lam_root,
                   self.lam_inertia, self.lam_fr, self.mass)
        if any(w < 0 for w in weights):
            raise ValueError("weights and stiffnesses must be non-negative")

    def replace(self, **kw) -> "EnergyParams":
        return replace(self, **kw)

    def hb_coeffs(self) -> BarrierCoeffs:
        return _coeffs(self.xi_hb, self.dhat_ratio * self.xi_hb, self.b_p, self.barrier_variant)

    def hh_coeffs(self) -> BarrierCoeffs:
        return _coeffs(self.xi_hh, self.dhat_ratio * self.xi_hh, self.b_p, self.barrier_variant)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g"] = list(self.g)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyParams":
        d = dict(d)
        if "g" in d:
            d["g"] = tuple(d["g"])
        return cls(**d)


_COEFF_CACHE: dict[tuple, BarrierCoeffs] = {}


def _coeffs(xi, dhat, b_p, variant) -> BarrierCoeffs:
    key = (xi, dhat, b_p, variant)
    co = _COEFF_CACHE.get(key)
    if co is None:
        if len(_COEFF_CACHE) > 4096:
            _COEFF_CACHE.clear()
        co = _COEFF_CACHE[key] = barrier_coeffs(xi, dhat, b_p, variant)
    return co


@dataclass
class EnergyReport:
    terms: dict[str, float]
    grad: np.ndarray | None = field(default=None, repr=False)

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    def to_record(self) -> dict:
        rec = {k: float(v) for k, v in self.terms.items()}
        rec["total"] = self.total
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "EnergyReport":
        rec = json.loads(text)
        rec.pop("total", None)
        return cls(rec)


def scalp_normals(body: PosedBody, asset: HairAsset) -> np.ndarray:
    return scalp_frame(body, asset.root_uv)[1]


def static_terms(P, P_rigid, body: PosedBody, asset: HairAsset, params: EnergyParams, normals=None):
    """Each static term as (value, grad), keyed by term name."""
    P = np.asarray(P, dtype=float)
    if normals is None:
        normals = scalp_normals(body, asset)
    out = {
        "stretch": terms.inextensibility(P, asset.rest_lengths, params.k_s),
        "bending": terms.bending(P, params.k_b, params.eps, params.normalize_bending),
        "aux": terms.auxiliary(P, P_rigid, params.lam_aux),
        "smooth": terms.smoothness(P, params.lam_smooth),
        "gravity": terms.gravity(P, params.mass, params.g),
        "hair_body": contact.hair_body(P, body, params.hb_coeffs(), params.lam_contact),
        "root": terms.root_alignment(P, normals, params.lam_root, params.k_align, params.eps_norm),
    }
    if params.use_hair_hair and params.lam_contact > 0:
        out["hair_hair"] = contact.hair_hair(P, params.hh_coeffs(), params.lam_contact, params.contact_window)
    else:
        out["hair_hair"] = (0.0, np.zeros_like(P))
    return {k: out[k] for k in STATIC_TERMS}


def _report(parts: dict, with_grad: bool) -> EnergyReport:
    values = {k: float(v) for k, (v, _) in parts.items()}
    grad = None
    if with_grad:
        # fixed summation order keeps the result reproducible
        grad = np.zeros_like(next(iter(parts.values()))[1])
        for k in parts:
            grad += parts[k][1]
    return EnergyReport(values, grad)


def total_static_loss(P, P_rigid, body, asset, params: EnergyParams, with_grad: bool = True, normals=None) -> EnergyReport:
    return _report(static_terms(P, P_rigid, body, asset, params, normals), with_grad)


def total_dynamic_loss(P_t, P_tm1, P_tm2, P_rigid, body, asset, params: EnergyParams,
                       func_reg: float = 0.0, with_grad: bool = True, normals=None) -> EnergyReport:
    """Static total plus inertia; ``func_reg`` is computed by the network and added."""
    parts = static_terms(P_t, P_rigid, body, asset, params, normals)
    if P_tm1 is not None and P_tm2 is not None:
        parts["inertia"] = terms.inertia(np.asarray(P_t, float), P_tm1, P_tm2, params.lam_inertia, params.mass, params.dt)
    else:
        parts["inertia"] = (0.0, np.zeros_like(np.asarray(P_t, float)))
    parts["func_reg"] = (float(func_reg), np.zeros_like(np.asarray(P_t, float)))
    return _report(parts, with_grad)
