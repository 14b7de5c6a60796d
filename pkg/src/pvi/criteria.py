"""Quantitative stability hypotheses and jump-condition residuals on the interface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDenominator
from .linearized import SurfaceRing, boundary_operator, split_plasma, split_vacuum

STAB3D_THRESHOLD = 0.5


def noncollinearity_margin(H, h) -> float:
    """Minimum of ``|H x h|`` over the samples (3D fields on the last axis)."""
    return float(np.min(np.linalg.norm(np.cross(np.asarray(H, float), np.asarray(h, float)), axis=-1)))


def stability3d_values(U, u, grad_phi, eps: float):
    """Pointwise value of the 3D stability functional.

    ``|zeta| |(H2, H3, h2, h3)| |N| / (|H2 h3 - H3 h2| (1 - eps |v|))`` with
    ``zeta = e1 + eps (v2 h3 - v3 h2)``.
    """
    _, v, H, _ = split_plasma(np.asarray(U, float))
    h, e = split_vacuum(np.asarray(u, float))
    grad_phi = np.asarray(grad_phi, float)
    zeta = e[..., 0] + eps * (v[..., 1] * h[..., 2] - v[..., 2] * h[..., 1])
    tang = np.sqrt(H[..., 1] ** 2 + H[..., 2] ** 2 + h[..., 1] ** 2 + h[..., 2] ** 2)
    normN = np.sqrt(1.0 + np.sum(grad_phi**2, axis=-1))
    cross = H[..., 1] * h[..., 2] - H[..., 2] * h[..., 1]
    if np.any(np.abs(cross) < 1e-12):
        raise DegenerateDenominator("|H2 h3 - H3 h2| < 1e-12 at some sample")
    speed = 1.0 - eps * np.linalg.norm(v, axis=-1)
    return np.abs(zeta) * tang * normN / (np.abs(cross) * speed)


def stability3d_functional(U, u, grad_phi, eps: float) -> float:
    return float(np.max(stability3d_values(U, u, grad_phi, eps)))


def nonvanishing2d_margin(H, h) -> float:
    H = np.asarray(H, float)
    h = np.asarray(h, float)
    return float(np.min(np.linalg.norm(H, axis=-1) + np.linalg.norm(h, axis=-1)))


def electric_field(v, H, eps: float):
    """Plasma electric field ``-eps v x H``; in 2D the out-of-plane scalar."""
    v = np.asarray(v, float)
    H = np.asarray(H, float)
    if v.shape[-1] == 3:
        return -eps * np.cross(v, H)
    return -eps * (v[..., 0] * H[..., 1] - v[..., 1] * H[..., 0])


def jump_residual(U, u, dphi_t, grad_phi, eps: float):
    """Residuals of kinematics, total-pressure balance and the e/h coupling rows."""
    return boundary_operator(
        np.asarray(U, float), np.asarray(u, float), np.asarray(dphi_t, float), np.asarray(grad_phi, float), eps
    )


def taylor_sign(ring: SurfaceRing) -> float:
    """Informational: ``min(-(dn q - h.dn h))`` with physical-normal derivatives."""
    nq = ring.nU[..., 0]
    h0, _ = split_vacuum(ring.u)
    nh, _ = split_vacuum(ring.nu_)
    return float(np.min(-(nq - np.sum(h0 * nh, axis=-1))))


@dataclass
class CriteriaReport:
    d: int
    delta_noncol: float | None = None
    stab3d_sup: float | None = None
    delta_2d: float | None = None
    verdicts: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        out = {"d": self.d, "verdicts": dict(self.verdicts), "margins": dict(self.margins)}
        for k in ("delta_noncol", "stab3d_sup", "delta_2d"):
            val = getattr(self, k)
            if val is not None:
                out[k] = float(val)
        return out


def evaluate_criteria(U, u, grad_phi, eps: float, delta: float = 0.0, delta0: float = 0.0) -> CriteriaReport:
    """Evaluate the hypotheses for the dimension implied by the data."""
    _, _, H, _ = split_plasma(np.asarray(U, float))
    h, _ = split_vacuum(np.asarray(u, float))
    d = H.shape[-1]
    rep = CriteriaReport(d=d)
    if d == 3:
        rep.delta_noncol = noncollinearity_margin(H, h)
        rep.verdicts["noncollinearity"] = bool(rep.delta_noncol >= delta and rep.delta_noncol > 0)
        rep.margins["noncollinearity"] = rep.delta_noncol - delta
        rep.stab3d_sup = stability3d_functional(U, u, grad_phi, eps)
        rep.verdicts["stability3d"] = bool(rep.stab3d_sup < STAB3D_THRESHOLD)
        rep.margins["stability3d"] = STAB3D_THRESHOLD - rep.stab3d_sup
    else:
        rep.delta_2d = nonvanishing2d_margin(H, h)
        rep.verdicts["nonvanishing2d"] = bool(rep.delta_2d >= delta0 and rep.delta_2d > 0)
        rep.margins["nonvanishing2d"] = rep.delta_2d - delta0
    return rep
