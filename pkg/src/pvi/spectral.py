"""Spectral structure of the interface boundary matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import boundary_matrices, normal_vector, plasma_symbols
from .errors import IncompatibleState
from .linearized import SurfaceRing, boundary_forms, reformed_symbols
from .state import Eos, PlasmaState, lorentz_factor

ZERO_TOL = 1e-10


def inertia(A, rel_tol: float = ZERO_TOL):
    """Counts ``(positive, negative, zero)`` of the (real) eigenvalues of ``A``.

    Eigenvalues with modulus below ``rel_tol * ||A||_2`` count as zero.
    """
    A = np.asarray(A, float)
    ev = np.linalg.eigvals(A).real
    scale = np.linalg.norm(A, 2, axis=(-2, -1)) if A.ndim > 2 else np.linalg.norm(A, 2)
    tol = rel_tol * np.maximum(scale, np.finfo(float).tiny)
    tol = np.asarray(tol)[..., None]
    return (
        np.sum(ev > tol, axis=-1),
        np.sum(ev < -tol, axis=-1),
        np.sum(np.abs(ev) <= tol, axis=-1),
    )


def matrix_rank(A, rel_tol: float = ZERO_TOL):
    s = np.linalg.svd(np.asarray(A, float), compute_uv=False)
    return np.sum(s > rel_tol * s[..., :1], axis=-1)


@dataclass
class MultiplicityReport:
    formulation: str
    eigenvalues: list
    ranks: list
    classification: str
    offending: list = field(default_factory=list)
    kinematic_defect: float = 0.0

    def to_dict(self) -> dict:
        return {
            "formulation": self.formulation,
            "classification": self.classification,
            "ranks": [int(r) for r in self.ranks],
            "offending_samples": [int(i) for i in self.offending],
            "kinematic_defect": float(self.kinematic_defect),
            "eigenvalues": [[float(x) for x in ev] for ev in self.eigenvalues],
        }


def multiplicity_scan(
    state: PlasmaState,
    nu,
    dphi_t,
    grad_phi,
    eos: Eos,
    formulation: str = "original",
) -> MultiplicityReport:
    """Rank of ``diag(Ab+, Ab-)`` at each interface sample (leading batch axis)."""
    if formulation not in ("original", "reformed"):
        raise ValueError("formulation must be 'original' or 'reformed'")
    bm = boundary_matrices(state, nu, dphi_t, grad_phi, eos, reformed=formulation == "reformed")
    full = bm.full().reshape((-1,) + bm.full().shape[-2:])
    ranks = matrix_rank(full)
    ev = np.sort(np.linalg.eigvals(full).real, axis=-1)
    changes = [i for i in range(1, len(ranks)) if ranks[i] != ranks[i - 1]]
    offending = sorted({i for c in changes for i in (c - 1, c)})
    N = normal_vector(grad_phi)
    defect = float(np.max(np.abs(np.asarray(dphi_t) - np.sum(np.asarray(state.v) * N, axis=-1))))
    return MultiplicityReport(
        formulation=formulation,
        eigenvalues=list(ev),
        ranks=list(ranks),
        classification="constant" if len(set(ranks.tolist())) == 1 else "variable",
        offending=offending,
        kinematic_defect=defect,
    )


def boundary_identity_target(gamma, N):
    """Matrix with ``-Gamma N`` in the first row/column (pressure-velocity block)."""
    gamma = np.asarray(gamma, float)
    N = np.asarray(N, float)
    d = N.shape[-1]
    n = 2 * d + 2
    T = np.zeros(N.shape[:-1] + (n, n))
    T[..., 0, 1 : 1 + d] = -gamma[..., None] * N
    T[..., 1 : 1 + d, 0] = -gamma[..., None] * N
    return T


@dataclass
class IdentityCheck:
    residual: float
    scale: float
    product: np.ndarray
    target: np.ndarray
    defects: dict


def verify_boundary_identity(
    state: PlasmaState, dphi_t, grad_phi, eos: Eos, strict: bool = True, tol: float = 1e-12
) -> IdentityCheck:
    """Max-norm distance between ``S+ Ab+`` and its reduced pattern on the interface.

    With ``strict`` the tangency ``H.N = 0`` and kinematics ``dt phi = v.N``
    must hold to ``tol``; otherwise the residual is reported regardless.
    """
    N = normal_vector(grad_phi)
    HN = np.sum(np.asarray(state.H) * N, axis=-1)
    kin = np.asarray(dphi_t) - np.sum(np.asarray(state.v) * N, axis=-1)
    defects = {"H.N": float(np.max(np.abs(HN))), "kinematic": float(np.max(np.abs(kin)))}
    if strict and max(defects.values()) > tol:
        raise IncompatibleState(f"interface state not compatible: {defects}")
    ps = plasma_symbols(state, eos)
    bm = boundary_matrices(state, np.zeros(N.shape), dphi_t, grad_phi, eos)
    prod = ps.S @ bm.Ab_plus
    target = boundary_identity_target(lorentz_factor(state.v, state.eps), N)
    scale = float(np.max(np.abs(prod)))
    return IdentityCheck(
        residual=float(np.max(np.abs(prod - target))),
        scale=scale,
        product=prod,
        target=target,
        defects=defects,
    )


def check_boundary_decompositions(ring: SurfaceRing, eos: Eos, tol: float = 1e-8) -> dict:
    """Residuals ``|bold A_1^+ - B_1^+|`` and ``|bold A_1^- - B_1^-|`` on the interface."""
    ring.check(tol)
    d = ring.d
    U = PlasmaState.from_vector(ring.U, ring.eps)
    nu = U.v
    sym = reformed_symbols(
        U,
        nu,
        ring.dphi_t,
        np.asarray(ring.d1Phi_plus, float),
        np.asarray(ring.d1Phi_minus, float),
        ring.grad_phi,
        eos,
    )
    Bp, Bm = boundary_forms(d, ring.eps)
    return {
        "plus": float(np.max(np.abs(sym.plus[1] - Bp))),
        "minus": float(np.max(np.abs(sym.minus[1] - Bm))),
    }


@dataclass(frozen=True)
class CharSplit:
    """Index sets into the stacked ``(W, w)`` vector."""

    d: int
    noncharacteristic: tuple
    characteristic: tuple

    @property
    def sizes(self):
        return len(self.noncharacteristic), len(self.characteristic)


def char_split(d: int) -> CharSplit:
    n_plus = 2 * d + 2
    if d == 3:
        nc = (0, 1, n_plus + 1, n_plus + 2, n_plus + 4, n_plus + 5)
    elif d == 2:
        nc = (0, 1, n_plus + 1, n_plus + 2)
    else:
        raise ValueError("d must be 2 or 3")
    total = n_plus + 3 * d - 3
    return CharSplit(d, nc, tuple(i for i in range(total) if i not in nc))


def char_split_from_forms(Bplus, Bminus) -> CharSplit:
    """Noncharacteristic indices read off the nonzero rows of the normal forms."""
    n_plus = Bplus.shape[0]
    rows = [i for i in range(n_plus) if np.any(Bplus[i])]
    rows += [n_plus + i for i in range(Bminus.shape[0]) if np.any(Bminus[i])]
    d = (n_plus - 2) // 2
    total = n_plus + Bminus.shape[0]
    return CharSplit(d, tuple(rows), tuple(i for i in range(total) if i not in rows))
