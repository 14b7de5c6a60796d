"""Coefficient matrices of the plasma and vacuum systems.

Plasma unknowns are ordered ``(q, v_1..v_d, H_1..H_d, S)``; vacuum
unknowns are ``(h, e)`` in 3D and ``(h_1, h_2, e)`` in 2D.  Every builder
broadcasts over leading batch axes and returns arrays of shape
``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhysicalConditionViolated
from .state import Eos, PlasmaState, eval_eos, lorentz_factor, u_to_v


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _eye(d, batch):
    return np.broadcast_to(np.eye(d), batch + (d, d))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _real(*xs):
    return not any(np.iscomplexobj(x) for x in xs)


@dataclass(frozen=True)
class PlasmaSymbols:
    B0: np.ndarray
    B: tuple
    J: np.ndarray
    A: tuple
    S: np.ndarray


@dataclass(frozen=True)
class VacuumSymbols:
    A: tuple
    S: np.ndarray
    B: tuple


@dataclass(frozen=True)
class SystemSymbols:
    """Plasma and vacuum symbols evaluated at one set of state points."""

    plasma: PlasmaSymbols
    vacuum: VacuumSymbols

    @property
    def B0(self):
        return self.plasma.B0

    @property
    def Aplus(self):
        return self.plasma.A

    @property
    def Splus(self):
        return self.plasma.S

    @property
    def Aminus(self):
        return self.vacuum.A

    @property
    def Sminus(self):
        return self.vacuum.S

    @property
    def Bminus(self):
        return self.vacuum.B


def fluid_frame_field_sq(v, H, eps):
    """Squared comoving magnetic field ``|b|^2 = eps^2 (|H|^2/Gamma^2 + eps^2 (v.H)^2)``."""
    gam = lorentz_factor(v, eps, check=_real(v))
    vh = _dot(v, H)
    return eps**2 * (_dot(H, H) / gam**2 + eps**2 * vh**2)


def velocity_metric(v, eps):
    """``M0 = (I + eps^2 Gamma^2 v v^T) / Gamma``."""
    v = np.asarray(v)
    d = v.shape[-1]
    gam = lorentz_factor(v, eps, check=_real(v))
    return (_eye(d, v.shape[:-1]) + eps**2 * gam[..., None, None] ** 2 * _outer(v, v)) / gam[
        ..., None, None
    ]


def _assemble_blocks(blocks):
    return np.concatenate([np.concatenate(row, axis=-1) for row in blocks], axis=-2)


def plasma_symbols(state: PlasmaState, eos: Eos) -> PlasmaSymbols:
    """Symmetric symbols ``B0, B_j``, Jacobian ``J = dV/dU`` and the derived
    quasilinear matrices ``A_j = J^-1 B0^-1 B_j J`` with symmetrizer ``J^T B0 J``."""
    eps = state.eps
    v, H = np.asarray(state.v), np.asarray(state.H)
    d = state.d
    batch = np.broadcast_shapes(v.shape[:-1], np.shape(state.q), np.shape(state.S))
    v = np.broadcast_to(v, batch + (d,))
    H = np.broadcast_to(H, batch + (d,))
    real = _real(state.q, v, H, state.S)
    if real:
        state.validate(eos)
    sym = u_to_v(state, eos if real else None)
    p = np.broadcast_to(sym.p, batch)
    S = np.broadcast_to(np.asarray(state.S), batch)
    th = eval_eos(p, S, eos, eps, check=False)
    rho, f = th.rho, th.index
    a2 = eos.dp_drho(p, S)
    gam = lorentz_factor(v, eps, check=real)
    vh = _dot(v, H)
    H2 = _dot(H, H)
    b2 = fluid_frame_field_sq(v, H, eps)
    I = _eye(d, batch)
    vv = _outer(v, v)
    HH = _outer(H, H)
    Hv = _outer(H, v)
    vH = _outer(v, H)
    g = gam[..., None, None]
    s = lambda x: np.asarray(x)[..., None, None]  # noqa: E731

    inertia = s(rho * f * gam + eps**2 * H2 / gam)
    proj = I - eps**2 * vv
    A0 = inertia * proj - eps**2 / g * (s(b2) * vv + HH) + eps**4 / g * s(vh) * (Hv + vH)
    M0 = velocity_metric(v, eps)

    zc = np.zeros(batch + (1, 1), dtype=A0.dtype)
    zr = np.zeros(batch + (1, d), dtype=A0.dtype)
    zcol = np.zeros(batch + (d, 1), dtype=A0.dtype)
    Od = np.zeros(batch + (d, d), dtype=A0.dtype)
    one = np.ones(batch + (1, 1), dtype=A0.dtype)

    c00 = s(gam / (rho * a2))
    B0 = _assemble_blocks(
        [
            [c00 + 0 * zc, eps**2 * v[..., None, :], zr, zc],
            [eps**2 * v[..., :, None], A0, Od, zcol],
            [zcol, Od, M0, zcol],
            [zc, zr, zr, one],
        ]
    )

    bvec = H / gam[..., None] ** 2 + eps**2 * vh[..., None] * v
    cvec = eps**2 * vh[..., None] * H - b2[..., None] * v
    Bs = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        e_b = np.broadcast_to(e, batch + (d,))
        vj = v[..., j]
        Hj = H[..., j]
        N = _outer(bvec, e_b - eps**2 * vj[..., None] * v) - s(Hj) / g**2 * I
        Aj = (
            s(vj) * (inertia * proj + eps**2 / g * (s(b2) * vv - HH))
            + eps**2 * s(Hj) / g * ((Hv + vH) / g**2 - 2.0 * s(vh) * proj)
            + (_outer(cvec, e_b) + _outer(e_b, cvec)) / g
        )
        Bj = _assemble_blocks(
            [
                [s(gam * vj / (rho * a2)) + 0 * zc, e_b[..., None, :] + 0 * zr, zr, zc],
                [e_b[..., :, None] + 0 * zcol, Aj, np.swapaxes(N, -1, -2), zcol],
                [zcol, N, s(vj) * M0, zcol],
                [zc, zr, zr, s(vj) + 0 * zc],
            ]
        )
        Bs.append(Bj)

    avec = eps**2 * H2[..., None] * v - eps**2 * vh[..., None] * H
    J = _assemble_blocks(
        [
            [one, avec[..., None, :], -bvec[..., None, :], zc],
            [zcol, g**2 * M0, Od, zcol],
            [zcol, Od, I + 0 * Od, zcol],
            [zc, zr, zr, one],
        ]
    )
    Jinv = np.linalg.inv(J)
    A = tuple(Jinv @ (np.linalg.solve(B0, Bj @ J)) for Bj in Bs)
    Splus = np.swapaxes(J, -1, -2) @ B0 @ J
    return PlasmaSymbols(B0=B0, B=tuple(Bs), J=J, A=A, S=Splus)


_MAXWELL_3D_CURL = [
    np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float),
    np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], dtype=float),
    np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float),
]


def maxwell_matrices(d: int):
    """Constant Maxwell symbols ``B_j^-``."""
    if d == 3:
        out = []
        for C in _MAXWELL_3D_CURL:
            M = np.zeros((6, 6))
            M[:3, 3:] = C
            M[3:, :3] = -C
            out.append(M)
        return tuple(out)
    if d == 2:
        return (
            np.array([[0, 0, 0], [0, 0, -1], [0, -1, 0]], dtype=float),
            np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=float),
        )
    raise ValueError("d must be 2 or 3")


def vacuum_matrices(nu, eps: float) -> tuple:
    """Reformulated vacuum matrices ``A_j^-(nu)``: Maxwell symbols plus the
    rank-one ``eps * nu e_j^T`` blocks that carry the divergence term."""
    nu = np.asarray(nu)
    d = nu.shape[-1]
    batch = nu.shape[:-1]
    out = []
    for j, Bj in enumerate(maxwell_matrices(d)):
        A = np.array(np.broadcast_to(Bj, batch + Bj.shape), dtype=np.result_type(nu, float))
        A[..., :d, j] += eps * nu
        if d == 3:
            A[..., 3:, 3 + j] += eps * nu
        out.append(A)
    return tuple(out)


def vacuum_symmetrizer(nu, eps: float):
    nu = np.asarray(nu)
    d = nu.shape[-1]
    batch = nu.shape[:-1]
    z = eps * nu
    if d == 3:
        S = np.array(np.broadcast_to(np.eye(6), batch + (6, 6)), dtype=np.result_type(nu, float))
        n1, n2, n3 = z[..., 0], z[..., 1], z[..., 2]
        # eps * [nu]_x couples h and e
        C = np.zeros(batch + (3, 3), dtype=S.dtype)
        C[..., 0, 1], C[..., 0, 2] = n3, -n2
        C[..., 1, 0], C[..., 1, 2] = -n3, n1
        C[..., 2, 0], C[..., 2, 1] = n2, -n1
        S[..., :3, 3:] = C
        S[..., 3:, :3] = np.swapaxes(C, -1, -2)
        return S
    if d == 2:
        S = np.array(np.broadcast_to(np.eye(3), batch + (3, 3)), dtype=np.result_type(nu, float))
        S[..., 0, 2] = S[..., 2, 0] = -z[..., 1]
        S[..., 1, 2] = S[..., 2, 1] = z[..., 0]
        return S
    raise ValueError("d must be 2 or 3")


def assemble_plasma(state: PlasmaState, eos: Eos) -> PlasmaSymbols:
    return plasma_symbols(state, eos)


def assemble_vacuum(nu, eps: float, d: int | None = None) -> VacuumSymbols:
    nu = np.asarray(nu, dtype=float)
    if d is not None and nu.shape[-1] != d:
        raise ValueError("nu has the wrong dimension")
    if np.any(eps * np.linalg.norm(nu, axis=-1) >= 1.0):
        raise PhysicalConditionViolated("eps*|nu| must be < 1")
    return VacuumSymbols(
        A=vacuum_matrices(nu, eps),
        S=vacuum_symmetrizer(nu, eps),
        B=maxwell_matrices(nu.shape[-1]),
    )


def assemble_system(state: PlasmaState, nu, eos: Eos) -> SystemSymbols:
    return SystemSymbols(plasma_symbols(state, eos), assemble_vacuum(nu, state.eps))


def normal_vector(grad_phi):
    """``N = (1, -grad' phi)``."""
    g = np.asarray(grad_phi, dtype=float)
    return np.concatenate([np.ones(g.shape[:-1] + (1,)), -g], axis=-1)


@dataclass(frozen=True)
class BoundaryMatrices:
    Ab_plus: np.ndarray
    Ab_minus: np.ndarray

    def full(self):
        n1 = self.Ab_plus.shape[-1]
        n2 = self.Ab_minus.shape[-1]
        batch = np.broadcast_shapes(self.Ab_plus.shape[:-2], self.Ab_minus.shape[:-2])
        M = np.zeros(batch + (n1 + n2, n1 + n2))
        M[..., :n1, :n1] = self.Ab_plus
        M[..., n1:, n1:] = self.Ab_minus
        return M


def boundary_matrices(
    state: PlasmaState,
    nu,
    dphi_t,
    grad_phi,
    eos: Eos,
    reformed: bool = False,
) -> BoundaryMatrices:
    """``Ab+ = dt(phi) I - N_j A_j^+`` and ``Ab- = -eps dt(phi) I + N_j M_j`` with
    ``M_j`` the Maxwell symbols or, if ``reformed``, ``A_j^-(nu)``."""
    eps = state.eps
    d = state.d
    N = normal_vector(grad_phi)
    dphi_t = np.asarray(dphi_t, dtype=float)
    ps = plasma_symbols(state, eos)
    n = 2 * d + 2
    Ab_plus = dphi_t[..., None, None] * np.eye(n) - sum(
        N[..., j, None, None] * ps.A[j] for j in range(d)
    )
    mats = vacuum_matrices(np.asarray(nu, float), eps) if reformed else maxwell_matrices(d)
    m = 3 * d - 3
    Ab_minus = -eps * dphi_t[..., None, None] * np.eye(m) + sum(
        N[..., j, None, None] * mats[j] for j in range(d)
    )
    return BoundaryMatrices(Ab_plus=Ab_plus, Ab_minus=Ab_minus)
