"""Linearization about a basic ("ring") state and the change-of-variables chain
that isolates the noncharacteristic unknowns.

Conventions
-----------
Plasma perturbations ``U`` have layout ``(q, v, H, S)`` on the last axis,
vacuum perturbations ``u`` have layout ``(h, e)`` (3D) or ``(h1, h2, e)``
(2D).  Normal derivatives of the basic state that enter boundary
coefficients are taken in the orientation of the physical normal, i.e.
``d1 f / d1 Phi^{+-}``; on the interface this is ``+d1`` on the plasma
side and ``-d1`` on the vacuum side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .assembly import (
    maxwell_matrices,
    plasma_symbols,
    vacuum_matrices,
    vacuum_symmetrizer,
)
from .errors import ConstraintViolated, DegenerateJacobian, SingularTransform
from .geometry import Cutoff, Grid, open_diff, periodic_diff
from .state import Eos, PlasmaState, lorentz_factor


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def normal_from_grad(grad):
    grad = np.asarray(grad, float)
    return np.concatenate([np.ones(grad.shape[:-1] + (1,)), -grad], axis=-1)


def split_plasma(U):
    U = np.asarray(U)
    d = (U.shape[-1] - 2) // 2
    return U[..., 0], U[..., 1 : 1 + d], U[..., 1 + d : 1 + 2 * d], U[..., -1]


def split_vacuum(u):
    """Return ``(h, e)`` with ``e`` a vector in 3D and a scalar array in 2D."""
    u = np.asarray(u)
    if u.shape[-1] == 6:
        return u[..., :3], u[..., 3:]
    if u.shape[-1] == 3:
        return u[..., :2], u[..., 2]
    raise ValueError("vacuum vectors have 3 (2D) or 6 (3D) components")


# ----------------------------------------------------------------------------
# interface traces of the basic state


@dataclass(frozen=True)
class SurfaceRing:
    """Basic-state data on the interface.

    ``dU1`` and ``du1`` are raw fixed-domain ``d1`` derivatives; ``d1Phi_plus``
    and ``d1Phi_minus`` default to ``+1`` and ``-1`` (the cut-off is flat at
    the boundary).
    """

    U: np.ndarray
    u: np.ndarray
    dU1: np.ndarray
    du1: np.ndarray
    dphi_t: np.ndarray
    grad_phi: np.ndarray
    eps: float = 1.0
    d1Phi_plus: float | np.ndarray = 1.0
    d1Phi_minus: float | np.ndarray = -1.0

    def __post_init__(self):
        for name in ("U", "u", "dU1", "du1", "dphi_t", "grad_phi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))

    @property
    def d(self) -> int:
        return (self.U.shape[-1] - 2) // 2

    @property
    def N(self):
        return normal_from_grad(self.grad_phi)

    @property
    def nU(self):
        return self.dU1 / np.asarray(self.d1Phi_plus)[..., None]

    @property
    def nu_(self):
        return self.du1 / np.asarray(self.d1Phi_minus)[..., None]

    def constraint_defects(self):
        """Residuals of ``h.N``, ``H.N`` and ``dt phi - v.N`` on the interface."""
        _, v, H, _ = split_plasma(self.U)
        h, _ = split_vacuum(self.u)
        N = self.N
        return {
            "h.N": _dot(h, N),
            "H.N": _dot(H, N),
            "kinematic": self.dphi_t - _dot(v, N),
        }

    def check(self, tol: float = 1e-8):
        for name, r in self.constraint_defects().items():
            if np.max(np.abs(r), initial=0.0) > tol:
                raise ConstraintViolated(f"basic state violates {name} on the interface")


# ----------------------------------------------------------------------------
# boundary operators


def boundary_operator(U, u, dphi_t, grad_phi, eps: float):
    """Nonlinear interface operator (kinematics, pressure balance, e/h coupling)."""
    q, v, H, S = split_plasma(U)
    h, e = split_vacuum(u)
    N = normal_from_grad(grad_phi)
    d = v.shape[-1]
    rows = [dphi_t - _dot(v, N), q - 0.5 * _dot(h, h) + 0.5 * (_dot(e, e) if d == 3 else e**2)]
    if d == 3:
        rows.append(e[..., 1] + grad_phi[..., 0] * e[..., 0] - eps * dphi_t * h[..., 2])
        rows.append(e[..., 2] + grad_phi[..., 1] * e[..., 0] + eps * dphi_t * h[..., 1])
    else:
        rows.append(e + eps * dphi_t * h[..., 1])
    return np.stack(rows, axis=-1)


def linearized_boundary_operator(dU, du, psi, dpsi_t, grad_psi, ring: SurfaceRing):
    """Linearization of :func:`boundary_operator` at the basic state."""
    eps = ring.eps
    q, v, H, S = split_plasma(dU)
    h, e = split_vacuum(du)
    _, v0, _, _ = split_plasma(ring.U)
    h0, e0 = split_vacuum(ring.u)
    N = ring.N
    d = ring.d
    grad_psi = np.asarray(grad_psi, float)
    rows = [dpsi_t + _dot(v0[..., 1:], grad_psi) - _dot(v, N)]
    if d == 3:
        rows.append(q - _dot(h0, h) + _dot(e0, e))
        gp = ring.grad_phi
        rows.append(
            e[..., 1]
            + gp[..., 0] * e[..., 0]
            - eps * ring.dphi_t * h[..., 2]
            + e0[..., 0] * grad_psi[..., 0]
            - eps * h0[..., 2] * dpsi_t
        )
        rows.append(
            e[..., 2]
            + gp[..., 1] * e[..., 0]
            + eps * ring.dphi_t * h[..., 1]
            + e0[..., 0] * grad_psi[..., 1]
            + eps * h0[..., 1] * dpsi_t
        )
    else:
        rows.append(q - _dot(h0, h) + e0 * e)
        rows.append(e + eps * ring.dphi_t * h[..., 1] + eps * h0[..., 1] * dpsi_t)
    return np.stack(rows, axis=-1)


def boundary_coefficients(ring: SurfaceRing):
    """Coefficient vector multiplying ``psi`` once the perturbation is written in
    good unknowns: the frozen linearized operator applied to the normal
    derivatives of the basic state."""
    zero = np.zeros(np.shape(ring.dphi_t))
    zg = np.zeros(np.shape(ring.grad_phi))
    return linearized_boundary_operator(ring.nU, ring.nu_, zero, zero, zg, ring)


def effective_boundary_operator(dU_dot, du_dot, psi, dpsi_t, grad_psi, ring: SurfaceRing):
    """Boundary operator acting on good unknowns: linearized operator plus ``psi b``."""
    b = boundary_coefficients(ring)
    base = linearized_boundary_operator(dU_dot, du_dot, psi, dpsi_t, grad_psi, ring)
    return base + np.asarray(psi)[..., None] * b


def derived_coefficients(ring: SurfaceRing):
    """Combinations used by the reformulated interface rows.

    Returns a dict with ``zeta`` (3D), ``b5_3d``/``b6_3d`` (3D) or
    ``b4_2d`` and ``b5_2d`` (2D) alongside the raw ``b`` rows.
    """
    eps = ring.eps
    b = boundary_coefficients(ring)
    _, v0, _, _ = split_plasma(ring.U)
    h0, e0 = split_vacuum(ring.u)
    nh = split_vacuum(ring.nu_)[0]
    nh_N = _dot(nh, ring.N)
    out = {"b": b}
    if ring.d == 3:
        out["zeta"] = e0[..., 0] + eps * v0[..., 1] * h0[..., 2] - eps * v0[..., 2] * h0[..., 1]
        out["b5_3d"] = b[..., 2] + eps * v0[..., 2] * nh_N
        out["b6_3d"] = b[..., 3] - eps * v0[..., 1] * nh_N
    else:
        out["b4_2d"] = b[..., 2] - eps * v0[..., 1] * nh_N
        out["b5_2d"] = eps * h0[..., 1] * b[..., 0] - out["b4_2d"]
    return out


def reformed_boundary_operator(W, w, psi, dpsi_t, grad_psi, ring: SurfaceRing):
    """Interface rows expressed in ``(W, w, psi)``."""
    eps = ring.eps
    c = derived_coefficients(ring)
    b = c["b"]
    _, v0, _, _ = split_plasma(ring.U)
    h0, _ = split_vacuum(ring.u)
    grad_psi = np.asarray(grad_psi, float)
    transport = dpsi_t + _dot(v0[..., 1:], grad_psi)
    rows = [W[..., 1] - transport - b[..., 0] * psi]
    if ring.d == 3:
        z = c["zeta"]
        rows.append(
            W[..., 0] - h0[..., 1] * w[..., 1] - h0[..., 2] * w[..., 2] + z * w[..., 3] + b[..., 1] * psi
        )
        rows.append(
            w[..., 4] - eps * h0[..., 2] * transport + z * grad_psi[..., 0] + c["b5_3d"] * psi
        )
        rows.append(
            w[..., 5] + eps * h0[..., 1] * transport + z * grad_psi[..., 1] + c["b6_3d"] * psi
        )
    else:
        rows.append(W[..., 0] - h0[..., 1] * w[..., 1] + b[..., 1] * psi)
        rows.append(w[..., 2] + eps * h0[..., 1] * transport + c["b4_2d"] * psi)
    return np.stack(rows, axis=-1)


def surface_constraints(dU_dot, du_dot, psi, grad_psi, ring: SurfaceRing):
    """Linearized tangency of ``H`` and ``h`` written in good unknowns."""
    _, _, H, _ = split_plasma(dU_dot)
    h, _ = split_vacuum(du_dot)
    _, _, H0, _ = split_plasma(ring.U)
    h0, _ = split_vacuum(ring.u)
    nH = split_plasma(ring.nU)[2]
    nh = split_vacuum(ring.nu_)[0]
    N = ring.N
    grad_psi = np.asarray(grad_psi, float)
    psi = np.asarray(psi, float)
    return {
        "H.cons3": _dot(H, N) - _dot(H0[..., 1:], grad_psi) + _dot(nH, N) * psi,
        "h.cons3": _dot(h, N) - _dot(h0[..., 1:], grad_psi) + _dot(nh, N) * psi,
    }


# ----------------------------------------------------------------------------
# change of variables


def J1_matrix(grad_Phi_plus, d: int):
    """``U = J1 W`` with ``W = (q, N.v, v', N.H, H', S)``."""
    g = np.asarray(grad_Phi_plus, float)
    batch = g.shape[:-1]
    n = 2 * d + 2
    J = np.array(np.broadcast_to(np.eye(n), batch + (n, n)))
    J[..., 1, 2 : 1 + d] = g
    J[..., 1 + d, 2 + d : 1 + 2 * d] = g
    return J


def J2_inverse(grad_Phi_minus, dt_Phi_minus, eps: float, d: int):
    """Matrix of ``u -> mu``."""
    g = np.asarray(grad_Phi_minus, float)
    a = np.asarray(dt_Phi_minus, float) * eps
    batch = np.broadcast_shapes(g.shape[:-1], a.shape)
    if d == 2:
        M = np.zeros(batch + (3, 3))
        g2 = g[..., 0]
        M[..., 0, 0], M[..., 0, 1] = 1.0, -g2
        M[..., 1, 1], M[..., 1, 0], M[..., 1, 2] = 1.0, g2, a
        M[..., 2, 2], M[..., 2, 1] = 1.0, a
        return M
    M = np.zeros(batch + (6, 6))
    g2, g3 = g[..., 0], g[..., 1]
    M[..., 0, 0], M[..., 0, 1], M[..., 0, 2] = 1.0, -g2, -g3
    M[..., 1, 1], M[..., 1, 0], M[..., 1, 5] = 1.0, g2, a
    M[..., 2, 2], M[..., 2, 0], M[..., 2, 4] = 1.0, g3, -a
    M[..., 3, 3], M[..., 3, 4], M[..., 3, 5] = 1.0, -g2, -g3
    M[..., 4, 4], M[..., 4, 3], M[..., 4, 2] = 1.0, g2, -a
    M[..., 5, 5], M[..., 5, 3], M[..., 5, 1] = 1.0, g3, a
    return M


def J3_inverse(nu, eps: float):
    """Matrix of ``mu -> w``."""
    nu = np.asarray(nu, float)
    d = nu.shape[-1]
    batch = nu.shape[:-1]
    if d == 2:
        M = np.array(np.broadcast_to(np.eye(3), batch + (3, 3)))
        M[..., 2, 0] = -eps * nu[..., 1]
        return M
    M = np.array(np.broadcast_to(np.eye(6), batch + (6, 6)))
    M[..., 1, 3] = -eps * nu[..., 2]
    M[..., 2, 3] = eps * nu[..., 1]
    M[..., 4, 0] = eps * nu[..., 2]
    M[..., 5, 0] = -eps * nu[..., 1]
    return M


@dataclass
class TransformChain:
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    W: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    condition: dict = field(default_factory=dict)


def transform_chain(dU, du, grad_Phi_plus, grad_Phi_minus, dt_Phi_minus, nu, eps, cond_max=1e8):
    """Apply ``W = J1^-1 U``, ``mu = J2^-1 u`` and ``w = J3^-1 mu`` pointwise."""
    dU = np.asarray(dU, float)
    du = np.asarray(du, float)
    d = (dU.shape[-1] - 2) // 2
    J1 = J1_matrix(grad_Phi_plus, d)
    J2i = J2_inverse(grad_Phi_minus, dt_Phi_minus, eps, d)
    J3i = J3_inverse(nu, eps)
    conds = {}
    for name, M in (("J1", J1), ("J2", J2i), ("J3", J3i)):
        c = float(np.max(np.linalg.cond(M), initial=1.0))
        conds[name] = c
        if not np.isfinite(c) or c > cond_max:
            raise SingularTransform(f"{name} condition number {c:.3g} exceeds {cond_max:.1g}")
    J2 = np.linalg.inv(J2i)
    J3 = np.linalg.inv(J3i)
    W = np.linalg.solve(J1, dU[..., None])[..., 0]
    mu = (J2i @ du[..., None])[..., 0]
    w = (J3i @ mu[..., None])[..., 0]
    return TransformChain(J1=J1, J2=J2, J3=J3, W=W, mu=mu, w=w, condition=conds)


def inverse_chain(W, w, grad_Phi_plus, grad_Phi_minus, dt_Phi_minus, nu, eps):
    W = np.asarray(W, float)
    d = (W.shape[-1] - 2) // 2
    U = (J1_matrix(grad_Phi_plus, d) @ W[..., None])[..., 0]
    mu = np.linalg.solve(J3_inverse(nu, eps), np.asarray(w, float)[..., None])
    u = np.linalg.solve(J2_inverse(grad_Phi_minus, dt_Phi_minus, eps, d), mu)[..., 0]
    return U, u


# ----------------------------------------------------------------------------
# reformulated coefficient matrices


@dataclass(frozen=True)
class ReformedSymbols:
    plus: tuple  # bold A_0^+, A_1^+, ..., A_d^+
    minus: tuple


def transformed_normal_matrix(A, dt_Phi, d1_Phi, grad_Phi, time_coeff: float = 1.0):
    """``(1/d1 Phi)(-c dt Phi I + A_1 - sum_j d_j Phi A_j)`` with ``c`` the time coefficient."""
    n = A[0].shape[-1]
    out = -time_coeff * np.asarray(dt_Phi)[..., None, None] * np.eye(n) + A[0]
    for j in range(1, len(A)):
        out = out - np.asarray(grad_Phi)[..., j - 1, None, None] * A[j]
    return out / np.asarray(d1_Phi)[..., None, None]


def reformed_symbols(
    U_ring: PlasmaState,
    nu,
    dt_Phi,
    d1_Phi_plus,
    d1_Phi_minus,
    grad_Phi,
    eos: Eos,
) -> ReformedSymbols:
    """Bold coefficient matrices of the ``(W, w)`` system (principal part only)."""
    eps = U_ring.eps
    d = U_ring.d
    ps = plasma_symbols(U_ring, eos)
    gam = lorentz_factor(U_ring.v, eps)
    J1 = J1_matrix(grad_Phi, d)
    J1T = np.swapaxes(J1, -1, -2)
    Sp = ps.S
    At1p = transformed_normal_matrix(ps.A, dt_Phi, d1_Phi_plus, grad_Phi)
    scale = (eps / gam)[..., None, None]
    plus = [scale * (J1T @ Sp @ J1), scale * (J1T @ Sp @ At1p @ J1)]
    for j in range(1, d):
        plus.append(scale * (J1T @ Sp @ ps.A[j] @ J1))

    Am = vacuum_matrices(nu, eps)
    Sm = vacuum_symmetrizer(nu, eps)
    J2 = np.linalg.inv(J2_inverse(grad_Phi, dt_Phi, eps, d))
    J3 = np.linalg.inv(J3_inverse(nu, eps))
    J2T, J3T = np.swapaxes(J2, -1, -2), np.swapaxes(J3, -1, -2)
    At1m = transformed_normal_matrix(Am, dt_Phi, d1_Phi_minus, grad_Phi, time_coeff=eps)
    wrap = lambda M: J3T @ (J2T @ M @ J2) @ J3  # noqa: E731
    minus = [wrap(eps * Sm), wrap(Sm @ At1m)]
    for j in range(1, d):
        minus.append(wrap(Sm @ Am[j]))
    return ReformedSymbols(plus=tuple(plus), minus=tuple(minus))


def boundary_forms(d: int, eps: float):
    """Target matrices of the normal coefficients on the interface."""
    n = 2 * d + 2
    Bp = np.zeros((n, n))
    Bp[0, 1] = Bp[1, 0] = eps
    if d == 3:
        Bm = np.zeros((6, 6))
        Bm[1, 5] = Bm[5, 1] = 1.0
        Bm[2, 4] = Bm[4, 2] = -1.0
    else:
        Bm = np.zeros((3, 3))
        Bm[1, 2] = Bm[2, 1] = 1.0
    return Bp, Bm


def quadratic_boundary_form(W, w, eps: float):
    W = np.asarray(W)
    w = np.asarray(w)
    if w.shape[-1] == 6:
        return 2 * eps * W[..., 0] * W[..., 1] + 2 * w[..., 1] * w[..., 5] - 2 * w[..., 2] * w[..., 4]
    return 2 * eps * W[..., 0] * W[..., 1] + 2 * w[..., 1] * w[..., 2]


# ----------------------------------------------------------------------------
# basic state on a grid


@dataclass
class RingState:
    """Stationary basic state on a half-space grid.

    Field arrays have shape ``(*grid.shape, ncomp)``; the front ``phi`` and its
    frozen time derivative live on the tangential grid.
    """

    grid: Grid
    eos: Eos
    eps: float
    U: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    dphi_t: np.ndarray
    dU1: np.ndarray | None = None
    du1: np.ndarray | None = None
    cutoff: Cutoff = field(default_factory=Cutoff)
    verified: dict = field(default_factory=dict)

    def __post_init__(self):
        self.U = np.asarray(self.U, float)
        self.u = np.asarray(self.u, float)
        self.phi = np.asarray(self.phi, float)
        self.dphi_t = np.broadcast_to(np.asarray(self.dphi_t, float), self.phi.shape)
        if self.dU1 is None:
            self.dU1 = open_diff(self.U, self.grid.dx1, axis=0)
        if self.du1 is None:
            self.du1 = open_diff(self.u, self.grid.dx1, axis=0)

    @property
    def d(self):
        return self.grid.d

    def _lift(self, s, profile):
        return s[None] * profile.reshape((-1,) + (1,) * len(self.grid.n_tan))

    @property
    def grad_phi(self):
        return np.stack(
            [periodic_diff(self.phi, h, axis=k) for k, h in enumerate(self.grid.dx_tan)], axis=-1
        )

    @property
    def chi(self):
        return self.cutoff(self.grid.x1)

    def grad_Phi(self):
        return self._lift(self.grad_phi, self.chi)[..., :] if False else (
            self.grad_phi[None] * self.chi.reshape((-1,) + (1,) * len(self.grid.n_tan) + (1,))
        )

    def dt_Phi(self):
        return self._lift(self.dphi_t, self.chi)

    def d1_Phi(self, sign: int):
        return sign + self._lift(self.phi, self.cutoff.derivative(self.grid.x1))

    @property
    def nu(self):
        v_sigma = self.U[0, ..., 1 : 1 + self.d]
        return v_sigma[None] * self.chi.reshape((-1,) + (1,) * len(self.grid.n_tan) + (1,))

    def plasma(self) -> PlasmaState:
        return PlasmaState.from_vector(self.U, self.eps)

    def surface(self) -> SurfaceRing:
        return SurfaceRing(
            U=self.U[0],
            u=self.u[0],
            dU1=self.dU1[0],
            du1=self.du1[0],
            dphi_t=self.dphi_t,
            grad_phi=self.grad_phi,
            eps=self.eps,
            d1Phi_plus=self.d1_Phi(+1)[0],
            d1Phi_minus=self.d1_Phi(-1)[0],
        )

    def verify(self, tol: float = 1e-8) -> dict:
        """Check interface constraints, kinematics and admissibility."""
        s = self.surface()
        defects = {k: float(np.max(np.abs(v))) for k, v in s.constraint_defects().items()}
        self.plasma().validate(self.eos)
        if np.any(self.eps * np.linalg.norm(self.nu, axis=-1) >= 1.0):
            raise ConstraintViolated("eps*|nu| must be < 1")
        for k, v in defects.items():
            if v > tol:
                raise ConstraintViolated(f"basic state violates {k}: {v:.3g}")
        self.verified = {k: True for k in defects} | {"admissible": True}
        return defects


def good_unknowns(dU, du, psi, ring: RingState):
    """Alinhac good unknowns ``U - (Psi / d1 Phi^+) d1 U_ring`` and vacuum analog.

    ``dU`` and ``du`` may carry extra leading axes (e.g. time) before the grid axes.
    """
    dU = np.asarray(dU, float)
    du = np.asarray(du, float)
    Psi = _lift_psi(psi, ring)
    Jp = ring.d1_Phi(+1)[..., None]
    Jm = ring.d1_Phi(-1)[..., None]
    if np.min(np.abs(Jp)) < 1e-8 or np.min(np.abs(Jm)) < 1e-8:
        raise DegenerateJacobian("d1 Phi vanishes")
    return dU - Psi / Jp * ring.dU1, du - Psi / Jm * ring.du1


def from_good_unknowns(dU_dot, du_dot, psi, ring: RingState):
    Psi = _lift_psi(psi, ring)
    return (
        np.asarray(dU_dot) + Psi / ring.d1_Phi(+1)[..., None] * ring.dU1,
        np.asarray(du_dot) + Psi / ring.d1_Phi(-1)[..., None] * ring.du1,
    )


def _lift_psi(psi, ring: RingState):
    psi = np.asarray(psi, float)
    k = len(ring.grid.n_tan)
    chi = ring.chi.reshape((-1,) + (1,) * k)
    lead = psi.shape[: psi.ndim - k]
    out = psi.reshape(lead + (1,) + ring.grid.n_tan) * chi
    return out[..., None]


# ----------------------------------------------------------------------------
# residual evaluators


def cancellation_residual(w4, mu2, mu3, dt: float, dx2: float, dx3: float, eps: float):
    """``eps dt w4 + d3 mu2 - d2 mu3`` on interface traces of shape ``(nt, n2, n3)``."""
    return (
        eps * open_diff(np.asarray(w4, float), dt, axis=0)
        + periodic_diff(np.asarray(mu2, float), dx3, axis=2)
        - periodic_diff(np.asarray(mu3, float), dx2, axis=1)
    )


def divergence_residual(field_vec, d1_Phi, grad_Phi, grid: Grid):
    """``d1(F.N) + div'(d1 Phi F')`` for a vector field on the grid (last axis
    components, leading axes ``(..., n1, *tan)``)."""
    F = np.asarray(field_vec, float)
    k = len(grid.n_tan)
    N = normal_from_grad(grad_Phi)
    FN = _dot(F, N)
    ax1 = F.ndim - 2 - k
    out = open_diff(FN, grid.dx1, axis=ax1)
    for j in range(k):
        out = out + periodic_diff(d1_Phi * F[..., 1 + j], grid.dx_tan[j], axis=ax1 + 1 + j)
    return out


def constraint_residuals(dU, du, psi, ring: RingState, which: str):
    """Residual of one homogeneous constraint for perturbation fields on the grid.

    ``which`` is one of ``H.cons3``, ``h.cons3`` (interface, needs ``psi``) or
    ``H.inv3``, ``h.inv3``, ``e.inv3`` (interior).
    """
    dU = np.asarray(dU, float)
    du = np.asarray(du, float)
    d = ring.d
    if which in ("H.cons3", "h.cons3"):
        psi = np.asarray(psi, float)
        grad_psi = np.stack(
            [periodic_diff(psi, h, axis=psi.ndim - len(ring.grid.n_tan) + k)
             for k, h in enumerate(ring.grid.dx_tan)],
            axis=-1,
        )
        ax = dU.ndim - 2 - len(ring.grid.n_tan)
        Us = np.take(dU, 0, axis=ax)
        us = np.take(du, 0, axis=ax)
        return surface_constraints(Us, us, psi, grad_psi, ring.surface())[which]
    if which == "H.inv3":
        return divergence_residual(dU[..., 1 + d : 1 + 2 * d], ring.d1_Phi(+1), ring.grad_Phi(), ring.grid)
    h, e = split_vacuum(du)
    if which == "h.inv3":
        return divergence_residual(h, ring.d1_Phi(-1), ring.grad_Phi(), ring.grid)
    if which == "e.inv3":
        if d != 3:
            raise ValueError("e.inv3 applies to d = 3 only")
        return divergence_residual(e, ring.d1_Phi(-1), ring.grad_Phi(), ring.grid)
    raise ValueError(f"unknown constraint {which!r}")


# ----------------------------------------------------------------------------
# auxiliary vacuum problem


@dataclass
class ReducedVacuumProblem:
    """Vacuum problem with homogeneous, maximally nonnegative interface rows."""

    g5: np.ndarray
    u_sharp: np.ndarray
    forcing: np.ndarray
    dt: float


def vacuum_aux_reduce(fminus, g, ring: RingState, dt: float, vacuum_operator=None):
    """Build the interface datum ``g5`` (normal vacuum field), its lifting
    ``u_sharp`` and, if a discrete vacuum operator is supplied, the reduced
    forcing ``f - L u_sharp``.

    ``fminus`` has shape ``(nt, *grid.shape, 3d-3)``; ``g`` holds the
    e/h-coupling interface data with shape ``(nt, *n_tan, d-1)``.
    """
    fminus = np.asarray(fminus, float)
    g = np.asarray(g, float)
    grid = ring.grid
    eps = ring.eps
    gp = ring.grad_phi
    f_s = fminus[:, 0]
    k = len(grid.n_tan)
    if grid.d == 3:
        integrand = (
            f_s[..., 0]
            - gp[..., 0] * f_s[..., 1]
            - gp[..., 1] * f_s[..., 2]
            - periodic_diff(g[..., 1], grid.dx_tan[0], axis=1)
            + periodic_diff(g[..., 0], grid.dx_tan[1], axis=2)
        )
    else:
        integrand = (
            f_s[..., 0]
            - gp[..., 0] * f_s[..., 1]
            - periodic_diff(g[..., 0], grid.dx_tan[0], axis=1)
        )
    g5 = cumulative_trapezoid(integrand, dx=dt, axis=0, initial=0.0) / eps
    chi = ring.chi.reshape((1, -1) + (1,) * k)
    u_sharp = np.zeros(fminus.shape)
    u_sharp[..., 0] = g5[:, None] * chi
    if grid.d == 3:
        u_sharp[..., 4] = g[:, None, ..., 0] * chi
        u_sharp[..., 5] = g[:, None, ..., 1] * chi
    else:
        u_sharp[..., 2] = g[:, None, ..., 0] * chi
    forcing = fminus
    if vacuum_operator is not None:
        forcing = fminus - vacuum_operator(u_sharp, dt)
    return ReducedVacuumProblem(g5=g5, u_sharp=u_sharp, forcing=forcing, dt=dt)


def maxwell_rows(d: int):
    return maxwell_matrices(d)
