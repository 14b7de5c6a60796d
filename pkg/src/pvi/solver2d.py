"""Finite-difference solver for the two-dimensional effective linear problem.

Unknowns on the grid are the plasma good unknowns ``U`` (6 components) and
the vacuum perturbation ``u`` (3 components), stacked into one 9-vector per
node.  Space: second-order centered differences in ``x1`` with a
summation-by-parts closure (or an explicit second-order one-sided closure)
and centered periodic differences in ``x2``.  Time: classical RK4.

Interface rows are imposed by projecting the semi-discrete right-hand side
at ``x1 = 0`` onto the affine constraint set, orthogonally in the energy
weight ``diag(eps S+ / Gamma, eps S-)`` restricted to the components that
carry a normal derivative.  Since RK4 preserves linear invariants, the rows
then hold at every time level to round-off.  The far
field ``x1 = L`` zeroes incoming characteristics the same way and carries a
ramped sponge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh

from .assembly import plasma_symbols, vacuum_matrices, vacuum_symmetrizer
from .criteria import nonvanishing2d_margin
from .errors import CflViolation, NoContraction, UnstableBlowup
from .geometry import Grid, GridField, periodic_diff, smoothstep5
from .linearized import (
    J1_matrix,
    J2_inverse,
    J3_inverse,
    ReducedVacuumProblem,
    RingState,
    derived_coefficients,
    divergence_residual,
    effective_boundary_operator,
    from_good_unknowns,
    quadratic_boundary_form,
    split_plasma,
    split_vacuum,
    surface_constraints,
    transformed_normal_matrix,
    vacuum_aux_reduce,
)
from .state import Eos, PlasmaState, lorentz_factor

NP, NV = 6, 3
NZ = NP + NV
CFL_LIMIT = 1.0
BLOWUP_FACTOR = 1e6
PLASMA_NAMES = ("q", "v1", "v2", "H1", "H2", "S")
W_NAMES = ("W1", "W2", "W3", "W4", "W5", "W6")
w_NAMES = ("w1", "w2", "w3")


# ----------------------------------------------------------------------------
# reference basic state


def shear_layer_ring(
    grid: Grid,
    eos: Eos | None = None,
    eps: float = 1.0,
    q0: float = 1.0,
    q_slope: float = 0.5,
    v0: float = 0.3,
    v_amp: float = 0.1,
    H0: float = 0.8,
    H_slope: float = 0.2,
    s_amp: float = 0.1,
) -> RingState:
    """Flat, static front over a plasma shear layer and a uniform vacuum field.

    Plasma: ``v = (0, v2(x1, x2))``, ``H = (0, H2(x1))``, total pressure
    ``q(x1, x2)`` with ``q = q0`` on the interface and normal slope
    ``q_slope (1 + cos(x2)/5)``.  Vacuum: ``h = (0, sqrt(2 q0))``, ``e = 0``.
    The induction equation, both tangency conditions, kinematics and
    pressure balance hold exactly.
    """
    eos = eos or Eos()
    if grid.d != 2:
        raise ValueError("the shear-layer ring is two-dimensional")
    x1, x2 = grid.mesh()
    sech2 = 1.0 / np.cosh(x1) ** 2
    mod = 1.0 + 0.2 * np.cos(x2)
    U = np.zeros(grid.shape + (NP,))
    dU1 = np.zeros_like(U)
    U[..., 0] = q0 + q_slope * np.tanh(x1) * mod
    dU1[..., 0] = q_slope * sech2 * mod
    U[..., 2] = v0 + v_amp * np.sin(x2) * np.exp(-x1)
    dU1[..., 2] = -v_amp * np.sin(x2) * np.exp(-x1)
    U[..., 4] = H0 + H_slope * np.tanh(x1)
    dU1[..., 4] = H_slope * sech2
    U[..., 5] = s_amp * np.cos(x2) * np.exp(-(x1**2))
    dU1[..., 5] = -2.0 * x1 * U[..., 5]
    u = np.zeros(grid.shape + (NV,))
    u[..., 1] = np.sqrt(2.0 * q0)
    return RingState(
        grid=grid,
        eos=eos,
        eps=eps,
        U=U,
        u=u,
        phi=np.zeros(grid.n_tan),
        dphi_t=0.0,
        dU1=dU1,
        du1=np.zeros_like(u),
    )


def ramp(t, T: float, fraction: float = 0.05):
    """C2 switch-on over ``[0, fraction * T]``."""
    return smoothstep5(np.asarray(t, float) / (fraction * T))


def reference_problem(
    T: float = 0.1,
    n1: int = 201,
    n2: int = 32,
    L: float = 2.0,
    sponge_width: float = 0.5,
    amplitude: float = 1.0,
    **ring_kw,
) -> "LinearProblem2D":
    """Shear-layer ring with ramped sources near the interface and ramped
    interface data.  The default grid resolves the boundary transient at
    ``T = 0.1`` (``dx1 = 0.01``)."""
    grid = Grid(n1, (n2,), L=L)
    ring = shear_layer_ring(grid, **ring_kw)
    x1, x2 = grid.mesh()
    prof = amplitude * np.exp(-(((x1 - 0.3) / 0.2) ** 2)) * np.cos(x2)
    xs = grid.x_tan[0]
    gshape = amplitude * np.stack([0.02 * np.sin(xs), 0.05 * np.cos(2 * xs), 0.03 * np.sin(xs)], -1)

    def fp(t):
        out = np.zeros(grid.shape + (NP,))
        out[..., 1] = 0.1 * ramp(t, T) * prof
        out[..., 4] = 0.05 * ramp(t, T) * prof
        return out

    def fm(t):
        out = np.zeros(grid.shape + (NV,))
        out[..., 0] = 0.1 * ramp(t, T) * prof * np.sin(x2)
        return out

    def gd(t):
        return ramp(t, T) * gshape

    return LinearProblem2D(ring, T=T, forcing_plus=fp, forcing_minus=fm, boundary_data=gd, sponge_width=sponge_width)


# ----------------------------------------------------------------------------
# problem description


Forcing = Callable[[float], np.ndarray]


@dataclass
class LinearProblem2D:
    """Effective linear problem about a 2D ring.

    ``forcing_plus(t)`` and ``forcing_minus(t)`` return interior sources of
    shapes ``(n1, n2, 6)`` and ``(n1, n2, 3)``; ``boundary_data(t)`` returns
    the three interface data ``(g1, g2, g3)`` with shape ``(n2, 3)``.  Any of
    them may be ``None`` (zero).
    """

    ring: RingState
    T: float = 0.1
    cfl: float = 0.4
    forcing_plus: Forcing | None = None
    forcing_minus: Forcing | None = None
    boundary_data: Forcing | None = None
    sponge_width: float = 2.0
    sponge_strength: float = 1.0
    closure: str = "sbp21"
    tol: float = 1e-8

    def __post_init__(self):
        if self.ring.d != 2:
            raise ValueError("LinearProblem2D needs a two-dimensional ring")
        if self.T <= 0:
            raise ValueError("T must be > 0")
        if not 0 < self.cfl <= CFL_LIMIT:
            raise CflViolation(f"CFL number {self.cfl} outside (0, {CFL_LIMIT}]")
        if self.closure not in ("sbp21", "second"):
            raise ValueError("closure must be 'sbp21' or 'second'")
        self.ring.verify(self.tol)
        _, _, H, _ = split_plasma(self.ring.U[0])
        h, _ = split_vacuum(self.ring.u[0])
        self.stability_margin = nonvanishing2d_margin(H, h)
        if self.stability_margin <= 0:
            raise ValueError("2D stability condition fails: |H| + |h| vanishes on the interface")

    @property
    def grid(self) -> Grid:
        return self.ring.grid

    @property
    def eps(self) -> float:
        return self.ring.eps


# ----------------------------------------------------------------------------
# discrete operators


def normal_derivative(z, h: float, closure: str = "sbp21"):
    """``d/dx1`` along axis 0: centered interior, boundary closure per ``closure``."""
    out = np.empty_like(z)
    out[1:-1] = (z[2:] - z[:-2]) / (2.0 * h)
    if closure == "sbp21":
        out[0] = (z[1] - z[0]) / h
        out[-1] = (z[-1] - z[-2]) / h
    else:
        out[0] = (-3.0 * z[0] + 4.0 * z[1] - z[2]) / (2.0 * h)
        out[-1] = (3.0 * z[-1] - 4.0 * z[-2] + z[-3]) / (2.0 * h)
    return out


def normal_weights(n1: int, h: float):
    """Diagonal norm of the SBP(2,1) operator (trapezoid weights)."""
    w = np.full(n1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _mv(A, z):
    return (A @ z[..., None])[..., 0]


def _block_diag(P, V):
    out = np.zeros(P.shape[:-2] + (NZ, NZ))
    out[..., :NP, :NP] = P
    out[..., NP:, NP:] = V
    return out


@dataclass
class _Operator:
    """Assembled coefficients of one symmetric hyperbolic system on the grid."""

    grid: Grid
    A1: np.ndarray
    A2: np.ndarray
    C0: np.ndarray | None
    M: np.ndarray
    sponge: np.ndarray
    closure: str
    rows: np.ndarray  # (n2, r, c) interface rows
    far_proj: np.ndarray  # (n2, c, c)
    restrict: bool = True
    Q: np.ndarray = field(init=False)
    P0: np.ndarray = field(init=False)

    def __post_init__(self):
        L = self.rows
        c = L.shape[-1]
        # Components without a normal-derivative term need no boundary
        # treatment; keep them out of the correction direction.
        A1b = self.A1[0]
        active = np.max(np.abs(A1b), axis=(0, 2)) > 1e-12 * np.max(np.abs(A1b))
        if not self.restrict:
            active[:] = True
        idx = np.flatnonzero(active)
        Maa = self.M[0][:, idx[:, None], idx]
        La = L[..., idx]
        MiLt = np.linalg.solve(Maa, np.swapaxes(La, -1, -2))
        G = La @ MiLt
        self.Q = np.zeros(L.shape[:-2] + (c, L.shape[-2]))
        self.Q[:, idx, :] = MiLt @ np.linalg.inv(G)
        self.P0 = np.eye(c) - self.Q @ L

    @property
    def ncomp(self):
        return self.A1.shape[-1]

    def max_rate(self) -> float:
        r1 = np.max(np.abs(np.linalg.eigvals(self.A1)), axis=-1)
        r2 = np.max(np.abs(np.linalg.eigvals(self.A2)), axis=-1)
        return float(np.max(r1 / self.grid.dx1 + r2 / self.grid.dx_tan[0]))

    def apply(self, z):
        """Spatial operator ``A1 d1 z + A2 d2 z + C0 z + sponge z``."""
        out = _mv(self.A1, normal_derivative(z, self.grid.dx1, self.closure))
        out += _mv(self.A2, periodic_diff(z, self.grid.dx_tan[0], axis=1))
        if self.C0 is not None:
            out += _mv(self.C0, z)
        out += self.sponge[:, None, None] * z
        return out

    def rhs(self, z, f, dg):
        k = f - self.apply(z)
        k[0] = _mv(self.P0, k[0]) + _mv(self.Q, dg)
        k[-1] = _mv(self.far_proj, k[-1])
        return k

    def inner(self, z, y):
        w = normal_weights(self.grid.n1, self.grid.dx1)
        dens = np.einsum("...i,...ij,...j->...", z, self.M, y)
        return float(np.sum(w[:, None] * dens) * self.grid.dx_tan[0])

    def energy(self, z):
        return self.inner(z, z)


def _far_field_projector(A1, M):
    """M-orthogonal projector removing incoming modes (negative speeds)."""
    n2, c = A1.shape[0], A1.shape[-1]
    out = np.empty((n2, c, c))
    for j in range(n2):
        K = M[j] @ A1[j]
        K = 0.5 * (K + K.T)
        lam, X = eigh(K, M[j])
        tol = 1e-10 * max(np.max(np.abs(lam)), 1e-300)
        Xin = X[:, lam < -tol]
        out[j] = np.eye(c) - Xin @ Xin.T @ M[j]
    return out


def _sponge(grid: Grid, width: float, strength: float):
    if width <= 0 or strength == 0:
        return np.zeros(grid.n1)
    return strength * smoothstep5((grid.x1 - (grid.L - width)) / width)


def _complex_step_coupling(ring: RingState, eos: Eos, h: float = 1e-30):
    """Zero-order coupling ``C[:, k] = dA1~/dU_k d1 U + dA2/dU_k d2 U``."""
    U = ring.U
    eps = ring.eps
    dU2 = periodic_diff(U, ring.grid.dx_tan[0], axis=1)
    C = np.zeros(U.shape + (NP,))
    for k in range(NP):
        Uc = U.astype(complex)
        Uc[..., k] += 1j * h
        ps = plasma_symbols(PlasmaState.from_vector(Uc, eps), eos)
        A1 = transformed_normal_matrix(ps.A, ring.dt_Phi(), ring.d1_Phi(+1), ring.grad_Phi())
        C[..., k] = _mv(A1.imag / h, ring.dU1) + _mv(ps.A[1].imag / h, dU2)
    return C


@dataclass
class _Transforms:
    """Pointwise maps ``W = T_plus U`` and ``w = T_minus u`` on the interface."""

    T_plus: np.ndarray  # (n1, n2, 6, 6)
    T_minus: np.ndarray  # (n1, n2, 3, 3)


def _transforms(ring: RingState) -> _Transforms:
    J1 = J1_matrix(ring.grad_Phi(), 2)
    J2i = J2_inverse(ring.grad_Phi(), ring.dt_Phi(), ring.eps, 2)
    J3i = J3_inverse(ring.nu, ring.eps)
    return _Transforms(T_plus=np.linalg.inv(J1), T_minus=J3i @ J2i)


@dataclass
class _Setup:
    """Everything about a problem that does not depend on ``psi`` or the data."""

    problem: LinearProblem2D
    coupled: _Operator
    vacuum: _Operator
    transforms: _Transforms
    coeffs: dict
    dt: float
    times: np.ndarray


def _assemble(problem: LinearProblem2D) -> _Setup:
    ring = problem.ring
    grid = ring.grid
    eps = ring.eps
    eos = ring.eos
    ps = plasma_symbols(ring.plasma(), eos)
    A1p = transformed_normal_matrix(ps.A, ring.dt_Phi(), ring.d1_Phi(+1), ring.grad_Phi())
    A2p = ps.A[1]
    Cp = _complex_step_coupling(ring, eos)
    gam = lorentz_factor(ring.plasma().v, eps)
    Mp = (eps / gam)[..., None, None] * ps.S

    Am = vacuum_matrices(ring.nu, eps)
    Sm = vacuum_symmetrizer(ring.nu, eps)
    A1m = transformed_normal_matrix(Am, ring.dt_Phi(), ring.d1_Phi(-1), ring.grad_Phi(), time_coeff=eps) / eps
    A2m = Am[1] / eps
    Mm = eps * Sm

    sponge = _sponge(grid, problem.sponge_width, problem.sponge_strength)
    tr = _transforms(ring)
    surf = ring.surface()
    coeffs = derived_coefficients(surf)
    h2 = ring.u[0, :, 1]

    # interface rows in the stacked unknown (U, u)
    Tp, Tm = tr.T_plus[0], tr.T_minus[0]
    rows = np.zeros(grid.n_tan + (2, NZ))
    rows[:, 0, :NP] = Tp[:, 0]
    rows[:, 0, NP:] = -h2[:, None] * Tm[:, 1]
    rows[:, 1, :NP] = eps * h2[:, None] * Tp[:, 1]
    rows[:, 1, NP:] = Tm[:, 2]

    A1 = _block_diag(A1p, A1m)
    M = _block_diag(Mp, Mm)
    coupled = _Operator(
        grid=grid,
        A1=A1,
        A2=_block_diag(A2p, A2m),
        C0=_block_diag(Cp, np.zeros(grid.shape + (NV, NV))),
        M=M,
        sponge=sponge,
        closure=problem.closure,
        rows=rows,
        far_proj=_far_field_projector(A1[-1], M[-1]),
    )
    vrows = np.zeros(grid.n_tan + (1, NV))
    vrows[:, 0, 1] = eps * ring.dphi_t
    vrows[:, 0, 2] = 1.0
    vacuum = _Operator(
        grid=grid,
        A1=A1m,
        A2=A2m,
        C0=None,
        M=Mm,
        sponge=sponge,
        closure=problem.closure,
        rows=vrows,
        far_proj=_far_field_projector(A1m[-1], Mm[-1]),
    )
    dt_max = problem.cfl / coupled.max_rate()
    nt = max(int(np.ceil(problem.T / dt_max - 1e-12)), 1)
    dt = problem.T / nt
    return _Setup(
        problem=problem,
        coupled=coupled,
        vacuum=vacuum,
        transforms=tr,
        coeffs=coeffs,
        dt=dt,
        times=np.arange(nt + 1) * dt,
    )


def _rk4(op: _Operator, times, forcing, gnodes, data_scale: float):
    """Integrate ``z' = -op z + f`` from zero with the interface rows equal to
    ``gnodes[n]`` at ``times[n]``.  ``forcing(t)`` returns the stacked source."""
    nt = len(times) - 1
    dt = times[1] - times[0] if nt else 0.0
    shape = op.grid.shape + (op.ncomp,)
    Z = np.zeros((nt + 1,) + shape)
    z = np.zeros(shape)
    if np.any(gnodes[0]):
        z[0] = _mv(op.Q, gnodes[0])
    Z[0] = z
    scale = data_scale
    for n in range(nt):
        t = times[n]
        dg = (gnodes[n + 1] - gnodes[n]) / dt
        f0, fh, f1 = forcing(t), forcing(t + 0.5 * dt), forcing(t + dt)
        k1 = op.rhs(z, f0, dg)
        k2 = op.rhs(z + 0.5 * dt * k1, fh, dg)
        k3 = op.rhs(z + 0.5 * dt * k2, fh, dg)
        k4 = op.rhs(z + dt * k3, f1, dg)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        Z[n + 1] = z
        scale = max(scale, float(np.max(np.abs(f1), initial=0.0)))
        if scale > 0 and not np.all(np.abs(z) <= BLOWUP_FACTOR * scale):
            raise UnstableBlowup(f"solution exceeded {BLOWUP_FACTOR:g} x data scale at t = {times[n + 1]:.4g}")
    return Z


def _stack_forcing(problem: LinearProblem2D, plus=True, minus=True):
    grid = problem.grid
    eps = problem.eps
    fp, fm = problem.forcing_plus, problem.forcing_minus

    def forcing(t):
        out = np.zeros(grid.shape + (NZ,))
        if plus and fp is not None:
            out[..., :NP] = fp(t)
        if minus and fm is not None:
            out[..., NP:] = fm(t) / eps
        return out

    return forcing


def _boundary_nodes(problem: LinearProblem2D, times):
    n2 = problem.grid.n_tan[0]
    g = np.zeros((len(times), n2, 3))
    if problem.boundary_data is not None:
        for n, t in enumerate(times):
            g[n] = problem.boundary_data(t)
    return g


def _row_data(setup: _Setup, g, psi):
    """Right-hand sides of the two projected rows from ``(g1, g2, g3)`` and ``psi``."""
    eps = setup.problem.eps
    h2 = setup.problem.ring.u[0, :, 1]
    c = setup.coeffs
    out = np.empty(g.shape[:-1] + (2,))
    out[..., 0] = g[..., 1] - c["b"][..., 1] * psi
    out[..., 1] = g[..., 2] - eps * h2 * g[..., 0] + c["b5_2d"] * psi
    return out


@dataclass
class BvpSolution:
    """Stacked history ``Z[t, x1, x2, (U, u)]`` and the transformed unknowns."""

    times: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    w: np.ndarray

    @property
    def U(self):
        return self.Z[..., :NP]

    @property
    def u(self):
        return self.Z[..., NP:]

    @property
    def W2_trace(self):
        return self.W[:, 0, :, 1]


def _to_bvp_solution(setup: _Setup, Z) -> BvpSolution:
    tr = setup.transforms
    W = _mv(tr.T_plus, Z[..., :NP])
    w = _mv(tr.T_minus, Z[..., NP:])
    return BvpSolution(times=setup.times, Z=Z, W=W, w=w)


def _solve_coupled(setup: _Setup, forcing, g, psi) -> BvpSolution:
    rows = _row_data(setup, g, psi)
    scale = float(max(np.max(np.abs(g), initial=0.0), np.max(np.abs(psi), initial=0.0)))
    Z = _rk4(setup.coupled, setup.times, forcing, rows, scale)
    return _to_bvp_solution(setup, Z)


def solve_hyperbolic_bvp(problem: LinearProblem2D, psi=None, setup: _Setup | None = None) -> BvpSolution:
    """Solve the coupled interior systems with a prescribed front history.

    ``psi`` has shape ``(nt + 1, n2)`` on the solver time grid (``None``
    means zero).  The vacuum source is applied directly here; the fixed-point
    driver routes it through the auxiliary reduction instead.
    """
    setup = setup or _assemble(problem)
    g = _boundary_nodes(problem, setup.times)
    psi = np.zeros(g.shape[:-1]) if psi is None else np.asarray(psi, float)
    if psi.shape != g.shape[:-1]:
        raise ValueError(f"psi must have shape {g.shape[:-1]}")
    return _solve_coupled(setup, _stack_forcing(problem), g, psi)


def prepare(problem: LinearProblem2D) -> _Setup:
    """Assemble coefficients and the time grid once for repeated solves."""
    return _assemble(problem)


# ----------------------------------------------------------------------------
# front transport


def _upwind(phi, speed, h):
    back = (3.0 * phi - 4.0 * np.roll(phi, 1, axis=-1) + np.roll(phi, 2, axis=-1)) / (2.0 * h)
    fwd = -(3.0 * phi - 4.0 * np.roll(phi, -1, axis=-1) + np.roll(phi, -2, axis=-1)) / (2.0 * h)
    return np.where(speed >= 0, back, fwd)


def transport_front(W2, ring: RingState, dt: float, g1=None, speed=None, damping=None):
    """Solve ``(dt + v2 d2 + b1) phi = W2 + g1`` from ``phi(0) = 0``.

    ``W2`` (and ``g1``) are sampled at ``nt + 1`` equally spaced times; the
    speed and damping default to the ring's interface values.
    """
    W2 = np.asarray(W2, float)
    src = W2 if g1 is None else W2 + np.asarray(g1, float)
    if speed is None:
        speed = ring.U[0, :, 2]
    if damping is None:
        damping = derived_coefficients(ring.surface())["b"][..., 0]
    speed = np.broadcast_to(np.asarray(speed, float), src.shape[1:])
    damping = np.broadcast_to(np.asarray(damping, float), src.shape[1:])
    h = ring.grid.dx_tan[0]

    def rate(phi, s):
        return s - speed * _upwind(phi, speed, h) - damping * phi

    phi = np.zeros_like(src)
    for n in range(len(src) - 1):
        s0, s1 = src[n], src[n + 1]
        sh = 0.5 * (s0 + s1)
        p = phi[n]
        k1 = rate(p, s0)
        k2 = rate(p + 0.5 * dt * k1, sh)
        k3 = rate(p + 0.5 * dt * k2, sh)
        k4 = rate(p + dt * k3, s1)
        phi[n + 1] = p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


def front_norm(psi, dt: float, dx: float) -> float:
    """Discrete space-time ``H^1`` norm of a front history ``(nt + 1, n2)``."""
    psi = np.asarray(psi, float)
    if psi.shape[0] < 3:
        dpt = np.zeros_like(psi)
    else:
        dpt = np.gradient(psi, dt, axis=0, edge_order=2)
    dpx = periodic_diff(psi, dx, axis=1)
    w = normal_weights(psi.shape[0], dt)
    dens = psi**2 + dpt**2 + dpx**2
    return float(np.sqrt(np.sum(w[:, None] * dens) * dx))


# ----------------------------------------------------------------------------
# vacuum-only problem and the auxiliary reduction


def vacuum_operator(setup: _Setup):
    """Discrete ``L-`` acting on a history ``(nt, n1, n2, 3)`` with step ``dt``."""
    eps = setup.problem.eps
    op = setup.vacuum

    def apply(u_hist, dt):
        u_hist = np.asarray(u_hist, float)
        if u_hist.shape[0] >= 3:
            dtu = np.gradient(u_hist, dt, axis=0, edge_order=2)
        else:
            dtu = np.zeros_like(u_hist)
        space = np.stack([op.apply(u) - op.sponge[:, None, None] * u for u in u_hist])
        return eps * (dtu + space)

    return apply


@dataclass
class VacuumSolution:
    times: np.ndarray
    u_tilde: np.ndarray
    u_natural: np.ndarray
    g5: np.ndarray

    @property
    def trace_residual(self):
        """``h.N - g5`` on the interface (flat front: ``h1 - g5``)."""
        return self.u_natural[:, 0, :, 0] - self.g5


def _interp_nodes(hist, dt):
    def f(t):
        s = t / dt
        n = min(int(np.floor(s + 1e-12)), len(hist) - 2)
        a = s - n
        return (1.0 - a) * hist[n] + a * hist[n + 1]

    return f


def solve_vacuum_only(reduced: ReducedVacuumProblem, setup: _Setup) -> VacuumSolution:
    """Vacuum system with the homogeneous e/h row, then add back the lifting."""
    op = setup.vacuum
    eps = setup.problem.eps
    forcing = np.asarray(reduced.forcing, float)
    nt = forcing.shape[0] - 1
    dt = reduced.dt
    if dt * op.max_rate() > CFL_LIMIT + 1e-12:
        raise CflViolation(f"time step {dt:.4g} violates the CFL limit of the vacuum system")
    times = np.arange(nt + 1) * dt
    f = _interp_nodes(forcing / eps, dt) if nt else (lambda t: forcing[0] / eps)
    g = np.zeros((nt + 1,) + setup.problem.grid.n_tan + (1,))
    scale = float(np.max(np.abs(forcing), initial=0.0))
    u_t = _rk4(op, times, f, g, scale)
    return VacuumSolution(times=times, u_tilde=u_t, u_natural=u_t + reduced.u_sharp, g5=reduced.g5)


def reduce_vacuum(problem: LinearProblem2D, setup: _Setup) -> tuple[ReducedVacuumProblem, VacuumSolution]:
    """Auxiliary vacuum field carrying the vacuum source and the e/h datum."""
    times = setup.times
    grid = problem.grid
    fm = np.zeros((len(times),) + grid.shape + (NV,))
    if problem.forcing_minus is not None:
        for n, t in enumerate(times):
            fm[n] = problem.forcing_minus(t)
    g = _boundary_nodes(problem, times)[..., 2:3]
    red = vacuum_aux_reduce(fm, g, problem.ring, setup.dt, vacuum_operator(setup))
    return red, solve_vacuum_only(red, setup)


# ----------------------------------------------------------------------------
# fixed point


@dataclass
class SolveResult:
    """Converged solution of the coupled problem and its monitors.

    ``Z`` stacks the plasma good unknowns and the full vacuum perturbation;
    ``W``/``w`` are the transformed unknowns as grid fields.  All series
    share ``times``.
    """

    times: np.ndarray
    Z: np.ndarray
    W: GridField
    w: GridField
    psi: np.ndarray
    energy: np.ndarray
    flux: np.ndarray
    constraints: dict
    iterations: list
    forcing: np.ndarray
    converged: bool
    scale: float

    @property
    def ratios(self):
        return [it["ratio"] for it in self.iterations if it["ratio"] is not None]


def _series(setup: _Setup, Z, psi):
    op = setup.coupled
    eps = setup.problem.eps
    tr = setup.transforms
    energy = np.array([op.energy(z) for z in Z])
    W0 = _mv(tr.T_plus[0], Z[:, 0, :, :NP])
    w0 = _mv(tr.T_minus[0], Z[:, 0, :, NP:])
    flux = np.sum(quadratic_boundary_form(W0, w0, eps), axis=-1) * op.grid.dx_tan[0]
    return energy, flux


def boundary_flux(setup: _Setup, Z) -> np.ndarray:
    """Per-time interface flux ``sum_x2 Q0 dx2`` of a coupled history."""
    return _series(setup, Z, None)[1]


def constraint_series(setup: _Setup, Z, psi, interior_only: bool = True) -> dict:
    """Sup-norms over time of the divergence and tangency residuals.

    Divergences are evaluated outside the sponge layer when ``interior_only``.
    """
    problem = setup.problem
    ring = problem.ring
    grid = ring.grid
    keep = grid.x1 <= grid.L - problem.sponge_width if interior_only else slice(None)
    dx2 = grid.dx_tan[0]
    surf = ring.surface()
    out = {"H.inv3": [], "h.inv3": [], "H.cons3": [], "h.cons3": []}
    for z, p in zip(Z, psi):
        U, u = z[..., :NP], z[..., NP:]
        divH = divergence_residual(U[..., 3:5], ring.d1_Phi(+1), ring.grad_Phi(), grid)
        divh = divergence_residual(u[..., :2], ring.d1_Phi(-1), ring.grad_Phi(), grid)
        out["H.inv3"].append(float(np.max(np.abs(divH[keep]))))
        out["h.inv3"].append(float(np.max(np.abs(divh[keep]))))
        gp = periodic_diff(p, dx2, axis=0)[:, None]
        cons = surface_constraints(U[0], u[0], p, gp, surf)
        out["H.cons3"].append(float(np.max(np.abs(cons["H.cons3"]))))
        out["h.cons3"].append(float(np.max(np.abs(cons["h.cons3"]))))
    return {k: np.array(v) for k, v in out.items()}


def involution_residuals(setup: _Setup, Z) -> dict:
    """Per-time discrete L2 norms of the plasma and vacuum magnetic divergences.

    The interface node is left out: its equations are replaced by the
    projected boundary rows, so the divergence there is not propagated.
    """
    ring = setup.problem.ring
    grid = ring.grid
    cell = grid.dx1 * grid.dx_tan[0]
    out = {"H.inv3": [], "h.inv3": []}
    for z in Z:
        divH = divergence_residual(z[..., 3:5], ring.d1_Phi(+1), ring.grad_Phi(), grid)
        divh = divergence_residual(z[..., NP : NP + 2], ring.d1_Phi(-1), ring.grad_Phi(), grid)
        out["H.inv3"].append(np.sqrt(np.sum(divH[1:] ** 2) * cell))
        out["h.inv3"].append(np.sqrt(np.sum(divh[1:] ** 2) * cell))
    return {k: np.array(v) for k, v in out.items()}


def fixed_point_solve(
    problem: LinearProblem2D,
    tol: float = 1e-10,
    max_iter: int = 50,
    contraction_window: int = 10,
    setup: _Setup | None = None,
) -> SolveResult:
    """Iterate ``psi -> transport(W2[psi])`` from ``psi = 0`` to a fixed point."""
    setup = setup or _assemble(problem)
    times, dt = setup.times, setup.dt
    grid = problem.grid
    dx2 = grid.dx_tan[0]
    g = _boundary_nodes(problem, times)
    _, vac = reduce_vacuum(problem, setup)
    u_nat = vac.u_natural
    h0, e0 = split_vacuum(problem.ring.u[0])
    h_nat, e_nat = split_vacuum(u_nat[:, 0])
    # u_nat carries g3 and the normal trace g5, so the reduced coupled
    # problem sees shifted pressure data and a homogeneous e/h row
    g_eff = g.copy()
    g_eff[..., 1] = g[..., 1] + np.sum(h0 * h_nat, -1) - e0 * e_nat
    g_eff[..., 2] = 0.0
    forcing = _stack_forcing(problem, minus=False)

    psi = np.zeros((len(times),) + grid.n_tan)
    log = []
    scale = None
    prev = None
    converged = False
    sol = None
    for k in range(max_iter):
        sol = _solve_coupled(setup, forcing, g_eff, psi)
        phi = transport_front(sol.W2_trace, problem.ring, dt, g1=g[..., 0])
        inc = front_norm(phi - psi, dt, dx2)
        if scale is None:
            scale = front_norm(phi, dt, dx2)
        ratio = inc / prev if prev not in (None, 0.0) else None
        log.append({"iteration": k + 1, "increment": inc, "ratio": ratio})
        psi = phi
        prev = inc
        if inc <= tol * scale:
            converged = True
            break
        ratios = [it["ratio"] for it in log if it["ratio"] is not None]
        if k + 1 >= contraction_window and not any(r < 1.0 for r in ratios):
            raise NoContraction(
                f"no contraction within {contraction_window} iterates (ratios {ratios}); reduce T"
            )

    Z = sol.Z.copy()
    Z[..., NP:] += u_nat
    energy, flux = _series(setup, Z, psi)
    fsamp = np.stack([_stack_forcing(problem)(t) for t in times])
    tr = setup.transforms
    W = _mv(tr.T_plus, Z[..., :NP])
    w = _mv(tr.T_minus, Z[..., NP:])
    meta = {"T": problem.T, "cfl": problem.cfl}
    return SolveResult(
        times=times,
        Z=Z,
        W=GridField(np.moveaxis(W, -1, 0), W_NAMES, grid, dt, problem.eps, meta),
        w=GridField(np.moveaxis(w, -1, 0), w_NAMES, grid, dt, problem.eps, meta),
        psi=psi,
        energy=energy,
        flux=flux,
        constraints=constraint_series(setup, Z, psi),
        iterations=log,
        forcing=fsamp,
        converged=converged,
        scale=float(scale),
    )


def interface_residuals(result: SolveResult, problem: LinearProblem2D) -> np.ndarray:
    """``B'_e(U, u, psi) - g`` on the interface for every time level, shape ``(nt+1, n2, 3)``."""
    grid = problem.grid
    dt = result.times[1] - result.times[0]
    psi = result.psi
    dpsi_t = np.gradient(psi, dt, axis=0, edge_order=2)
    grad = periodic_diff(psi, grid.dx_tan[0], axis=1)[..., None]
    surf = problem.ring.surface()
    Z0 = result.Z[:, 0]
    res = effective_boundary_operator(Z0[..., :NP], Z0[..., NP:], psi, dpsi_t, grad, surf)
    return res - _boundary_nodes(problem, result.times)


def physical_perturbation(result: SolveResult, problem: LinearProblem2D):
    """Undo the good-unknown shift: returns ``(dU, du)`` histories."""
    return from_good_unknowns(result.Z[..., :NP], result.Z[..., NP:], result.psi, problem.ring)


# ----------------------------------------------------------------------------
# energy monitor


@dataclass
class EnergySeries:
    times: np.ndarray
    energy: dict
    flux: dict
    growth_rate: float


def _tangential_derivative(X, alpha, dt, dx2):
    """Apply ``d_t^a0 d_2^a1`` to a history with time on axis 0 and ``x2`` on axis 2."""
    at, a2 = alpha
    for _ in range(at):
        X = np.gradient(X, dt, axis=0, edge_order=2)
    for _ in range(a2):
        X = periodic_diff(X, dx2, axis=2)
    return X


def energy_growth_rate(setup: _Setup, Z) -> float:
    """Largest semi-discrete quotient ``2 <z, M L_h z> / E(z)`` along ``Z``.

    ``L_h`` is the homogeneous discrete operator including the projected
    interface rows and the far-field treatment, so this is the constant in
    ``dE/dt <= C E`` for unforced evolution.
    """
    op = setup.coupled
    zero = np.zeros(op.grid.shape + (op.ncomp,))
    dg0 = np.zeros(op.rows.shape[:-1])
    rates = []
    for z in Z:
        E = op.energy(z)
        if E > 0:
            rates.append(2.0 * op.inner(z, op.rhs(z, zero, dg0)) / E)
    return float(max(rates)) if rates else 0.0


def energy_monitor(result: SolveResult, problem: LinearProblem2D, m: int = 0, setup: _Setup | None = None) -> EnergySeries:
    """Weighted energies ``E_alpha(t)`` and interface fluxes ``Q_alpha(t)`` for
    tangential multi-indices ``(t, x2)`` of order at most ``m``; also the
    largest homogeneous growth quotient along the trajectory."""
    if m not in (0, 1):
        raise ValueError("m must be 0 or 1")
    setup = setup or _assemble(problem)
    op = setup.coupled
    tr = setup.transforms
    eps = problem.eps
    dt = result.times[1] - result.times[0]
    dx2 = problem.grid.dx_tan[0]
    alphas = [(0, 0)] + ([(1, 0), (0, 1)] if m == 1 else [])
    energy, flux = {}, {}
    for a in alphas:
        Z = _tangential_derivative(result.Z, a, dt, dx2) if a != (0, 0) else result.Z
        energy[a] = np.array([op.energy(z) for z in Z])
        W0 = _mv(tr.T_plus[0], Z[:, 0, :, :NP])
        w0 = _mv(tr.T_minus[0], Z[:, 0, :, NP:])
        flux[a] = np.sum(quadratic_boundary_form(W0, w0, eps), axis=-1) * dx2
    rate = energy_growth_rate(setup, result.Z)
    return EnergySeries(times=result.times, energy=energy, flux=flux, growth_rate=rate)


__all__ = [
    "BvpSolution",
    "boundary_flux",
    "EnergySeries",
    "LinearProblem2D",
    "SolveResult",
    "VacuumSolution",
    "constraint_series",
    "energy_growth_rate",
    "energy_monitor",
    "fixed_point_solve",
    "front_norm",
    "interface_residuals",
    "involution_residuals",
    "normal_derivative",
    "normal_weights",
    "physical_perturbation",
    "prepare",
    "ramp",
    "reduce_vacuum",
    "reference_problem",
    "shear_layer_ring",
    "solve_hyperbolic_bvp",
    "solve_vacuum_only",
    "transport_front",
    "vacuum_operator",
]
