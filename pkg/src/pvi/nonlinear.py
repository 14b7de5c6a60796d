"""Testable parts of the nonlinear iteration: a smoothing family, the
source/error bookkeeping of the Nash-Moser scheme, initial time-derivative
traces and the compatibility residuals.

The full nonlinear iteration (modified states and its convergence) is not
executed here; only the pieces whose identities and bounds can be checked
numerically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .assembly import plasma_symbols, vacuum_matrices
from .errors import HyperbolicityLost, NoRoot, OutOfWindow, ShapeMismatch, UnderResolved
from .geometry import Cutoff, Grid
from .linearized import transformed_normal_matrix
from .state import Eos, PlasmaState

# ----------------------------------------------------------------------------
# smoothing family


@dataclass(frozen=True)
class SmoothingDomain:
    """Periodic ``(t, x2, ...)`` grid carried by the trailing axes of a field."""

    shape: tuple
    periods: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        if len(self.shape) != len(self.periods):
            raise ValueError("shape and periods must have equal length")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def cell(self) -> float:
        return float(np.prod([p / n for p, n in zip(self.periods, self.shape)]))

    def wavenumbers(self):
        """Angular wavenumber grids, one per axis, broadcast to ``shape``."""
        ks = [2.0 * np.pi * np.fft.fftfreq(n, d=p / n) for n, p in zip(self.shape, self.periods)]
        return np.meshgrid(*ks, indexing="ij")

    def radius(self):
        return np.sqrt(sum(k**2 for k in self.wavenumbers()))


@dataclass(frozen=True)
class SmootherFamily:
    """Sharp spectral cut-off ``S_theta``: keep modes with ``|xi| <= theta``.

    The first domain axis is time.  With ``causal=True`` the cut-off acts on
    the remaining axes only, so fields vanishing for ``t < 0`` keep doing so.
    """

    domain: SmoothingDomain
    causal: bool = False

    def _axes(self, u):
        u = np.asarray(u)
        if u.shape[u.ndim - self.domain.ndim :] != self.domain.shape:
            raise ShapeMismatch(f"field trailing shape {u.shape} does not end with {self.domain.shape}")
        return tuple(range(u.ndim - self.domain.ndim, u.ndim))

    def _radius(self):
        ks = self.domain.wavenumbers()
        if self.causal:
            ks = ks[1:]
        return np.sqrt(sum(k**2 for k in ks)) if ks else np.zeros(self.domain.shape)

    def mask(self, theta: float):
        return self._radius() <= theta * (1.0 + 1e-12)

    def __call__(self, u, theta: float):
        return smooth(u, theta, self)

    def norm(self, u, k: float = 0.0) -> float:
        """Isotropic ``H^k`` norm on the periodic domain (Parseval weights)."""
        axes = self._axes(u)
        uh = np.fft.fftn(np.asarray(u, float), axes=axes)
        w = (1.0 + self.domain.radius() ** 2) ** k
        n = np.prod(self.domain.shape)
        return float(np.sqrt(np.sum(w * np.abs(uh) ** 2) * self.domain.cell / n))


def smooth(u, theta: float, family: SmootherFamily):
    """Apply ``S_theta``; linear, idempotent, commutes with differentiation."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    axes = family._axes(u)
    uh = np.fft.fftn(np.asarray(u, float), axes=axes)
    return np.real(np.fft.ifftn(uh * family.mask(theta), axes=axes))


@dataclass
class SmootherConstants:
    thetas: tuple
    bounded: np.ndarray  # ||S u||_k / (theta^(k-j)+ ||u||_j)
    approx: np.ndarray  # ||S u - u||_k / (theta^(k-j) ||u||_j)
    rate: np.ndarray  # ||(S_2theta - S_theta) u||_k / (theta^(k-j) ||u||_j)

    def spread(self) -> dict:
        return {k: float(np.max(v) / np.min(v)) for k, v in self.__dict__.items() if k != "thetas"}

    def to_dict(self) -> dict:
        out = {k: [float(x) for x in v] for k, v in self.__dict__.items() if k != "thetas"}
        out["thetas"] = [float(t) for t in self.thetas]
        out["spread"] = self.spread()
        return out


def spectral_test_family(family: SmootherFamily, seed: int = 0):
    """Fields with known spectra: every resolved lattice mode with
    non-negative indices, plus one power-law random field."""
    dom = family.domain
    mesh = np.meshgrid(*[np.arange(n) * p / n for n, p in zip(dom.shape, dom.periods)], indexing="ij")
    fields = []
    for idx in itertools.product(*[range(n // 2) for n in dom.shape]):
        phase = sum(k * 2.0 * np.pi / p * x for k, p, x in zip(idx, dom.periods, mesh))
        fields.append(np.cos(phase))
    rng = np.random.default_rng(seed)
    noise = np.fft.fftn(rng.normal(size=dom.shape))
    fields.append(np.real(np.fft.ifftn(noise * (1.0 + dom.radius() ** 2) ** -1.5)))
    return fields


def smoother_constants(
    family: SmootherFamily,
    thetas=(2.0, 4.0, 8.0, 16.0),
    fields=None,
    bounded_kj=(2, 1),
    approx_kj=(0, 2),
    rate_kj=(1, 2),
) -> SmootherConstants:
    """Largest measured ratios for the three smoothing bounds at each theta.

    The derivative bound is measured in its integrated dyadic form,
    ``||(S_2theta - S_theta) u||_k <~ theta^(k-j) ||u||_j``.
    """
    fields = spectral_test_family(family) if fields is None else fields
    out = {"bounded": [], "approx": [], "rate": []}
    for th in thetas:
        b = a = r = 0.0
        for u in fields:
            Su = smooth(u, th, family)
            k, j = bounded_kj
            b = max(b, family.norm(Su, k) / (th ** max(k - j, 0) * family.norm(u, j)))
            k, j = approx_kj
            a = max(a, family.norm(Su - u, k) / (th ** (k - j) * family.norm(u, j)))
            k, j = rate_kj
            r = max(r, family.norm(smooth(u, 2 * th, family) - Su, k) / (th ** (k - j) * family.norm(u, j)))
        out["bounded"].append(b)
        out["approx"].append(a)
        out["rate"].append(r)
    return SmootherConstants(tuple(thetas), *(np.array(out[k]) for k in ("bounded", "approx", "rate")))


# ----------------------------------------------------------------------------
# source / error bookkeeping


@dataclass
class IterationLedger:
    """Sources ``f_n^+-, g_n`` and errors ``e_n^+-, e~_n`` of the iteration.

    Sources are chosen so that, at every step ``n`` with
    ``theta_n = sqrt(theta0^2 + n)`` and ``E_n = sum_{k<n} e_k``,
    ``sum_{k<=n} f_k^+ + S E_n^+ = S f^a``, ``sum f^- + S E^- = 0`` and
    ``sum g + S E~ = 0``.
    """

    f_a: np.ndarray
    smoother: SmootherFamily
    theta0: float
    f_plus: list = field(default_factory=list)
    f_minus: list = field(default_factory=list)
    g: list = field(default_factory=list)
    e_plus: list = field(default_factory=list)
    e_minus: list = field(default_factory=list)
    e_tilde: list = field(default_factory=list)

    @classmethod
    def start(cls, f_a, minus_shape, boundary_shape, smoother: SmootherFamily, theta0: float = 2.0):
        """Step 0: ``f_0^+ = S_theta0 f^a``, all other sources zero."""
        if theta0 < 1:
            raise ValueError("theta0 must be >= 1")
        f_a = np.asarray(f_a, float)
        led = cls(f_a=f_a, smoother=smoother, theta0=float(theta0))
        led.f_plus.append(smooth(f_a, theta0, smoother))
        led.f_minus.append(np.zeros(minus_shape))
        led.g.append(np.zeros(boundary_shape))
        return led

    @property
    def n(self) -> int:
        return len(self.f_plus) - 1

    def theta(self, n: int) -> float:
        return float(np.sqrt(self.theta0**2 + n))

    def accumulated(self, n: int | None = None):
        """``(E_n^+, E_n^-, E~_n)``."""
        n = self.n if n is None else n
        parts = []
        for seq, ref in ((self.e_plus, self.f_plus[0]), (self.e_minus, self.f_minus[0]), (self.e_tilde, self.g[0])):
            acc = np.zeros_like(ref)
            for e in seq[:n]:
                acc = acc + e
            parts.append(acc)
        return tuple(parts)

    def residuals(self, n: int | None = None) -> tuple:
        """Relative residuals of the three source identities at step ``n``."""
        n = self.n if n is None else n
        th = self.theta(n)
        S = self.smoother
        Ep, Em, Et = self.accumulated(n)
        target = smooth(self.f_a, th, S)
        out = []
        for seq, E, rhs in ((self.f_plus, Ep, target), (self.f_minus, Em, 0.0), (self.g, Et, 0.0)):
            total = np.sum(seq[: n + 1], axis=0)
            SE = smooth(E, th, S)
            r = total + SE - rhs
            scale = max(np.max(np.abs(total)), np.max(np.abs(SE)), np.max(np.abs(rhs)), 1e-300)
            out.append(float(np.max(np.abs(r)) / scale))
        return tuple(out)


def ledger_step(ledger: IterationLedger, e_plus, e_minus, e_tilde) -> IterationLedger:
    """Record the errors ``e_n`` of the step just solved and choose the
    sources of step ``n + 1``.  At ``n = 0`` the errors must vanish."""
    e_plus, e_minus, e_tilde = (np.asarray(x, float) for x in (e_plus, e_minus, e_tilde))
    for name, e, ref in (
        ("e_plus", e_plus, ledger.f_plus[0]),
        ("e_minus", e_minus, ledger.f_minus[0]),
        ("e_tilde", e_tilde, ledger.g[0]),
    ):
        if e.shape != ref.shape:
            raise ShapeMismatch(f"{name} has shape {e.shape}, expected {ref.shape}")
    if ledger.n == 0 and (np.any(e_plus) or np.any(e_minus) or np.any(e_tilde)):
        raise ValueError("errors of step 0 must vanish")
    ledger.e_plus.append(e_plus)
    ledger.e_minus.append(e_minus)
    ledger.e_tilde.append(e_tilde)
    n = ledger.n + 1
    th = ledger.theta(n)
    S = ledger.smoother
    Ep, Em, Et = ledger.accumulated(n)
    ledger.f_plus.append(smooth(ledger.f_a - Ep, th, S) - np.sum(ledger.f_plus, axis=0))
    ledger.f_minus.append(-smooth(Em, th, S) - np.sum(ledger.f_minus, axis=0))
    ledger.g.append(-smooth(Et, th, S) - np.sum(ledger.g, axis=0))
    return ledger


# ----------------------------------------------------------------------------
# initial traces


def _fd_weights(z: float, x, m: int):
    """Fornberg weights for derivatives up to order ``m`` at ``z`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _normal_derivative(f, h: float, order: int):
    """First derivative along axis 0 with ``order + 1``-point stencils, shifted
    one-sided near both ends."""
    n = f.shape[0]
    npts = order + 1
    if n < npts:
        raise UnderResolved(f"need at least {npts} nodes in x1 for order {order}")
    half = npts // 2
    out = np.zeros(f.shape, dtype=f.dtype)
    for i in range(n):
        start = min(max(i - half, 0), n - npts)
        idx = np.arange(start, start + npts)
        w = _fd_weights(float(i - start), np.arange(npts, dtype=float), 1)
        w[i - start] -= w.sum()
        w = w / h
        out[i] = np.tensordot(w, f[idx], axes=(0, 0))
    return out


def _periodic_derivative(f, h: float, order: int, axis: int):
    half = order // 2
    w = _fd_weights(0.0, np.arange(-half, half + 1, dtype=float), 1) / h
    out = np.zeros(f.shape, dtype=f.dtype)
    for k, wk in zip(range(-half, half + 1), w):
        if wk != 0.0:
            out = out + wk * np.roll(f, -k, axis=axis)
    return out


@dataclass
class TraceSet:
    """Time-derivative traces ``U_(j), u_(j)`` (j <= m) and ``phi_(j)`` (j <= m+1)."""

    grid: Grid
    eps: float
    U: list
    u: list
    phi: list

    @property
    def m(self) -> int:
        return len(self.U) - 1

    def surface(self, j: int):
        """Interface values ``(U_(j), u_(j))`` at ``x1 = 0``."""
        return self.U[j][0], self.u[j][0]


def _check_hyperbolic(U, eos: Eos, eps: float):
    try:
        PlasmaState.from_vector(U, eps).validate(eos)
    except (NoRoot, OutOfWindow) as exc:
        raise HyperbolicityLost(str(exc)) from exc


class _Rhs:
    """Right-hand sides ``dt U = R+`` and ``dt u = R-`` of the fixed-domain
    equations for a front history sampled through ``(phi, phi_t)``."""

    def __init__(self, grid: Grid, eos: Eos, eps: float, cutoff: Cutoff, order: int):
        self.grid, self.eos, self.eps, self.order = grid, eos, eps, order
        self.chi = cutoff(grid.x1)[:, None]
        self.dchi = cutoff.derivative(grid.x1)[:, None]

    def d1(self, f):
        return _normal_derivative(f, self.grid.dx1, self.order)

    def d2(self, f, axis=1):
        return _periodic_derivative(f, self.grid.dx_tan[0], self.order, axis)

    def geometry(self, phi, phi_t, sign):
        d1Phi = sign + self.dchi * phi[None, :]
        d2Phi = self.chi * self.d2(phi, axis=0)[None, :]
        dtPhi = self.chi * phi_t[None, :]
        return dtPhi, d1Phi, d2Phi[..., None]

    def plasma(self, U, phi, phi_t):
        A = plasma_symbols(PlasmaState.from_vector(U, self.eps), self.eos).A
        dtPhi, d1Phi, gPhi = self.geometry(phi, phi_t, +1)
        A1t = transformed_normal_matrix(A, dtPhi, d1Phi, gPhi)
        return -((A1t @ self.d1(U)[..., None])[..., 0] + (A[1] @ self.d2(U)[..., None])[..., 0])

    def vacuum(self, u, nu, phi, phi_t):
        A = vacuum_matrices(nu, self.eps)
        dtPhi, d1Phi, gPhi = self.geometry(phi, phi_t, -1)
        A1t = transformed_normal_matrix(A, dtPhi, d1Phi, gPhi, time_coeff=self.eps)
        rhs = (A1t @ self.d1(u)[..., None])[..., 0] + (A[1] @ self.d2(u)[..., None])[..., 0]
        return -rhs / self.eps


def _front_trace(phi, U, j, d2):
    """Kinematic recursion for ``phi_(j+1)`` from traces up to order ``j``."""
    out = U[j][0, :, 1].copy()
    for i in range(j + 1):
        out = out - comb(j, i) * d2(phi[j - i]) * U[i][0, :, 2]
    return out


def trace_recursion(
    U0,
    u0,
    phi0,
    grid: Grid,
    eos: Eos | None = None,
    eps: float = 1.0,
    m: int = 1,
    cutoff: Cutoff | None = None,
    order: int = 6,
    h: float = 1e-30,
) -> TraceSet:
    """Time-derivative traces at ``t = 0`` of the two-dimensional problem.

    ``U_(1)``, ``u_(1)`` come from the interior equations with spatial
    derivatives of the given ``order``; the second traces differentiate
    those right-hand sides along the first-order traces by complex step.
    """
    if grid.d != 2:
        raise ValueError("trace recursion is implemented for d = 2")
    if not 0 <= m <= 2:
        raise ValueError("m must be 0, 1 or 2")
    eos = eos or Eos()
    U0 = np.asarray(U0, float)
    u0 = np.asarray(u0, float)
    phi0 = np.asarray(phi0, float)
    if U0.shape != grid.shape + (6,) or u0.shape != grid.shape + (3,) or phi0.shape != grid.n_tan:
        raise ShapeMismatch("initial data do not match the grid")
    _check_hyperbolic(U0, eos, eps)
    rhs = _Rhs(grid, eos, eps, cutoff or Cutoff(), order)
    d2s = lambda f: rhs.d2(f, axis=0)  # noqa: E731
    chi = rhs.chi[..., None]

    U, u, phi = [U0], [u0], [phi0]
    phi.append(_front_trace(phi, U, 0, d2s))
    if m >= 1:
        nu0 = chi * U0[0, :, 1:3][None]
        U.append(rhs.plasma(U0, phi0, phi[1]))
        u.append(rhs.vacuum(u0, nu0, phi0, phi[1]))
        phi.append(_front_trace(phi, U, 1, d2s))
    if m >= 2:
        nu1 = chi * U[1][0, :, 1:3][None]
        Uc = rhs.plasma(U0 + 1j * h * U[1], phi0 + 1j * h * phi[1], phi[1] + 1j * h * phi[2])
        uc = rhs.vacuum(u0 + 1j * h * u[1], nu0 + 1j * h * nu1, phi0 + 1j * h * phi[1], phi[1] + 1j * h * phi[2])
        U.append(np.imag(Uc) / h)
        u.append(np.imag(uc) / h)
        phi.append(_front_trace(phi, U, 2, d2s))
    return TraceSet(grid=grid, eps=eps, U=U, u=u, phi=phi)


# ----------------------------------------------------------------------------
# compatibility


@dataclass
class CompatReport:
    """Interface residuals of the pressure and e/h compatibility rows per order."""

    q: list
    e: list

    @property
    def order(self) -> int:
        return len(self.q) - 1

    def max_residual(self, j: int) -> float:
        return float(max(np.max(np.abs(self.q[j])), np.max(np.abs(self.e[j]))))

    def compatible(self, tol: float = 1e-10) -> bool:
        return all(self.max_residual(j) < tol for j in range(self.order + 1))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "max_residual": [self.max_residual(j) for j in range(self.order + 1)],
            "q_row": [float(np.max(np.abs(r))) for r in self.q],
            "e_row": [float(np.max(np.abs(r))) for r in self.e],
        }


def compat_check(traces: TraceSet, eps: float | None = None, m: int | None = None) -> CompatReport:
    """Residuals of the compatibility conditions up to order ``m`` on the interface."""
    eps = traces.eps if eps is None else eps
    m = traces.m if m is None else m
    if m > traces.m or len(traces.phi) < m + 2:
        raise ValueError(f"traces only reach order {traces.m}")
    q = [traces.U[j][0, :, 0] for j in range(m + 1)]
    hh = [traces.u[j][0, :, :2] for j in range(m + 1)]
    e = [traces.u[j][0, :, 2] for j in range(m + 1)]
    phi = traces.phi
    rq = [2.0 * q[0] - np.sum(hh[0] ** 2, -1) + e[0] ** 2]
    re = [e[0] + eps * phi[1] * hh[0][:, 1]]
    for j in range(1, m + 1):
        s = sum(comb(j - 1, i) * (np.sum(hh[i] * hh[j - i], -1) - e[i] * e[j - i]) for i in range(j))
        rq.append(q[j] - s)
        s = sum(comb(j, i) * phi[i + 1] * hh[j - i][:, 1] for i in range(j + 1))
        re.append(e[j] + eps * s)
    return CompatReport(q=rq, e=re)


def _flat_front_data(grid: Grid, eps, c, hb, slope_v, slope_h):
    x1, x2 = grid.mesh()
    bump = x1 * np.exp(-(x1**2))
    U = np.zeros(grid.shape + (6,))
    u = np.zeros(grid.shape + (3,))
    h2b = hb * (1.0 + 0.1 * np.cos(x2[0]))
    e_b = -eps * c * h2b
    q_b = 0.5 * (h2b**2 - e_b**2)
    U[..., 0] = q_b[None, :] + 0.3 * np.tanh(x1) * (1.0 + 0.2 * np.sin(x2))
    U[..., 1] = c + slope_v[None, :] * bump
    U[..., 2] = 0.2 + 0.1 * np.sin(x2) * np.exp(-x1)
    U[..., 3] = 0.1 * x1 * np.exp(-x1) * np.cos(x2)
    U[..., 4] = 0.4 + 0.1 * np.tanh(x1)
    U[..., 5] = 0.1 * np.cos(x2) * np.exp(-(x1**2))
    u[..., 0] = 0.05 * x1 * np.exp(-x1) * np.sin(x2)
    u[..., 1] = h2b[None, :] + slope_h[None, :] * bump
    u[..., 2] = e_b[None, :] * np.exp(-0.5 * x1**2)
    return U, u


def compatible_flat_front(
    grid: Grid,
    eos: Eos | None = None,
    eps: float = 1.0,
    speed: float = 0.1,
    h_interface: float = 1.0,
    order: int = 6,
):
    """Initial data with a flat front moving at ``speed`` that are compatible
    up to order one.

    Order zero holds by construction.  The order-one residuals are affine in
    the interface slopes of ``v1`` and ``h2``, which are solved for pointwise.
    Returns ``(U0, u0, phi0)``.
    """
    eos = eos or Eos()
    n2 = grid.n_tan[0]
    phi0 = np.zeros(n2)
    zero = np.zeros(n2)

    def residual(a, b):
        U, u = _flat_front_data(grid, eps, speed, h_interface, a, b)
        rep = compat_check(trace_recursion(U, u, phi0, grid, eos, eps, m=1, order=order), eps, 1)
        return np.stack([rep.q[1], rep.e[1]], -1)

    r0 = residual(zero, zero)
    ja = residual(zero + 1.0, zero) - r0
    jb = residual(zero, zero + 1.0) - r0
    J = np.stack([ja, jb], -1)
    ab = np.linalg.solve(J, -r0[..., None])[..., 0]
    U, u = _flat_front_data(grid, eps, speed, h_interface, ab[:, 0], ab[:, 1])
    return U, u, phi0


__all__ = [
    "CompatReport",
    "IterationLedger",
    "SmootherConstants",
    "SmootherFamily",
    "SmoothingDomain",
    "TraceSet",
    "compat_check",
    "compatible_flat_front",
    "ledger_step",
    "smooth",
    "smoother_constants",
    "spectral_test_family",
    "trace_recursion",
]
