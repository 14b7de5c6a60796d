"""Fixed-domain lifting of the front, discrete transformed derivatives and
anisotropic norms.

Grids are uniform: ``x1`` in ``[0, L]`` with both end points, tangential
directions periodic.  Space-time fields carry axes ``(t, x1, x2[, x3])``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import DegenerateJacobian, FrontTooLarge, UnderResolved


def smoothstep5(r):
    r = np.clip(r, 0.0, 1.0)
    return r**3 * (10.0 - 15.0 * r + 6.0 * r**2)


def smoothstep5_prime(r):
    inside = (r > 0.0) & (r < 1.0)
    r = np.clip(r, 0.0, 1.0)
    return np.where(inside, 30.0 * r**2 * (1.0 - r) ** 2, 0.0)


def smoothstep5_second(r):
    inside = (r > 0.0) & (r < 1.0)
    r = np.clip(r, 0.0, 1.0)
    return np.where(inside, 60.0 * r * (1.0 - r) * (1.0 - 2.0 * r), 0.0)


@dataclass(frozen=True)
class Cutoff:
    """Even cut-off equal to one on ``[-plateau, plateau]`` that decays to zero
    over ``width`` with a quintic blend.  The slope bound ``4 max|chi'| < 1``
    forces ``width > 7.5``."""

    plateau: float = 1.0
    width: float = 8.0

    def __post_init__(self):
        if 4.0 * self.max_slope >= 1.0:
            raise ValueError("cut-off too steep: need 4*max|chi'| < 1 (width > 7.5)")

    @property
    def max_slope(self) -> float:
        return 15.0 / (8.0 * self.width)

    @property
    def support(self) -> float:
        return self.plateau + self.width

    def _r(self, x):
        return (np.abs(x) - self.plateau) / self.width

    def __call__(self, x):
        return 1.0 - smoothstep5(self._r(np.asarray(x, float)))

    def derivative(self, x):
        x = np.asarray(x, float)
        return -np.sign(x) * smoothstep5_prime(self._r(x)) / self.width

    def second_derivative(self, x):
        x = np.asarray(x, float)
        return -smoothstep5_second(self._r(x)) / self.width**2


# sigma' on [1, 4] is (1 - s)^4 (1 + 4 s) with s = (x - 1)/3: C^2 at x = 1,
# flat at x = 4, nonnegative, and its integral 1/3 lifts sigma from 1 to 2.
_SIGMA_SLOPE = np.polynomial.Polynomial([1.0, -1.0]) ** 4 * np.polynomial.Polynomial([1.0, 4.0])
_SIGMA_RISE = _SIGMA_SLOPE.integ()


def sigma_weight(x):
    """Boundary weight: ``x`` near the boundary, ``2`` far away, monotone."""
    x = np.asarray(x, float)
    a = np.abs(x)
    s = np.clip((a - 1.0) / 3.0, 0.0, 1.0)
    mid = 1.0 + 3.0 * _SIGMA_RISE(s)
    out = np.where(a <= 1.0, a, np.where(a >= 4.0, 2.0, mid))
    return np.sign(x) * out


def sigma_weight_derivative(x):
    a = np.abs(np.asarray(x, float))
    s = np.clip((a - 1.0) / 3.0, 0.0, 1.0)
    return np.where(a <= 1.0, 1.0, np.where(a >= 4.0, 0.0, _SIGMA_SLOPE(s)))


@dataclass(frozen=True)
class Grid:
    """Uniform half-space grid: ``n1`` nodes on ``[0, L]`` and periodic
    tangential directions of period ``period``."""

    n1: int
    n_tan: tuple = (64,)
    L: float = 8.0
    period: float = 2.0 * np.pi

    def __post_init__(self):
        object.__setattr__(self, "n_tan", tuple(int(n) for n in np.atleast_1d(self.n_tan)))
        if self.n1 < 3 or any(n < 3 for n in self.n_tan):
            raise UnderResolved("grids need at least 3 nodes per direction")
        if len(self.n_tan) not in (1, 2):
            raise ValueError("one or two tangential directions are supported")

    @property
    def d(self) -> int:
        return 1 + len(self.n_tan)

    @property
    def dx1(self) -> float:
        return self.L / (self.n1 - 1)

    @property
    def dx_tan(self) -> tuple:
        return tuple(self.period / n for n in self.n_tan)

    @property
    def x1(self):
        return np.linspace(0.0, self.L, self.n1)

    @property
    def x_tan(self) -> tuple:
        return tuple(np.arange(n) * self.period / n for n in self.n_tan)

    def mesh(self):
        """Coordinate arrays of shape ``(n1, *n_tan)``."""
        return np.meshgrid(self.x1, *self.x_tan, indexing="ij")

    def surface_mesh(self):
        return np.meshgrid(*self.x_tan, indexing="ij")

    @property
    def shape(self) -> tuple:
        return (self.n1,) + self.n_tan

    def spec(self) -> dict:
        return {"n1": self.n1, "n_tan": list(self.n_tan), "L": self.L, "period": self.period}


def periodic_diff(f, h: float, axis: int):
    """Second-order centered derivative on a periodic axis."""
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def open_diff(f, h: float, axis: int):
    """Second-order derivative with one-sided second-order closures."""
    if f.shape[axis] < 3:
        raise UnderResolved("need at least 3 nodes for a second-order stencil")
    return np.gradient(f, h, axis=axis, edge_order=2)


@dataclass(frozen=True)
class InterfaceGeometry:
    """Front samples and the lifting ``Phi^{+-} = +-x1 + chi(x1) phi``.

    ``phi``, ``dphi_t`` have shape ``(nt, *n_tan)``; ``grad_phi`` adds a
    trailing axis of length ``d - 1``.
    """

    grid: Grid
    phi: np.ndarray
    dphi_t: np.ndarray
    grad_phi: np.ndarray
    cutoff: Cutoff = field(default_factory=Cutoff)

    @property
    def chi(self):
        return self.cutoff(self.grid.x1)

    @property
    def sigma(self):
        return sigma_weight(self.grid.x1)

    @property
    def N(self):
        g = self.grad_phi
        return np.concatenate([np.ones(g.shape[:-1] + (1,)), -g], axis=-1)

    def _lift(self, surface, profile):
        # surface (nt, *tan), profile (n1,) -> (nt, n1, *tan)
        shape = (1, -1) + (1,) * len(self.grid.n_tan)
        return surface[:, None] * profile.reshape(shape)

    def Phi(self, sign: int):
        x1 = self.grid.x1.reshape((1, -1) + (1,) * len(self.grid.n_tan))
        return sign * x1 + self._lift(self.phi, self.chi)

    def dt_Phi(self):
        return self._lift(self.dphi_t, self.chi)

    def d1_Phi(self, sign: int):
        return sign + self._lift(self.phi, self.cutoff.derivative(self.grid.x1))

    def dj_Phi(self, j: int):
        """Tangential derivative ``d_j Phi`` for ``j = 2..d`` (sign independent)."""
        return self._lift(self.grad_phi[..., j - 2], self.chi)


def make_geometry(
    phi,
    grid: Grid,
    dt: float | None = None,
    dphi_t=None,
    grad_phi=None,
    cutoff: Cutoff | None = None,
) -> InterfaceGeometry:
    """Build the lifted geometry from front samples of shape ``(nt, *n_tan)``
    (or ``n_tan`` for a single time).  Missing derivatives are computed with
    second-order differences."""
    phi = np.asarray(phi, float)
    if phi.shape == grid.n_tan:
        phi = phi[None]
    if phi.shape[1:] != grid.n_tan:
        raise ValueError("front samples do not match the tangential grid")
    if np.max(np.abs(phi), initial=0.0) > 2.0:
        raise FrontTooLarge(f"max|phi| = {np.max(np.abs(phi)):.6g} exceeds 2")
    if dphi_t is None:
        if phi.shape[0] >= 3 and dt is not None:
            dphi_t = open_diff(phi, dt, axis=0)
        else:
            dphi_t = np.zeros_like(phi)
    dphi_t = np.broadcast_to(np.asarray(dphi_t, float), phi.shape)
    if grad_phi is None:
        grad_phi = np.stack(
            [periodic_diff(phi, h, axis=1 + k) for k, h in enumerate(grid.dx_tan)], axis=-1
        )
    grad_phi = np.broadcast_to(np.asarray(grad_phi, float), phi.shape + (grid.d - 1,))
    geo = InterfaceGeometry(grid, phi, dphi_t, grad_phi, cutoff or Cutoff())
    if np.min(np.abs(geo.d1_Phi(+1))) < 1e-8 or np.min(np.abs(geo.d1_Phi(-1))) < 1e-8:
        raise DegenerateJacobian("d1 Phi vanishes")
    return geo


def _space_time_derivs(f, grid: Grid, dt: float | None):
    """Return callables for the raw derivatives along t, x1 and tangential axes."""

    def d_t(g):
        if dt is None:
            raise ValueError("time spacing required for time derivatives")
        return open_diff(g, dt, axis=0)

    def d_1(g):
        return open_diff(g, grid.dx1, axis=1)

    def d_tan(g, k):
        return periodic_diff(g, grid.dx_tan[k], axis=2 + k)

    return d_t, d_1, d_tan


def phi_derivative(f, geometry: InterfaceGeometry, which: str, sign: int = +1, dt=None):
    """Discrete transformed derivative of a space-time field ``f``.

    ``which`` is ``"t"``, ``"1"`` or the tangential index as a string
    (``"2"``, ``"3"``).  ``sign`` selects the plasma (+1) or vacuum (-1) lifting.
    """
    f = np.asarray(f, float)
    grid = geometry.grid
    d_t, d_1, d_tan = _space_time_derivs(f, grid, dt)
    J = geometry.d1_Phi(sign)
    if np.min(np.abs(J)) < 1e-8:
        raise DegenerateJacobian("d1 Phi vanishes")
    f1 = d_1(f)
    if which == "1":
        return f1 / J
    if which == "t":
        return d_t(f) - geometry.dt_Phi() / J * f1
    j = int(which)
    if not 2 <= j <= grid.d:
        raise ValueError(f"invalid direction {which!r}")
    return d_tan(f, j - 2) - geometry.dj_Phi(j) / J * f1


def multi_indices(m: int, d: int):
    """Multi-indices ``(a0, a1, ..., ad, a_{d+1})`` with weighted order at most ``m``;
    the last entry counts twice."""
    out = []
    for alpha in product(range(m + 1), repeat=d + 2):
        if sum(alpha[:-1]) + 2 * alpha[-1] <= m:
            out.append(alpha)
    return out


def _weights(n: int, h: float, periodic: bool):
    if periodic:
        return np.full(n, h)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def l2_quadrature(f, grid: Grid, dt: float | None):
    """Trapezoid in ``t`` and ``x1``, rectangle rule on periodic directions."""
    f = np.asarray(f)
    acc = np.abs(f) ** 2
    wt = _weights(f.shape[0], dt, False) if (dt is not None and f.shape[0] > 1) else np.ones(1)
    axes = [wt, _weights(grid.n1, grid.dx1, False)]
    axes += [_weights(n, h, True) for n, h in zip(grid.n_tan, grid.dx_tan)]
    # fixed-order contraction: innermost axis first
    for w in reversed(axes):
        acc = acc @ w
    return float(acc)


def aniso_norm(f, m: int, grid: Grid, dt: float | None = None) -> float:
    """Discrete anisotropic norm of a space-time field ``f`` (axes ``t, x1, tan``).

    Sums ``|| dt^a0 (sigma d1)^a1 d2^a2 ... d1^{a_{d+1}} f ||^2`` over all
    multi-indices whose weighted order (normal derivative counts two) is at
    most ``m``.
    """
    f = np.asarray(f, float)
    if m < 0:
        raise ValueError("order must be nonnegative")
    nt = f.shape[0]
    if any(n < 2 * m + 1 for n in grid.shape) or (nt > 1 and nt < 2 * m + 1 and dt is not None):
        raise UnderResolved("grid too coarse for the requested order")
    d_t, d_1, d_tan = _space_time_derivs(f, grid, dt)
    sig = sigma_weight(grid.x1).reshape((1, -1) + (1,) * len(grid.n_tan))
    total = 0.0
    for alpha in multi_indices(m, grid.d):
        a0, a1, *tang, a_last = alpha
        if a0 > 0 and (dt is None or nt < 3):
            continue
        g = f
        for _ in range(a_last):
            g = d_1(g)
        for k, ak in enumerate(tang):
            for _ in range(ak):
                g = d_tan(g, k)
        for _ in range(a1):
            g = sig * d_1(g)
        for _ in range(a0):
            g = d_t(g)
        total += l2_quadrature(g, grid, dt)
    return float(np.sqrt(total))


@dataclass
class GridField:
    """Stacked space-time arrays ``data[k, t, x1, tan...]`` for named unknowns."""

    data: np.ndarray
    names: tuple
    grid: Grid
    dt: float
    eps: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, float)
        if self.data.ndim != 2 + self.grid.d or self.data.shape[2:] != self.grid.shape:
            raise ValueError("data shape inconsistent with grid")
        if len(self.names) != self.data.shape[0]:
            raise ValueError("one name per unknown required")

    def __getitem__(self, name):
        return self.data[self.names.index(name)]

    @property
    def nt(self) -> int:
        return self.data.shape[1]
