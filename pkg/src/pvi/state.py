"""Thermodynamic closure, Lorentz kinematics and plasma variable maps.

All functions broadcast over leading axes: scalars are arrays of shape
``()``, vectors carry their components on the last axis.  Complex inputs
are accepted (and validation is skipped for them) so that complex-step
differentiation can be used by callers that need exact Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    HyperbolicityLost,
    NoRoot,
    OutOfWindow,
    PhysicalConditionViolated,
)


def _is_real(*arrays) -> bool:
    return not any(np.iscomplexobj(a) for a in arrays)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


@dataclass(frozen=True)
class Eos:
    """Polytropic closure ``p = rho**gamma * exp(S)``.

    Parameters
    ----------
    gamma : float
        Adiabatic exponent in ``(1, 2]``.
    rho_lo, rho_hi : float
        Admissible density window (open interval).
    form : str
        Closure identifier; only ``"polytropic"`` is built in.
    """

    gamma: float = 5.0 / 3.0
    rho_lo: float = 0.01
    rho_hi: float = 100.0
    form: str = "polytropic"

    def __post_init__(self):
        if self.form != "polytropic":
            raise ValueError(f"unknown closure form {self.form!r}")
        if not 1.0 < self.gamma <= 2.0:
            raise ValueError("gamma must lie in (1, 2]")
        if not 0.0 <= self.rho_lo < self.rho_hi:
            raise ValueError("density window must satisfy 0 <= rho_lo < rho_hi")

    def density(self, p, S):
        return (p * np.exp(-S)) ** (1.0 / self.gamma)

    def pressure(self, rho, S):
        return rho**self.gamma * np.exp(S)

    def entropy(self, p, rho):
        return np.log(p / rho**self.gamma)

    def internal_energy(self, p, S):
        return p / ((self.gamma - 1.0) * self.density(p, S))

    def dp_drho(self, p, S):
        """Isentropic derivative of pressure with respect to density."""
        return self.gamma * p / self.density(p, S)

    def temperature(self, p, S):
        # d(energy)/dS at fixed density; for this closure it equals the energy
        return self.internal_energy(p, S)


@dataclass(frozen=True)
class EosValues:
    rho: np.ndarray
    energy: np.ndarray
    index: np.ndarray
    sound_speed: np.ndarray
    temperature: np.ndarray


def lorentz_factor(v, eps: float, check: bool = True):
    """Return ``1/sqrt(1 - eps^2 |v|^2)``; raises if ``eps|v| >= 1``."""
    v = np.asarray(v)
    s = eps**2 * _dot(v, v)
    if check and _is_real(v) and np.any(s >= 1.0):
        raise PhysicalConditionViolated(
            f"eps*|v| must be < 1 (max eps*|v| = {np.sqrt(np.max(s)):.6g})"
        )
    return 1.0 / np.sqrt(1.0 - s)


def eval_eos(p, S, eos: Eos, eps: float, check: bool = True) -> EosValues:
    """Evaluate density, internal energy, fluid index, sound speed and temperature."""
    p = np.asarray(p)
    S = np.asarray(S)
    real = _is_real(p, S)
    if check and real and np.any(p <= 0.0):
        raise HyperbolicityLost("pressure must be positive")
    rho = eos.density(p, S)
    if check and real and np.any((rho <= eos.rho_lo) | (rho >= eos.rho_hi)):
        raise OutOfWindow(
            f"density outside ({eos.rho_lo}, {eos.rho_hi}): "
            f"range [{np.min(rho):.6g}, {np.max(rho):.6g}]"
        )
    energy = p / ((eos.gamma - 1.0) * rho)
    index = 1.0 + eps**2 * (energy + p / rho)
    cs2 = eos.gamma * p / rho / index
    if check and real and np.any((cs2 <= 0.0) | (eps**2 * cs2 >= 1.0)):
        raise HyperbolicityLost("sound speed must lie in (0, 1/eps)")
    return EosValues(
        rho=rho,
        energy=energy,
        index=index,
        sound_speed=np.sqrt(cs2),
        temperature=energy,
    )


def total_pressure(p, v, H, eps: float, check: bool = True):
    """Total pressure ``p + |H|^2/(2 Gamma^2) + (eps^2/2)(v.H)^2``."""
    return p + magnetic_pressure(v, H, eps, check=check)


def magnetic_pressure(v, H, eps: float, check: bool = True):
    v = np.asarray(v)
    H = np.asarray(H)
    gam = lorentz_factor(v, eps, check=check)
    vh = _dot(v, H)
    return 0.5 * _dot(H, H) / gam**2 + 0.5 * eps**2 * vh**2


@dataclass(frozen=True)
class PlasmaState:
    """Primitive plasma unknowns ``U = (q, v, H, S)``."""

    q: np.ndarray
    v: np.ndarray
    H: np.ndarray
    S: np.ndarray
    eps: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q))
        object.__setattr__(self, "v", np.asarray(self.v))
        object.__setattr__(self, "H", np.asarray(self.H))
        object.__setattr__(self, "S", np.asarray(self.S))
        if self.v.shape != self.H.shape or self.v.shape[-1] not in (2, 3):
            raise ValueError("v and H must share shape (..., d) with d in {2, 3}")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")

    @property
    def d(self) -> int:
        return self.v.shape[-1]

    @property
    def batch_shape(self):
        return self.v.shape[:-1]

    def pressure(self, check: bool = True):
        return self.q - magnetic_pressure(self.v, self.H, self.eps, check=check)

    def as_vector(self):
        """Stack into the ``(..., 2d+2)`` component layout."""
        q = np.broadcast_to(self.q, self.batch_shape)[..., None]
        S = np.broadcast_to(self.S, self.batch_shape)[..., None]
        return np.concatenate([q, self.v, self.H, S], axis=-1)

    @classmethod
    def from_vector(cls, U, eps: float = 1.0):
        U = np.asarray(U)
        d = (U.shape[-1] - 2) // 2
        return cls(U[..., 0], U[..., 1 : 1 + d], U[..., 1 + d : 1 + 2 * d], U[..., -1], eps)

    def validate(self, eos: Eos) -> EosValues:
        """Check physical and hyperbolicity conditions; return closure values."""
        lorentz_factor(self.v, self.eps)
        p = self.pressure()
        if np.any(p <= 0.0):
            raise NoRoot("total pressure inversion gives nonpositive pressure")
        return eval_eos(p, self.S, eos, self.eps)


@dataclass(frozen=True)
class SymmetrizingState:
    """Variables ``V = (p, Gamma v, H, S)``."""

    p: np.ndarray
    w: np.ndarray
    H: np.ndarray
    S: np.ndarray


def u_to_v(state: PlasmaState, eos: Eos | None = None) -> SymmetrizingState:
    """Map primitive to symmetrizing variables.

    At fixed ``(v, H)`` the total pressure is affine in ``p``, so the
    inversion is done in closed form.  A nonpositive result means there is
    no admissible root.
    """
    check = _is_real(state.q, state.v, state.H, state.S)
    gam = lorentz_factor(state.v, state.eps, check=check)
    p = state.pressure(check=check)
    if check and np.any(p <= 0.0):
        raise NoRoot("no positive pressure reproduces the given total pressure")
    if check and eos is not None:
        rho = eos.density(p, state.S)
        if np.any((rho <= eos.rho_lo) | (rho >= eos.rho_hi)):
            raise NoRoot("pressure root lies outside the density window")
    return SymmetrizingState(p=p, w=gam[..., None] * state.v, H=state.H, S=state.S)


def v_to_u(sym: SymmetrizingState, eps: float) -> PlasmaState:
    w = np.asarray(sym.w)
    gam = np.sqrt(1.0 + eps**2 * _dot(w, w))
    v = w / gam[..., None]
    q = total_pressure(sym.p, v, sym.H, eps, check=_is_real(w))
    return PlasmaState(q=q, v=v, H=sym.H, S=sym.S, eps=eps)


def random_plasma_state(
    rng: np.random.Generator,
    d: int,
    eps: float = 1.0,
    eos: Eos | None = None,
    size=(),
    vmax: float = 0.8,
    hmax: float = 1.5,
) -> PlasmaState:
    """Draw hyperbolic states with ``eps|v| < vmax`` and ``rho`` inside the window."""
    eos = eos or Eos()
    size = tuple(np.atleast_1d(size)) if size != () else ()
    direction = rng.normal(size=size + (d,))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    speed = vmax / eps * rng.uniform(0.0, 1.0, size=size) ** 0.5
    v = direction * speed[..., None]
    H = rng.uniform(-hmax, hmax, size=size + (d,))
    p = rng.uniform(0.2, 2.0, size=size)
    lo, hi = np.log(max(eos.rho_lo, 1e-300)), np.log(eos.rho_hi)
    rho = np.exp(rng.uniform(0.7 * lo + 0.3 * hi, 0.3 * lo + 0.7 * hi, size=size))
    S = eos.entropy(p, rho)
    q = total_pressure(p, v, H, eps)
    return PlasmaState(q=q, v=v, H=H, S=S, eps=eps)
