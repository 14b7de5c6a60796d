"""Scenario files: TOML text describing the state recipe, grid and run settings.

A minimal scenario only names a recipe::

    [ring]
    recipe = "shear_layer"

Everything else has defaults.  Randomised recipes need a seed.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import Grid, periodic_diff
from .state import Eos, PlasmaState, random_plasma_state, total_pressure

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# name -> (dimensions supported, needs seed, parameter defaults)
RECIPES = {
    "shear_layer": (
        (2,),
        False,
        {"q0": 1.0, "q_slope": 0.5, "v0": 0.3, "v_amp": 0.1, "H0": 0.8, "H_slope": 0.2, "s_amp": 0.1},
    ),
    "flat_front": (
        (2, 3),
        False,
        {"speed": 0.1, "v_tan": 0.2, "p0": 1.0, "rho0": 1.0, "H_tan": 0.8, "zeta": 0.0, "modulation": 0.2},
    ),
    "random_interface": ((2, 3), True, {"vmax": 0.7, "max_slope": 0.6}),
    "compatible_flat_front": ((2,), False, {"speed": 0.1, "h_interface": 1.0}),
}
FORCINGS = ("reference", "none", "random")


@dataclass(frozen=True)
class RingRecipe:
    name: str
    params: dict = field(default_factory=dict)
    seed: int | None = None


@dataclass(frozen=True)
class GridSpec:
    n1: int = 41
    n_tan: tuple = (32,)
    L: float = 8.0

    def build(self) -> Grid:
        return Grid(self.n1, self.n_tan, L=self.L)


@dataclass(frozen=True)
class RunSpec:
    T: float = 0.1
    cfl: float = 0.4
    m: int = 1
    sponge_width: float = 0.5
    forcing: str = "reference"
    amplitude: float = 1.0
    seed: int | None = None
    tol: float = 1e-10
    max_iter: int = 50
    snapshots: bool = True


@dataclass(frozen=True)
class CriteriaSpec:
    delta: float = 0.0
    delta0: float = 0.0


@dataclass(frozen=True)
class SmoothSpec:
    shape: tuple = (64, 64)
    thetas: tuple = (2.0, 4.0, 8.0, 16.0)
    theta0: float = 2.0
    steps: int = 100
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    ring: RingRecipe
    d: int = 2
    eps: float = 1.0
    eos: Eos = field(default_factory=Eos)
    grid: GridSpec = field(default_factory=GridSpec)
    run: RunSpec = field(default_factory=RunSpec)
    criteria: CriteriaSpec = field(default_factory=CriteriaSpec)
    smooth: SmoothSpec = field(default_factory=SmoothSpec)
    source_hash: str = ""

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "eps": self.eps,
            "eos": {"gamma": self.eos.gamma, "rho_lo": self.eos.rho_lo, "rho_hi": self.eos.rho_hi},
            "ring": asdict(self.ring),
            "grid": asdict(self.grid),
            "run": asdict(self.run),
            "criteria": asdict(self.criteria),
            "smooth": asdict(self.smooth),
        }
        return json.loads(json.dumps(out))

    def with_seed(self, seed: int) -> "Scenario":
        """Replace every seed (ring, forcing, smoother ledger)."""
        return replace(
            self,
            ring=replace(self.ring, seed=int(seed)),
            run=replace(self.run, seed=int(seed)),
            smooth=replace(self.smooth, seed=int(seed)),
        )


# ----------------------------------------------------------------------------
# parsing


def _line_of(err) -> int | None:
    line = getattr(err, "lineno", None)
    if line is None:
        m = re.search(r"line (\d+)", str(err))
        line = int(m.group(1)) if m else None
    return line


def _find_line(text: str, key: str) -> int | None:
    leaf = key.split(".")[-1]
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(leaf)}\s*=", line):
            return i
    return None


class _Reader:
    """Typed access to one TOML table with key paths for error messages."""

    def __init__(self, table: dict, prefix: str, allowed):
        self.table = table
        self.prefix = prefix
        unknown = sorted(set(table) - set(allowed))
        if unknown:
            raise ValidationError(f"unknown key {self.key(unknown[0])!r}", key=self.key(unknown[0]))

    def key(self, name):
        return f"{self.prefix}.{name}" if self.prefix else name

    def get(self, name, default, kind):
        if name not in self.table:
            return default
        val = self.table[name]
        key = self.key(name)
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ValidationError(f"{key} must be a number", key=key)
            return float(val)
        if kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ValidationError(f"{key} must be an integer", key=key)
            return int(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise ValidationError(f"{key} must be true or false", key=key)
            return val
        if kind is str:
            if not isinstance(val, str):
                raise ValidationError(f"{key} must be a string", key=key)
            return val
        if kind is dict:
            if not isinstance(val, dict):
                raise ValidationError(f"{key} must be a table", key=key)
            return val
        if isinstance(kind, tuple):  # list of the element type
            if not isinstance(val, list) or not val:
                raise ValidationError(f"{key} must be a non-empty list", key=key)
            sub = _Reader({str(i): v for i, v in enumerate(val)}, key, [str(i) for i in range(len(val))])
            return tuple(sub.get(str(i), None, kind[0]) for i in range(len(val)))
        raise TypeError(kind)


def _require(cond: bool, message: str, key: str):
    if not cond:
        raise ValidationError(message, key=key)


def _seed(value, key):
    if value is None:
        return None
    _require(0 <= value < 2**64, f"{key} must be an unsigned 64-bit integer", key)
    return value


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text; errors name the offending key."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed scenario: {exc}", line=_line_of(exc)) from None
    try:
        return _build(doc, hashlib.sha256(text.encode()).hexdigest())
    except ValidationError as exc:
        if exc.key and exc.line is None:
            exc.line = _find_line(text, exc.key)
        raise


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def _build(doc: dict, digest: str) -> Scenario:
    top = _Reader(doc, "", ["d", "eps", "seed", "eos", "ring", "grid", "run", "criteria", "smooth"])
    d = top.get("d", 2, int)
    _require(d in (2, 3), "d must be 2 or 3", "d")
    eps = top.get("eps", 1.0, float)
    _require(eps > 0, "eps must be > 0", "eps")
    seed = _seed(top.get("seed", None, int), "seed")

    e = _Reader(top.get("eos", {}, dict), "eos", ["gamma", "rho_lo", "rho_hi"])
    gamma = e.get("gamma", 5.0 / 3.0, float)
    _require(gamma > 1, "eos.gamma must be > 1", "eos.gamma")
    rho_lo, rho_hi = e.get("rho_lo", 0.01, float), e.get("rho_hi", 100.0, float)
    _require(0 < rho_lo < rho_hi, "eos.rho_lo must satisfy 0 < rho_lo < rho_hi", "eos.rho_lo")
    eos = Eos(gamma=gamma, rho_lo=rho_lo, rho_hi=rho_hi)

    _require("ring" in doc, "missing table 'ring'", "ring")
    r = _Reader(top.get("ring", {}, dict), "ring", ["recipe", "seed", "params"])
    _require("recipe" in r.table, "ring.recipe is required", "ring.recipe")
    name = r.get("recipe", None, str)
    _require(name in RECIPES, f"unknown recipe {name!r} in ring.recipe", "ring.recipe")
    dims, needs_seed, defaults = RECIPES[name]
    _require(d in dims, f"recipe {name!r} does not support d = {d}", "ring.recipe")
    pr = _Reader(r.get("params", {}, dict), "ring.params", list(defaults))
    params = {k: pr.get(k, v, float) for k, v in defaults.items()}
    ring_seed = _seed(r.get("seed", seed, int), "ring.seed")
    _require(not needs_seed or ring_seed is not None, f"ring.seed is required for recipe {name!r}", "ring.seed")

    g = _Reader(top.get("grid", {}, dict), "grid", ["n1", "n_tan", "L"])
    n1 = g.get("n1", 41, int)
    _require(n1 >= 5, "grid.n1 must be >= 5", "grid.n1")
    n_tan = g.get("n_tan", (32,) * (d - 1), (int,))
    _require(len(n_tan) == d - 1, f"grid.n_tan must have {d - 1} entries", "grid.n_tan")
    _require(all(n >= 4 for n in n_tan), "grid.n_tan entries must be >= 4", "grid.n_tan")
    L = g.get("L", 8.0, float)
    _require(L > 0, "grid.L must be > 0", "grid.L")

    rr = _Reader(
        top.get("run", {}, dict),
        "run",
        ["T", "cfl", "m", "sponge_width", "forcing", "amplitude", "seed", "tol", "max_iter", "snapshots"],
    )
    run = RunSpec(
        T=rr.get("T", 0.1, float),
        cfl=rr.get("cfl", 0.4, float),
        m=rr.get("m", 1, int),
        sponge_width=rr.get("sponge_width", 0.5, float),
        forcing=rr.get("forcing", "reference", str),
        amplitude=rr.get("amplitude", 1.0, float),
        seed=_seed(rr.get("seed", seed, int), "run.seed"),
        tol=rr.get("tol", 1e-10, float),
        max_iter=rr.get("max_iter", 50, int),
        snapshots=rr.get("snapshots", True, bool),
    )
    _require(run.T > 0, "run.T must be > 0", "run.T")
    _require(run.cfl > 0, "run.cfl must be > 0", "run.cfl")
    _require(0 <= run.m <= 2, "run.m must be 0, 1 or 2", "run.m")
    _require(run.sponge_width >= 0, "run.sponge_width must be >= 0", "run.sponge_width")
    _require(run.forcing in FORCINGS, f"unknown forcing {run.forcing!r} in run.forcing", "run.forcing")
    _require(run.forcing != "random" or run.seed is not None, "run.seed is required for random forcing", "run.seed")
    _require(run.tol > 0, "run.tol must be > 0", "run.tol")
    _require(run.max_iter >= 1, "run.max_iter must be >= 1", "run.max_iter")

    c = _Reader(top.get("criteria", {}, dict), "criteria", ["delta", "delta0"])
    crit = CriteriaSpec(delta=c.get("delta", 0.0, float), delta0=c.get("delta0", 0.0, float))
    _require(crit.delta >= 0, "criteria.delta must be >= 0", "criteria.delta")
    _require(crit.delta0 >= 0, "criteria.delta0 must be >= 0", "criteria.delta0")

    s = _Reader(top.get("smooth", {}, dict), "smooth", ["shape", "thetas", "theta0", "steps", "seed"])
    sm = SmoothSpec(
        shape=s.get("shape", (64, 64), (int,)),
        thetas=s.get("thetas", (2.0, 4.0, 8.0, 16.0), (float,)),
        theta0=s.get("theta0", 2.0, float),
        steps=s.get("steps", 100, int),
        seed=_seed(s.get("seed", 0 if seed is None else seed, int), "smooth.seed"),
    )
    _require(all(n >= 4 for n in sm.shape), "smooth.shape entries must be >= 4", "smooth.shape")
    _require(all(t > 0 for t in sm.thetas), "smooth.thetas must be > 0", "smooth.thetas")
    _require(sm.theta0 >= 1, "smooth.theta0 must be >= 1", "smooth.theta0")
    _require(sm.steps >= 1, "smooth.steps must be >= 1", "smooth.steps")

    return Scenario(
        ring=RingRecipe(name, params, ring_seed),
        d=d,
        eps=eps,
        eos=eos,
        grid=GridSpec(n1, tuple(n_tan), L),
        run=run,
        criteria=crit,
        smooth=sm,
        source_hash=digest,
    )


# ----------------------------------------------------------------------------
# recipes


@dataclass
class InterfaceSamples:
    """Interface data at the tangential grid nodes, flattened to one batch axis."""

    state: PlasmaState
    u: np.ndarray
    dphi_t: np.ndarray
    grad_phi: np.ndarray
    eps: float

    @property
    def U(self):
        return self.state.as_vector()


def _vacuum_trace(q, h_dir, dphi_t, grad, e1_coeff, zeta, eps):
    """Scale ``h = s h_dir`` and set ``e`` so that the e/h coupling rows hold
    and ``2 q = |h|^2 - |e|^2``; ``e1 = s e1_coeff + zeta`` in 3D."""
    d = h_dir.shape[-1]
    if d == 2:
        e_dir = -eps * dphi_t * h_dir[..., 1]
        a = np.sum(h_dir**2, -1) - e_dir**2
        s = np.sqrt(2.0 * q / a)
        return s[..., None] * h_dir, (s * e_dir)[..., None]

    def e_of(s, z):
        e1 = s * e1_coeff + z
        e2 = eps * dphi_t * s * h_dir[..., 2] - grad[..., 0] * e1
        e3 = -eps * dphi_t * s * h_dir[..., 1] - grad[..., 1] * e1
        return np.stack([e1, e2, e3], -1)

    lin, const = e_of(1.0, 0.0), e_of(0.0, zeta)
    a = np.sum(h_dir**2, -1) - np.sum(lin**2, -1)
    b = -2.0 * np.sum(lin * const, -1)
    c = -np.sum(const**2, -1) - 2.0 * q
    s = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return s[..., None] * h_dir, e_of(s, zeta)


def _flat_front(sc: Scenario) -> InterfaceSamples:
    p = sc.ring.params
    d, eps = sc.d, sc.eps
    grid = sc.grid.build()
    xs = np.stack([x.ravel() for x in np.meshgrid(*grid.x_tan, indexing="ij")], -1)
    n = xs.shape[0]
    mod = 1.0 + p["modulation"] * np.cos(xs[:, 0])
    v = np.zeros((n, d))
    v[:, 0] = p["speed"]
    v[:, 1] = p["v_tan"]
    H = np.zeros((n, d))
    H[:, 1] = p["H_tan"] * mod
    pres = p["p0"] * mod
    S = np.full(n, sc.eos.entropy(p["p0"], p["rho0"]))
    q = total_pressure(pres, v, H, eps)
    grad = np.zeros((n, d - 1))
    dphi_t = np.full(n, p["speed"])
    h_dir = np.zeros((n, d))
    h_dir[:, d - 1] = 1.0
    e1 = -eps * (v[:, 1] * h_dir[:, 2] - v[:, 2] * h_dir[:, 1]) if d == 3 else 0.0
    h, e = _vacuum_trace(q, h_dir, dphi_t, grad, e1, p["zeta"], eps)
    if d == 3:
        # same expression as the stability functional, so zeta = 0 is exact
        e[:, 0] = p["zeta"] - eps * (v[:, 1] * h[:, 2] - v[:, 2] * h[:, 1])
        e[:, 1] = eps * dphi_t * h[:, 2]
        e[:, 2] = -eps * dphi_t * h[:, 1]
    state = PlasmaState(q=q, v=v, H=H, S=S, eps=eps)
    return InterfaceSamples(state, np.concatenate([h, e], -1), dphi_t, grad, eps)


def _random_interface(sc: Scenario) -> InterfaceSamples:
    p = sc.ring.params
    d, eps = sc.d, sc.eps
    rng = np.random.default_rng(sc.ring.seed)
    n = int(np.prod(sc.grid.n_tan))
    grad = rng.uniform(-p["max_slope"], p["max_slope"], (n, d - 1))
    N = np.concatenate([np.ones((n, 1)), -grad], -1)
    base = random_plasma_state(rng, d, eps, sc.eos, size=n, vmax=p["vmax"])
    H = base.H - (np.sum(base.H * N, -1) / np.sum(N * N, -1))[:, None] * N
    pres = base.pressure()
    q = total_pressure(pres, base.v, H, eps)
    dphi_t = np.sum(base.v * N, -1)
    h_dir = rng.normal(size=(n, d))
    h_dir -= (np.sum(h_dir * N, -1) / np.sum(N * N, -1))[:, None] * N
    h_dir /= np.linalg.norm(h_dir, axis=-1, keepdims=True)
    e1 = 0.1 * rng.uniform(-1, 1, n) if d == 3 else 0.0
    h, e = _vacuum_trace(q, h_dir, dphi_t, grad, e1, 0.0, eps)
    state = PlasmaState(q=q, v=base.v, H=H, S=base.S, eps=eps)
    return InterfaceSamples(state, np.concatenate([h, e], -1), dphi_t, grad, eps)


def initial_fields(sc: Scenario):
    """Two-dimensional fields ``(U0, u0, phi0)`` on the scenario grid."""
    grid = sc.grid.build()
    name = sc.ring.name
    if name == "compatible_flat_front":
        from .nonlinear import compatible_flat_front

        return compatible_flat_front(
            grid, sc.eos, sc.eps, speed=sc.ring.params["speed"], h_interface=sc.ring.params["h_interface"]
        )
    if name == "shear_layer":
        ring = ring_state(sc)
        return ring.U, ring.u, ring.phi
    raise ValidationError(f"recipe {name!r} does not define initial fields", key="ring.recipe")


def interface_samples(sc: Scenario) -> InterfaceSamples:
    name = sc.ring.name
    if name == "flat_front":
        return _flat_front(sc)
    if name == "random_interface":
        return _random_interface(sc)
    U, u, phi = initial_fields(sc)
    grid = sc.grid.build()
    grad = periodic_diff(phi, grid.dx_tan[0], axis=0)[:, None]
    state = PlasmaState.from_vector(U[0], sc.eps)
    if name == "compatible_flat_front":
        dphi_t = state.v[..., 0] - grad[..., 0] * state.v[..., 1]
    else:
        dphi_t = np.zeros(grid.n_tan)
    return InterfaceSamples(state, u[0], dphi_t, grad, sc.eps)


def ring_state(sc: Scenario):
    from .solver2d import shear_layer_ring

    if sc.ring.name != "shear_layer":
        raise ValidationError(f"recipe {sc.ring.name!r} does not define a basic state", key="ring.recipe")
    return shear_layer_ring(sc.grid.build(), sc.eos, sc.eps, **sc.ring.params)


def linear_problem(sc: Scenario):
    """Effective linear problem for ``solve2d``."""
    from .solver2d import LinearProblem2D, NP, NV, ramp

    ring = ring_state(sc)
    grid = ring.grid
    run = sc.run
    if run.forcing == "none":
        return LinearProblem2D(ring, T=run.T, cfl=run.cfl, sponge_width=run.sponge_width)
    x1, x2 = grid.mesh()
    xs = grid.x_tan[0]
    if run.forcing == "reference":
        prof = run.amplitude * np.exp(-(((x1 - 0.3) / 0.2) ** 2)) * np.cos(x2)
        cp = {1: 0.1 * prof, 4: 0.05 * prof}
        cm = {0: 0.1 * prof * np.sin(x2)}
        gshape = run.amplitude * np.stack([0.02 * np.sin(xs), 0.05 * np.cos(2 * xs), 0.03 * np.sin(xs)], -1)
    else:
        rng = np.random.default_rng(run.seed)

        def rand_prof():
            a, b = rng.normal(size=(2, 3))
            modes = sum(a[k] * np.cos((k + 1) * x2) + b[k] * np.sin((k + 1) * x2) for k in range(3))
            return run.amplitude * 0.05 * np.exp(-(((x1 - 0.3) / 0.2) ** 2)) * modes

        cp = {k: rand_prof() for k in range(NP)}
        cm = {k: rand_prof() for k in range(NV)}
        coef = rng.normal(size=(3, 2))
        gshape = run.amplitude * 0.02 * np.stack([c[0] * np.sin(xs) + c[1] * np.cos(xs) for c in coef], -1)

    def fp(t):
        out = np.zeros(grid.shape + (NP,))
        for k, v in cp.items():
            out[..., k] = ramp(t, run.T) * v
        return out

    def fm(t):
        out = np.zeros(grid.shape + (NV,))
        for k, v in cm.items():
            out[..., k] = ramp(t, run.T) * v
        return out

    def gd(t):
        return ramp(t, run.T) * gshape

    return LinearProblem2D(
        ring,
        T=run.T,
        cfl=run.cfl,
        forcing_plus=fp,
        forcing_minus=fm,
        boundary_data=gd,
        sponge_width=run.sponge_width,
    )


__all__ = [
    "CriteriaSpec",
    "GridSpec",
    "InterfaceSamples",
    "RECIPES",
    "RingRecipe",
    "RunSpec",
    "Scenario",
    "SmoothSpec",
    "initial_fields",
    "interface_samples",
    "linear_problem",
    "load_scenario",
    "parse_scenario",
    "ring_state",
]
