import numpy as np
import pytest

from pvi.errors import CflViolation, NoContraction
from pvi.geometry import Grid
from pvi.linearized import ReducedVacuumProblem
from pvi.solver2d import (
    NP,
    NZ,
    LinearProblem2D,
    boundary_flux,
    energy_growth_rate,
    energy_monitor,
    fixed_point_solve,
    front_norm,
    interface_residuals,
    involution_residuals,
    normal_weights,
    prepare,
    reduce_vacuum,
    reference_problem,
    shear_layer_ring,
    solve_hyperbolic_bvp,
    solve_vacuum_only,
    transport_front,
)
from pvi.solver2d import _mv

# Regression pin for the interior L2 divergence of the plasma field over
# T = 0.1.  Validated run (smooth-onset interface data, L = 2): the ratio
# residual / h^2 was 0.0047, 0.013, 0.025, 0.030, 0.033 for n1 = 51 ... 801.
INVOLUTION_C = 0.05


def _small(n1=21, n2=8, **kw):
    g = Grid(n1, (n2,), L=2.0)
    return LinearProblem2D(shear_layer_ring(g), sponge_width=0.5, **kw)


# ----------------------------------------------------------------------------
# zero input, flux, constraints


def test_zero_input_is_exactly_zero():
    p = _small()
    r = fixed_point_solve(p)
    assert len(r.iterations) == 1 and r.converged
    assert not np.any(r.Z) and not np.any(r.psi)
    assert not np.any(r.energy) and not np.any(r.flux)


def test_homogeneous_rows_carry_no_flux():
    p = reference_problem(n1=101, n2=16)
    p.boundary_data = None
    st = prepare(p)
    sol = solve_hyperbolic_bvp(p, setup=st)
    assert np.max(np.abs(sol.Z)) > 1e-3
    flux = boundary_flux(st, sol.Z)
    assert np.max(np.abs(flux)) < 1e-10


def _smooth_onset_problem(n1, n2, T=0.1):
    g = Grid(n1, (n2,), L=2.0)
    xs = g.x_tan[0]
    shape = np.stack([0 * xs, 0.05 * np.cos(2 * xs) + 0.02 * np.sin(xs), 0.03 * np.sin(xs)], -1)
    return LinearProblem2D(shear_layer_ring(g), T=T, boundary_data=lambda t: (t / T) ** 3 * shape, sponge_width=0.5)


@pytest.mark.parametrize("n1,n2", [(51, 16), (101, 32), (201, 64)])
def test_involution_drift_bound(n1, n2):
    p = _smooth_onset_problem(n1, n2)
    st = prepare(p)
    sol = solve_hyperbolic_bvp(p, setup=st)
    res = involution_residuals(st, sol.Z)
    h = p.grid.dx1
    assert np.max(res["H.inv3"]) <= INVOLUTION_C * h**2
    # vacuum fields start divergence-free and stay so to round-off
    assert np.max(res["h.inv3"]) < 1e-14


# ----------------------------------------------------------------------------
# manufactured solution


def _exact(grid, t):
    x1, x2 = grid.mesh()
    c = np.linspace(0.5, 1.3, NZ)
    th = np.linspace(0, 2, NZ)
    env = np.exp(-0.5 * x1**2)
    prof = (1 + 0.7 * x1) * env
    dprof = (0.7 - x1 * (1 + 0.7 * x1)) * env
    cos = np.cos(x2[..., None] + th)
    sin = np.sin(x2[..., None] + th)
    z = c * prof[..., None] * cos
    z1 = c * dprof[..., None] * cos
    z2 = -c * prof[..., None] * sin
    return np.sin(2 * t) * z, 2 * np.cos(2 * t) * z, np.sin(2 * t) * z1, np.sin(2 * t) * z2


def _mms_error(n1, n2, T=0.5):
    g = Grid(n1, (n2,))
    p = LinearProblem2D(shear_layer_ring(g), T=T)
    st = prepare(p)
    op = st.coupled

    def F(t):
        z, zt, z1, z2 = _exact(g, t)
        return zt + _mv(op.A1, z1) + _mv(op.A2, z2) + _mv(op.C0, z) + op.sponge[:, None, None] * z

    def rows(t):
        z = _exact(g, t)[0][0]
        r = np.einsum("jri,ji->jr", op.rows, z)
        out = np.zeros((n2, 3))
        out[:, 1:] = r
        return out

    p.forcing_plus = lambda t: F(t)[..., :NP]
    p.forcing_minus = lambda t: F(t)[..., NP:] * p.eps
    p.boundary_data = rows
    sol = solve_hyperbolic_bvp(p, setup=st)
    e = sol.Z[-1] - _exact(g, T)[0]
    w = normal_weights(n1, g.dx1)
    return np.sqrt(np.sum(w[:, None, None] * e**2) * g.dx_tan[0])


def test_manufactured_solution_order():
    errs = np.array([_mms_error(41, 32), _mms_error(81, 64), _mms_error(161, 128)])
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all((orders >= 1.8) & (orders <= 2.2)), orders


# ----------------------------------------------------------------------------
# front transport


def _ring(n2):
    return shear_layer_ring(Grid(5, (n2,)))


def test_transport_zero_source():
    ring = _ring(16)
    assert not np.any(transport_front(np.zeros((11, 16)), ring, 0.01))


def test_transport_constant_source_grows_linearly():
    ring = _ring(16)
    dt, c = 0.01, 0.7
    phi = transport_front(np.full((21, 16), c), ring, dt, speed=0.0, damping=0.0)
    np.testing.assert_allclose(phi, c * dt * np.arange(21)[:, None] * np.ones(16), atol=1e-14)


def _characteristic_error(n2, v=0.4, c=0.3, T=0.5):
    ring = _ring(n2)
    x = ring.grid.x_tan[0]
    dt = 0.25 * (2 * np.pi / n2) / v
    nt = int(np.ceil(T / dt))
    dt = T / nt
    W2 = np.tile(c * np.sin(x), (nt + 1, 1))
    phi = transport_front(W2, ring, dt, speed=v, damping=0.0)
    exact = c / v * (np.cos(x - v * T) - np.cos(x))
    return np.max(np.abs(phi[-1] - exact))


def test_transport_characteristics():
    errs = np.array([_characteristic_error(n) for n in (32, 64, 128)])
    assert errs[-1] < 1e-3
    assert np.all(np.log2(errs[:-1] / errs[1:]) > 1.8)


def test_front_norm_of_constant():
    psi = np.full((11, 8), 2.0)
    assert front_norm(psi, 0.1, 2 * np.pi / 8) == pytest.approx(2.0 * np.sqrt(2 * np.pi), rel=1e-12)


# ----------------------------------------------------------------------------
# fixed point


@pytest.fixture(scope="module")
def reference_runs():
    return {T: fixed_point_solve(reference_problem(T=T)) for T in (0.1, 0.2)}


def test_fixed_point_converges(reference_runs):
    r = reference_runs[0.1]
    assert r.converged and len(r.iterations) <= 20
    assert r.iterations[-1]["increment"] < 1e-10 * r.scale
    ratios = r.ratios
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] < 0.5


def test_first_ratio_scales_with_T(reference_runs):
    factor = reference_runs[0.2].ratios[0] / reference_runs[0.1].ratios[0]
    assert 1.3 <= factor <= 3.0


def test_interface_rows_hold(reference_runs):
    r = reference_runs[0.1]
    p = reference_problem(T=0.1)
    res = interface_residuals(r, p)
    gscale = 0.05
    assert np.max(np.abs(res[..., 1])) < 1e-12 * gscale
    # the transport row carries the upwind truncation error in x2
    transport = np.max(np.abs(res[..., 0]))
    assert transport < 0.1 * gscale
    # the e/h row minus eps h2 times the transport row is free of front
    # derivatives; only the normal-trace drift of the vacuum field remains
    h2 = p.ring.u[0, :, 1]
    combo = res[..., 2] - p.eps * h2 * res[..., 0]
    assert np.max(np.abs(combo)) < 0.01 * transport


def test_energy_nonnegative(reference_runs):
    p = reference_problem(T=0.1)
    em = energy_monitor(reference_runs[0.1], p, m=1)
    for E in em.energy.values():
        assert np.all(E >= 0)
    assert np.max(em.energy[(0, 0)]) > 0


def test_no_contraction_raises():
    p = reference_problem(T=150.0, n1=41, n2=16, L=8.0, sponge_width=2.0)
    with pytest.raises(NoContraction):
        fixed_point_solve(p, contraction_window=3, max_iter=4)


def test_cfl_violation():
    with pytest.raises(CflViolation):
        _small(cfl=1.5)


# ----------------------------------------------------------------------------
# semi-discrete energy growth


def _growth_constant(n1, n2, T=0.1):
    g = Grid(n1, (n2,), L=2.0)
    ring = shear_layer_ring(g, q_slope=1.0, H_slope=0.5, v_amp=0.3)
    x1, x2 = g.mesh()
    prof = np.exp(-((x1 - 0.4) ** 2) / 0.02)[..., None]
    amp = np.random.default_rng(1).normal(size=NZ)
    onset = lambda t: (t / T) ** 2  # noqa: E731
    p = LinearProblem2D(
        ring,
        T=T,
        forcing_plus=lambda t: onset(t) * prof * np.cos(x2[..., None] + np.arange(NP)) * amp[:NP],
        forcing_minus=lambda t: onset(t) * prof * np.sin(x2[..., None] + np.arange(NZ - NP)) * amp[NP:],
        sponge_width=0.5,
    )
    st = prepare(p)
    sol = solve_hyperbolic_bvp(p, setup=st)
    return energy_growth_rate(st, sol.Z)


def test_growth_constant_is_mesh_independent():
    C = np.array([_growth_constant(51, 16), _growth_constant(101, 32), _growth_constant(201, 64)])
    assert np.all(C > 0)
    assert (C.max() - C.min()) / C.max() < 0.2


# ----------------------------------------------------------------------------
# vacuum-only problem


def test_vacuum_only_zero_data():
    p = _small()
    st = prepare(p)
    _, vac = reduce_vacuum(p, st)
    assert not np.any(vac.u_natural)


def _trace_residual(n1, T=0.1):
    g = Grid(n1, (16,), L=2.0)
    x1, x2 = g.mesh()
    xs = g.x_tan[0]
    prof = np.exp(-(((x1 - 0.3) / 0.2) ** 2))

    def fm(t):
        out = np.zeros(g.shape + (3,))
        out[..., 0] = (t / T) ** 2 * prof * np.sin(x2)
        out[..., 2] = (t / T) ** 2 * prof * np.cos(x2)
        return out

    gd = lambda t: (t / T) ** 3 * np.stack([0 * xs, 0 * xs, 0.03 * np.sin(xs)], -1)  # noqa: E731
    p = LinearProblem2D(shear_layer_ring(g), T=T, forcing_minus=fm, boundary_data=gd, sponge_width=0.5)
    red, vac = reduce_vacuum(p, prepare(p))
    return np.max(np.abs(vac.trace_residual)), np.max(np.abs(red.g5))


def test_vacuum_trace_matches_g5():
    res = np.array([_trace_residual(n)[0] for n in (51, 101, 201)])
    g5 = _trace_residual(51)[1]
    assert res[-1] < 0.01 * g5
    assert np.all(np.log2(res[:-1] / res[1:]) > 1.5)


def test_vacuum_only_homogeneous_trace():
    p = _small()
    st = prepare(p)
    nt = len(st.times) - 1
    x1, x2 = p.grid.mesh()
    f = np.zeros((nt + 1,) + p.grid.shape + (3,))
    f[..., 1] = np.exp(-((x1 - 0.5) ** 2)) * np.cos(x2) * st.times[:, None, None]
    red = ReducedVacuumProblem(g5=np.zeros((nt + 1, 8)), u_sharp=np.zeros_like(f), forcing=f, dt=st.dt)
    vac = solve_vacuum_only(red, st)
    assert np.max(np.abs(vac.u_natural)) > 0
    assert np.max(np.abs(vac.trace_residual)) < 1e-8


def test_vacuum_only_cfl():
    p = _small()
    st = prepare(p)
    f = np.zeros((3,) + p.grid.shape + (3,))
    red = ReducedVacuumProblem(g5=np.zeros((3, 8)), u_sharp=f, forcing=f, dt=10.0)
    with pytest.raises(CflViolation):
        solve_vacuum_only(red, st)
