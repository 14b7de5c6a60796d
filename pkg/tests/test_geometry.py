import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import loglog_slope
from pvi.errors import DegenerateJacobian, FrontTooLarge, UnderResolved
from pvi.geometry import (
    Cutoff,
    Grid,
    GridField,
    aniso_norm,
    l2_quadrature,
    make_geometry,
    multi_indices,
    phi_derivative,
    sigma_weight,
    sigma_weight_derivative,
)
from pvi.gridio import read_csv, read_snapshot, write_csv, write_snapshot


def test_cutoff_properties():
    chi = Cutoff()
    x = np.linspace(-12, 12, 24001)
    vals = chi(x)
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.all(vals[np.abs(x) <= 1] == 1.0)
    assert np.all(vals[np.abs(x) >= chi.support] == 0.0)
    slope = np.max(np.abs(np.gradient(vals, x)))
    assert 4 * slope < 1
    assert slope == pytest.approx(chi.max_slope, rel=1e-3)
    fd = np.gradient(vals, x)
    np.testing.assert_allclose(chi.derivative(x), fd, atol=1e-5)


def test_cutoff_rejects_steep_blend():
    with pytest.raises(ValueError):
        Cutoff(width=2.0)


def test_sigma_values():
    assert sigma_weight(0.5) == 0.5
    assert sigma_weight(5.0) == 2.0
    assert sigma_weight(4.0) == pytest.approx(2.0, abs=1e-14)
    x = np.linspace(0, 6, 6001)
    s = sigma_weight(x)
    assert np.all(np.diff(s) >= -1e-15)
    np.testing.assert_allclose(sigma_weight_derivative(x[1:-1]), np.gradient(s, x)[1:-1], atol=2e-3)
    # C1 across the junctions
    for x0 in (1.0, 4.0):
        assert sigma_weight_derivative(x0 - 1e-9) == pytest.approx(sigma_weight_derivative(x0 + 1e-9), abs=1e-6)


def test_flat_front_lifting():
    g = Grid(33, (16,))
    geo = make_geometry(np.zeros(16), g)
    x1 = g.x1[None, :, None]
    np.testing.assert_array_equal(geo.Phi(+1), np.broadcast_to(x1, (1, 33, 16)))
    np.testing.assert_array_equal(geo.Phi(-1), np.broadcast_to(-x1, (1, 33, 16)))


def test_front_too_large():
    g = Grid(9, (8,))
    with pytest.raises(FrontTooLarge):
        make_geometry(np.full(8, 2.5), g)


def test_jacobian_bounded_away_from_zero():
    g = Grid(201, (32,))
    x2 = g.x_tan[0]
    geo = make_geometry(2.0 * np.sin(x2), g)
    assert np.min(np.abs(geo.d1_Phi(+1))) >= 1 - 4 * Cutoff().max_slope * 0.5 - 1e-12


def test_flat_front_derivative_is_plain():
    g = Grid(41, (24,))
    geo = make_geometry(np.zeros((5, 24)), g, dt=0.1)
    X1, X2 = g.mesh()
    f = np.stack([np.sin(X1) * np.cos(X2) * (1 + 0.1 * k) for k in range(5)])
    d2 = phi_derivative(f, geo, "2", dt=0.1)
    plain = (np.roll(f, -1, 2) - np.roll(f, 1, 2)) / (2 * g.dx_tan[0])
    np.testing.assert_array_equal(d2, plain)


def test_chain_rule_identity():
    g = Grid(81, (32,))
    x2 = g.x_tan[0]
    geo = make_geometry(0.3 * np.sin(x2), g)
    f = geo.Phi(+1)
    np.testing.assert_allclose(phi_derivative(f, geo, "1"), 1.0, atol=2e-3)


def _transformed_error(n):
    g = Grid(n, (n - 1,), L=8.0)
    x2 = g.x_tan[0]
    t = np.array([0.0, 0.01, 0.02])
    phi = 0.4 * np.sin(x2)[None] * (1 + t[:, None])
    dphi_t = 0.4 * np.sin(x2)[None] * np.ones((3, 1))
    grad = (0.4 * np.cos(x2)[None] * (1 + t[:, None]))[..., None]
    geo = make_geometry(phi, g, dphi_t=dphi_t, grad_phi=grad)
    X1, X2 = g.mesh()
    F = lambda X1, X2: np.sin(0.5 * X1) * np.cos(X2)  # noqa: E731
    f = np.broadcast_to(F(X1, X2), (3,) + X1.shape)
    d1f = 0.5 * np.cos(0.5 * X1) * np.cos(X2)
    d2f = -np.sin(0.5 * X1) * np.sin(X2)
    exact = d2f[None] - geo.dj_Phi(2) / geo.d1_Phi(+1) * d1f[None]
    num = phi_derivative(f, geo, "2")
    return np.max(np.abs(num - exact)[:, 1:-1])


def test_phi_derivative_second_order():
    ns = [33, 65, 129]
    errs = [_transformed_error(n) for n in ns]
    slope = loglog_slope([8 / (n - 1) for n in ns], errs)
    assert 1.8 < slope < 2.2


def test_degenerate_jacobian():
    g = Grid(33, (8,))
    geo = make_geometry(np.zeros(8), g)
    # choose the front so that 1 + chi'(x1) phi vanishes at the node x1 = 5
    phi = np.full((1, 8), -1.0 / float(Cutoff().derivative(5.0)))
    bad = type(geo)(geo.grid, phi, geo.dphi_t, geo.grad_phi, geo.cutoff)
    with pytest.raises(DegenerateJacobian):
        phi_derivative(np.zeros((1, 33, 8)), bad, "1")


def test_multi_index_weights():
    idx = multi_indices(2, 2)
    assert (0, 0, 0, 1) in idx
    assert (0, 0, 0, 2) not in idx
    assert all(sum(a[:-1]) + 2 * a[-1] <= 2 for a in idx)


def test_aniso_norm_constant_field():
    g = Grid(17, (16,), L=4.0)
    T = 0.5
    nt = 11
    f = np.full((nt, 17, 16), 3.0)
    expect = 3.0 * np.sqrt(T * g.L * g.period)
    for m in range(3):
        assert aniso_norm(f, m, g, dt=T / (nt - 1)) == pytest.approx(expect, rel=1e-12)


def test_aniso_norm_order_zero_is_l2():
    rng = np.random.default_rng(0)
    g = Grid(9, (8,))
    f = rng.normal(size=(5, 9, 8))
    assert aniso_norm(f, 0, g, dt=0.1) == pytest.approx(np.sqrt(l2_quadrature(f, g, 0.1)))


def test_aniso_norm_first_order_bound():
    g = Grid(65, (32,))
    X1, X2 = g.mesh()
    f = (np.exp(-0.3 * X1) * np.cos(X2))[None]
    m1 = aniso_norm(f, 1, g)
    d1 = np.gradient(f, g.dx1, axis=1, edge_order=2)
    d2 = (np.roll(f, -1, 2) - np.roll(f, 1, 2)) / (2 * g.dx_tan[0])
    h1 = np.sqrt(l2_quadrature(f, g, None) + l2_quadrature(d1, g, None) + l2_quadrature(d2, g, None))
    assert m1 <= np.sqrt(1 + 4) * h1


def test_aniso_norm_under_resolved():
    g = Grid(3, (3,))
    with pytest.raises(UnderResolved):
        aniso_norm(np.zeros((1, 3, 3)), 2, g)


def test_gridfield_shape_checks():
    g = Grid(5, (4,))
    GridField(np.zeros((2, 3, 5, 4)), ("a", "b"), g, 0.1, 1.0)
    with pytest.raises(ValueError):
        GridField(np.zeros((2, 3, 5, 5)), ("a", "b"), g, 0.1, 1.0)


@given(st.integers(1, 3), st.integers(3, 6), st.integers(3, 6), st.floats(0.1, 5.0))
def test_snapshot_round_trip(nunk, nt, n1, eps):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(nunk * 100 + nt * 10 + n1)
    data = rng.normal(size=(nunk, nt, n1, 4))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "f.pvigrid"
        write_snapshot(path, data, (0.1, 0.2, 0.3), eps, 2)
        back, spacings, eps2, d = read_snapshot(path)
    np.testing.assert_array_equal(back, data)
    assert spacings == (0.1, 0.2, 0.3) and eps2 == eps and d == 2


def test_snapshot_bad_magic(tmp_path):
    from pvi.errors import ParseError

    p = tmp_path / "x"
    p.write_bytes(b"NOTAGRID" + bytes(40))
    with pytest.raises(ParseError):
        read_snapshot(p)


def test_csv_lossless(tmp_path):
    x = np.array([np.pi, 1 / 3, 1e-300, -2.5e17])
    write_csv(tmp_path / "s.csv", {"t": x, "v": 2 * x})
    back = read_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back["t"], x)
    np.testing.assert_array_equal(back["v"], 2 * x)
