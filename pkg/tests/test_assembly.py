import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conservative_matrices
from pvi.assembly import (
    assemble_vacuum,
    boundary_matrices,
    maxwell_matrices,
    plasma_symbols,
    velocity_metric,
)
from pvi.errors import PhysicalConditionViolated
from pvi.state import Eos, PlasmaState, eval_eos, random_plasma_state

EOS = Eos()


def _asym(M):
    return np.max(np.abs(M - np.swapaxes(M, -1, -2)))


def test_rest_state_B0_is_diagonal():
    s = PlasmaState(q=1.0, v=np.zeros(3), H=np.zeros(3), S=0.0)
    vals = eval_eos(1.0, 0.0, EOS, 1.0)
    a2 = EOS.dp_drho(1.0, 0.0)
    B0 = plasma_symbols(s, EOS).B0
    expected = np.diag([1 / (vals.rho * a2)] + [vals.rho * vals.index] * 3 + [1.0] * 3 + [1.0])
    np.testing.assert_allclose(B0, expected, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("eps", [1.0, 0.5, 2.0])
def test_plasma_symmetrizer_properties(d, eps):
    s = random_plasma_state(np.random.default_rng(d), d, eps=eps, size=200)
    ps = plasma_symbols(s, EOS)
    assert np.min(np.linalg.eigvalsh(ps.B0)) > 0
    assert np.min(np.linalg.eigvalsh(ps.S)) > 0
    for A in ps.A:
        SA = ps.S @ A
        assert _asym(SA) < 1e-10 * max(1.0, np.max(np.abs(SA)))


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("eps", [1.0, 0.5])
def test_plasma_matrices_match_conservation_jacobians(d, eps):
    """Quasilinear matrices agree with the conservation-law Jacobians up to a
    multiple of the divergence of H, which only touches the H_j column."""
    rng = np.random.default_rng(40 + d)
    for _ in range(5):
        s = random_plasma_state(rng, d, eps=eps)
        U = s.as_vector()
        ps = plasma_symbols(s, EOS)
        cons = conservative_matrices(U, eps, d)
        extra = []
        for j in range(d):
            D = ps.A[j] - cons[j]
            col = 1 + d + j
            mask = np.ones(D.shape[1], bool)
            mask[col] = False
            assert np.max(np.abs(D[:, mask])) < 1e-9 * np.max(np.abs(ps.A[j]))
            extra.append(D[:, col])
        for j in range(1, d):
            np.testing.assert_allclose(extra[j], extra[0], atol=1e-9)


def test_velocity_metric_eigenvalues():
    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.uniform(-0.5, 0.5, 3)
        G = 1 / np.sqrt(1 - v @ v)
        ev = np.sort(np.linalg.eigvalsh(velocity_metric(v, 1.0)))
        expected = np.sort([1 / G, 1 / G, (1 + G**2 * (v @ v)) / G])
        np.testing.assert_allclose(ev, expected, atol=1e-10)


def test_vacuum_zero_velocity_is_maxwell():
    for d in (2, 3):
        vs = assemble_vacuum(np.zeros(d), 1.0)
        for A, B in zip(vs.A, maxwell_matrices(d)):
            np.testing.assert_array_equal(A, B)


def test_vacuum_symmetrizer_eigenvalues():
    nu = np.array([0.3, 0.4, 0.0])
    ev = np.sort(np.linalg.eigvalsh(assemble_vacuum(nu, 1.0).S))
    np.testing.assert_allclose(ev, [0.5, 0.5, 1, 1, 1.5, 1.5], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from([2, 3]),
    st.floats(0.2, 3.0),
    st.integers(0, 2**31),
)
def test_vacuum_symmetrizer_property(d, eps, seed):
    rng = np.random.default_rng(seed)
    nu = rng.normal(size=(200, d))
    nu *= (rng.uniform(0, 0.98, 200) / eps / np.linalg.norm(nu, axis=-1))[:, None]
    vs = assemble_vacuum(nu, eps)
    assert np.min(np.linalg.eigvalsh(vs.S)) > 0
    for A in vs.A:
        assert _asym(vs.S @ A) < 1e-12


def test_vacuum_rejects_superluminal():
    with pytest.raises(PhysicalConditionViolated):
        assemble_vacuum(np.array([1.0, 0.0]), 1.0)


def _compatible(d, dphi_t):
    H = np.zeros(d)
    H[1] = 1.0
    v = np.zeros(d)
    v[0] = dphi_t
    return PlasmaState(q=1.5, v=v, H=H, S=0.0)


def test_vacuum_boundary_eigenvalues_flat():
    s = _compatible(3, 0.0)
    bm = boundary_matrices(s, np.zeros(3), 0.0, np.zeros(2), EOS)
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(bm.Ab_minus).real), [-1, -1, 0, 0, 1, 1], atol=1e-12)


def test_vacuum_boundary_eigenvalues_moving():
    s = _compatible(3, 0.5)
    bm = boundary_matrices(s, np.zeros(3), 0.5, np.zeros(2), EOS)
    ev = np.sort(np.linalg.eigvals(bm.Ab_minus).real)
    np.testing.assert_allclose(ev, [-1.5, -1.5, -0.5, -0.5, 0.5, 0.5], atol=1e-12)


def test_reformed_vacuum_middle_pair_vanishes():
    rng = np.random.default_rng(8)
    for _ in range(20):
        grad = rng.uniform(-0.5, 0.5, 2)
        N = np.concatenate([[1.0], -grad])
        nu = rng.uniform(-0.3, 0.3, 3)
        dphi_t = nu @ N
        s = _compatible(3, 0.0)
        bm = boundary_matrices(s, nu, dphi_t, grad, EOS, reformed=True)
        ev = np.sort(np.linalg.eigvals(bm.Ab_minus).real)
        nN = np.linalg.norm(N)
        shift = -dphi_t
        expected = np.sort([0, 0, shift + nN, shift + nN, shift - nN, shift - nN])
        np.testing.assert_allclose(ev, expected, atol=1e-10)
