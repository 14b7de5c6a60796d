import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvi.assembly import boundary_matrices
from pvi.errors import ConstraintViolated, IncompatibleState
from pvi.linearized import SurfaceRing, boundary_forms
from pvi.spectral import (
    char_split,
    char_split_from_forms,
    check_boundary_decompositions,
    inertia,
    matrix_rank,
    multiplicity_scan,
    verify_boundary_identity,
)
from pvi.state import Eos, PlasmaState, total_pressure

EOS = Eos()


def compatible_states(rng, d, n, eps=1.0, flat=False):
    """Random interface samples with ``H.N = 0`` and ``dt phi = v.N``."""
    grad = np.zeros((n, d - 1)) if flat else rng.uniform(-0.6, 0.6, (n, d - 1))
    N = np.concatenate([np.ones((n, 1)), -grad], axis=-1)
    v = rng.normal(size=(n, d))
    v *= (rng.uniform(0, 0.7, n) / eps / np.linalg.norm(v, axis=-1))[:, None]
    H = rng.uniform(-1.5, 1.5, (n, d))
    H -= (np.sum(H * N, -1) / np.sum(N * N, -1))[:, None] * N
    p = rng.uniform(0.3, 2.0, n)
    rho = np.exp(rng.uniform(-1, 1, n))
    S = EOS.entropy(p, rho)
    q = total_pressure(p, v, H, eps)
    dphi_t = np.sum(v * N, -1)
    return PlasmaState(q, v, H, S, eps), dphi_t, grad


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("eps", [1.0, 0.6])
def test_plasma_boundary_signature(d, eps):
    st_, dphi_t, grad = compatible_states(np.random.default_rng(d), d, 100, eps)
    bm = boundary_matrices(st_, np.zeros((100, d)), dphi_t, grad, EOS)
    pos, neg, zero = inertia(bm.Ab_plus)
    assert np.all(pos == 1) and np.all(neg == 1) and np.all(zero == 2 * d)


@pytest.mark.parametrize("d", [2, 3])
def test_reformed_full_signature(d):
    st_, dphi_t, grad = compatible_states(np.random.default_rng(10 + d), d, 100)
    bm = boundary_matrices(st_, st_.v, dphi_t, grad, EOS, reformed=True)
    pos, neg, zero = inertia(bm.full())
    assert np.all(pos == d) and np.all(neg == d) and np.all(zero == 3 * d - 1)


def test_inertia_threshold_is_relative():
    A = np.diag([1e6, -1e6, 1e-5])
    assert inertia(A) == (1, 1, 1)
    assert inertia(A * 1e-9) == (1, 1, 1)


def _sine_samples(formulation):
    n = 16
    x2 = np.arange(n) * 2 * np.pi / n
    dphi_t = 0.3 * np.sin(x2)
    v = np.zeros((n, 3))
    v[:, 0] = dphi_t
    H = np.zeros((n, 3))
    H[:, 1] = 1.0
    s = PlasmaState(total_pressure(1.0, v, H, 1.0), v, H, np.zeros(n))
    return multiplicity_scan(s, v, dphi_t, np.zeros((n, 2)), EOS, formulation)


def test_multiplicity_static_front_is_constant():
    n = 8
    v = np.zeros((n, 3))
    H = np.tile([0.0, 1.0, 0.0], (n, 1))
    s = PlasmaState(np.full(n, 1.5), v, H, np.zeros(n))
    rep = multiplicity_scan(s, v, np.zeros(n), np.zeros((n, 2)), EOS)
    assert rep.classification == "constant"


def test_multiplicity_classifier():
    orig = _sine_samples("original")
    ref = _sine_samples("reformed")
    assert orig.classification == "variable"
    assert ref.classification == "constant"
    assert orig.offending
    zero_idx = {0, 8}
    assert zero_idx <= set(orig.offending)
    assert set(orig.ranks) == {4, 6} or len(set(orig.ranks)) == 2
    assert orig.to_dict()["classification"] == "variable"


def test_identity_example():
    s = PlasmaState(1.5, np.zeros(3), np.array([0.0, 1.0, 0.0]), 0.0)
    chk = verify_boundary_identity(s, 0.0, np.zeros(2), EOS)
    P = chk.product
    # the pattern entry pairing pressure and normal velocity carries -Gamma N_1
    assert P[0, 1] == pytest.approx(-1.0, abs=1e-12)
    mask = np.ones_like(P, bool)
    mask[0, 1:4] = mask[1:4, 0] = False
    assert np.max(np.abs(P[mask])) < 1e-10


@pytest.mark.parametrize("d", [2, 3])
def test_identity_random(d):
    s, dphi_t, grad = compatible_states(np.random.default_rng(20 + d), d, 50)
    chk = verify_boundary_identity(s, dphi_t, grad, EOS)
    assert chk.residual < 1e-9


def test_identity_negative_control():
    grad = np.zeros(2)
    s = PlasmaState(1.5, np.zeros(3), np.array([0.1, 1.0, 0.0]), 0.0)
    with pytest.raises(IncompatibleState):
        verify_boundary_identity(s, 0.0, grad, EOS)
    chk = verify_boundary_identity(s, 0.0, grad, EOS, strict=False)
    assert chk.residual > 1e-3


def ring_from_state(s: PlasmaState, dphi_t, grad, rng, h_amp=1.0):
    """Interface ring with compatible vacuum fields (normal derivatives random)."""
    d = s.d
    n = dphi_t.shape
    N = np.concatenate([np.ones(n + (1,)), -grad], axis=-1)
    h = rng.uniform(-h_amp, h_amp, n + (d,))
    h -= (np.sum(h * N, -1) / np.sum(N * N, -1))[..., None] * N
    e = rng.uniform(-0.5, 0.5, n + ((3,) if d == 3 else ()))
    u = np.concatenate([h, e if d == 3 else e[..., None]], axis=-1)
    U = s.as_vector()
    return SurfaceRing(
        U=U,
        u=u,
        dU1=rng.normal(size=U.shape),
        du1=rng.normal(size=u.shape),
        dphi_t=dphi_t,
        grad_phi=grad,
        eps=s.eps,
    )


@pytest.mark.parametrize("d", [2, 3])
def test_decompositions_flat_rest(d):
    v = np.zeros(d)
    H = np.zeros(d)
    H[1] = 1.0
    s = PlasmaState(1.5, v, H, 0.0)
    ring = ring_from_state(s, np.zeros(()), np.zeros(d - 1), np.random.default_rng(0))
    res = check_boundary_decompositions(ring, EOS)
    assert res["plus"] < 1e-12 and res["minus"] < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([2, 3]), st.integers(0, 2**31), st.sampled_from([1.0, 0.5]))
def test_decompositions_random(d, seed, eps):
    rng = np.random.default_rng(seed)
    s, dphi_t, grad = compatible_states(rng, d, 20, eps)
    ring = ring_from_state(s, dphi_t, grad, rng)
    res = check_boundary_decompositions(ring, EOS)
    assert res["plus"] < 1e-9 and res["minus"] < 1e-9


def test_decompositions_require_constraints():
    s = PlasmaState(1.5, np.zeros(2), np.array([0.5, 1.0]), 0.0)
    ring = ring_from_state(s, np.zeros(()), np.zeros(1), np.random.default_rng(1))
    with pytest.raises(ConstraintViolated):
        check_boundary_decompositions(ring, EOS)


@pytest.mark.parametrize("d,sizes", [(3, (6, 8)), (2, (4, 5))])
def test_char_split(d, sizes):
    cs = char_split(d)
    assert cs.sizes == sizes
    assert set(cs.noncharacteristic).isdisjoint(cs.characteristic)
    assert sorted(cs.noncharacteristic + cs.characteristic) == list(range(sum(sizes)))
    Bp, Bm = boundary_forms(d, 0.7)
    assert char_split_from_forms(Bp, Bm) == cs


def test_rank_helper():
    assert matrix_rank(np.diag([1.0, 1e-12, 0.0])) == 1
