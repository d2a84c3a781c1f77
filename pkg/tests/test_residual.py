import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import model3, rfield, rstate, rtangent
from torus.canonical import Tangent, identity_coord, xi
from torus.hamiltonian import GOLDEN, HamiltonianSpec, Term, model_problem
from torus.residual import Params, Residual, State, StateDelta, dphi, flow_defects, lin_coeffs, phi, seed
from torus.trigfield import Field, Freq, norm_weighted


def rel_diff(a: Residual, b: Residual) -> float:
    return (a - b).norm() / max(b.norm(), 1e-300)


def test_params_validation():
    with pytest.raises(ValueError):
        Params(0.0, 1.5)
    with pytest.raises(ValueError):
        Params(0.0, -0.1)


def test_seed_closed_form():
    H = model_problem(0.0)
    s = seed(Params(2.0, 0.0), H, 1, 8)
    assert (s.e, s.m, s.M) == (0.0, 0.0, -0.0)
    s = seed(Params(0.0, 0.5), H, 1, 8)
    assert s.m == 0.0 and s.M == -0.5


@settings(max_examples=15, deadline=None)
@given(alpha=st.floats(-7, 7), k=st.floats(0, 1), n3=st.booleans())
def test_seed_is_exact_at_epsilon_zero(alpha, k, n3):
    H = (model3 if n3 else model_problem)(0.0)
    f = Params(alpha, k)
    assert phi(f, seed(f, H, H.dim, 6), H).norm() < 1e-13


def test_trivial_integrable_state():
    H = model_problem(0.0)
    s = State(identity_coord(1, 6), 0.0, 0.0, 0.0)
    assert phi(Params(0.0, 0.0), s, H).norm() < 1e-15


def test_first_order_residual():
    H = model_problem(0.01)
    a = 0.4
    s = State(identity_coord(1, 8, a), 0.0, 0.0, 0.0)
    r = phi(Params(a, 0.0), s, H)
    expect = Field.from_modes(1, 8, {(1,): 0.005 * np.exp(1j * a)})
    np.testing.assert_allclose(r.F1.coeffs, expect.coeffs, atol=1e-15)
    assert 0.005 < r.norm() < 0.05


def test_lin_coeffs_at_trivial_state():
    H = model_problem(0.0)
    f = Params(0.3, 0.2)
    lc = lin_coeffs(f, seed(f, H, 1, 4), H)
    np.testing.assert_allclose(lc.S.coeffs, Field.constant(-np.eye(1), 1, 4).coeffs, atol=1e-15)
    for X in (lc.T, lc.U, lc.E, lc.K):
        assert norm_weighted(X) < 1e-15


def test_cross_term_row():
    c = 0.3
    h0 = (Term(GOLDEN, (1,), 0), Term(-0.5, (2,), 0), Term(0.5, (0,), 2), Term(c, (1,), 1))
    H = HamiltonianSpec(h0, (), 0.0, Freq(np.array([GOLDEN]), 0.3, 1.0))
    f = Params(0.0, 0.0)
    lc = lin_coeffs(f, State(identity_coord(1, 4), 0.0, 0.0, 0.0), H)
    np.testing.assert_allclose(lc.T.mean(), [[0.0], [c]], atol=1e-15)


def test_dphi_energy_direction():
    H = model_problem(1e-3)
    f = Params(0.2, 0.4)
    s = seed(f, H, 1, 8)
    r = dphi(f, s, Tangent.zeros(1, 8), 1.0, 0.0, 0.0, H)
    np.testing.assert_allclose(r.F1.coeffs, Field.constant(-1.0, 1, 8).coeffs, atol=1e-15)
    assert max(norm_weighted(x) for x in (r.F2, r.F3, r.F4)) == 0
    assert r.f5 == r.f1 == r.f4 == 0 and not np.any(r.f3)


@pytest.mark.parametrize("H,K", [(model_problem(0.05), 48), (model3(0.05), 20)], ids=["n2", "n3"])
def test_dphi_finite_difference(H, K):
    rng = np.random.default_rng(21)
    d = H.dim
    f = Params(0.7, 0.35)
    s = rstate(rng, d, 4, f.alpha, f.k).resize(K)
    tg = rtangent(rng, d, 4, 0.5).resize(K)
    de, dm, dM = rng.normal(size=3)
    delta = StateDelta(xi(s.coord, tg), de, dm, dM)
    h = 1e-6
    fd = (phi(f, s.apply(delta, h), H) - phi(f, s.apply(delta, -h), H)) * (0.5 / h)
    an = dphi(f, s, tg, de, dm, dM, H)
    for name in ("F1", "F2", "F3", "F4"):
        a, b = getattr(an, name), getattr(fd, name)
        assert norm_weighted(a - b) <= 1e-5 * norm_weighted(b), name
    np.testing.assert_allclose([an.f5, an.f4], [fd.f5, fd.f4], rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(an.f3, fd.f3, rtol=1e-6, atol=1e-9)


def test_flow_defects_vanish_on_seed():
    H = model_problem(0.0)
    f = Params(1.0, 0.6)
    fd = flow_defects(f, seed(f, H, 1, 6), H)
    assert max(fd.values()) < 1e-14
