import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import rfield
from torus.hamiltonian import GOLDEN
from torus.trigfield import (
    Field,
    Freq,
    dpartial,
    einsum,
    evaluate_at,
    field_mul,
    gradient,
    mean_product,
    norm_sobolev,
    norm_weighted,
    split_mean,
    stack,
)

FREQ1 = Freq(np.array([GOLDEN]), 0.5 * GOLDEN, 1.0)


def cos1(K=4, dim=1):
    s = (1,) + (0,) * (dim - 1)
    return Field.from_modes(dim, K, {s: 0.5})


def test_identity_element():
    f = rfield(np.random.default_rng(1), 1, 6)
    one = Field.constant(1.0, 1, 0)
    np.testing.assert_allclose(field_mul(one, f).coeffs, f.coeffs, atol=1e-15)


def test_product_to_sum():
    p = field_mul(cos1(), cos1())
    expect = Field.constant(0.5, 1, 4) + Field.from_modes(1, 4, {(2,): 0.25})
    np.testing.assert_allclose(p.coeffs, expect.coeffs, atol=1e-15)


@pytest.mark.parametrize("dim", [1, 2])
def test_product_matches_grid(dim):
    rng = np.random.default_rng(dim)
    a, b = rfield(rng, dim, 8), rfield(rng, dim, 8)
    p = field_mul(a, b, cutoff=16)
    n = 64
    np.testing.assert_allclose(p.to_grid(n), a.to_grid(n) * b.to_grid(n), atol=1e-12)


def test_product_is_exact_at_truncation():
    # the truncated product must equal the truncation of the exact product
    rng = np.random.default_rng(3)
    a, b = rfield(rng, 1, 6), rfield(rng, 1, 6)
    full = field_mul(a, b, cutoff=12)
    np.testing.assert_allclose(field_mul(a, b).coeffs, full.resize(6).coeffs, atol=1e-14)


def test_dpartial_constant_and_single_mode():
    assert np.all(dpartial(Field.constant(3.0, 1, 4), FREQ1).coeffs == 0)
    d = dpartial(cos1(), FREQ1)
    sin1 = Field.from_modes(1, 4, {(1,): -0.5j})
    np.testing.assert_allclose(d.coeffs, (-GOLDEN * sin1).coeffs, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.sampled_from([1, 2]))
def test_dpartial_mean_zero(seed, dim):
    f = rfield(np.random.default_rng(seed), dim, 5)
    assert dpartial(f, np.full(dim, GOLDEN)).mean() == 0


def test_split_mean():
    f = Field.constant(3.0, 1, 3) + cos1(3)
    m, star, imag = split_mean(f)
    assert m == 3.0 and imag == 0.0
    np.testing.assert_allclose(star.coeffs, cos1(3).coeffs)
    sin1 = Field.from_modes(1, 3, {(1,): -0.5j})
    assert split_mean(sin1)[0] == 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_split_mean_star_zero(seed):
    _, star, _ = split_mean(rfield(np.random.default_rng(seed), 2, 4))
    assert star.mean() == 0


def test_norms_examples():
    assert norm_weighted(Field.zeros(1, 3)) == 0
    assert norm_weighted(cos1()) == pytest.approx(1.0)
    assert norm_sobolev(Field.constant(1.0, 2, 3), 2.5) == pytest.approx(1.0)
    assert norm_sobolev(cos1(), 0.0) == pytest.approx(np.sqrt(0.5))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s1=st.floats(0, 2), s2=st.floats(0, 2), d=st.integers(0, 3))
def test_norm_monotone_in_sigma(seed, s1, s2, d):
    f = rfield(np.random.default_rng(seed), 2, 4)
    lo, hi = sorted([s1, s2])
    assert norm_weighted(f, lo, d) <= norm_weighted(f, hi, d) * (1 + 1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0, 3), r=st.floats(0, 3))
def test_interpolation_inequality(seed, s, r):
    f = rfield(np.random.default_rng(seed), 1, 8)
    lhs = norm_sobolev(f, 0.5 * (s + r))
    assert lhs <= np.sqrt(norm_sobolev(f, s) * norm_sobolev(f, r)) * (1 + 1e-12)


def test_evaluate_at_matches_grid():
    rng = np.random.default_rng(4)
    f = rfield(rng, 2, 5, (2,))
    n = 16
    g = f.to_grid(n)
    x = 2 * np.pi * np.arange(n) / n
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
    np.testing.assert_allclose(evaluate_at(f, pts), g, atol=1e-13)


def test_gradient_and_mean_product():
    rng = np.random.default_rng(5)
    a, b = rfield(rng, 2, 6), rfield(rng, 2, 6)
    g = gradient(a)
    assert g.shape == (2,)
    np.testing.assert_allclose(g.mean(), 0)
    direct = field_mul(a, b, cutoff=0).mean().real
    np.testing.assert_allclose(mean_product(a, b), direct, atol=1e-14)


def test_einsum_matrix_vector():
    rng = np.random.default_rng(6)
    A = rfield(rng, 1, 4, (2, 2))
    v = rfield(rng, 1, 4, (2,))
    Av = einsum("ij,j->i", A, v, cutoff=8)
    manual = stack([field_mul(A[0, 0], v[0], 8) + field_mul(A[0, 1], v[1], 8),
                    field_mul(A[1, 0], v[0], 8) + field_mul(A[1, 1], v[1], 8)])
    np.testing.assert_allclose(Av.coeffs, manual.coeffs, atol=1e-14)


def test_field_validation():
    with pytest.raises(ValueError):
        Field(np.zeros((4,)), 1)
    with pytest.raises(ValueError):
        Freq(np.array([1.0, 1.0]), 0.1, 1.0)
