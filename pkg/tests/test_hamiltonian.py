import numpy as np
import pytest

from helpers import model3, rfield
from torus.hamiltonian import (
    GOLDEN,
    ConfigError,
    CutoffOverflow,
    Embedding,
    HamiltonianSpec,
    Term,
    eval_composed,
    load_spec,
    model_problem,
    modify,
    parse_spec,
)
from torus.trigfield import Field, Freq, evaluate_at, field_mul

MODEL_TOML = """
epsilon = 0.01
omega = [0.6180339887498949]

[[h0]]
coef = 0.6180339887498949
ypow = [1]

[[h0]]
coef = -0.5
ypow = [2]

[[h0]]
coef = 0.5
z2pow = 2

[[h1]]
coef = 1.0
xmode = [1]
z1mode = 1
"""


def order(d, x=(), y=(), z=()):
    o = np.zeros(2 * d + 2, int)
    for j in x:
        o[j] += 1
    for j in y:
        o[d + j] += 1
    for p in z:
        o[2 * d + p] += 1
    return o


def test_trivial_substitution():
    H = model_problem(0.01)
    val = eval_composed(H, order(1), Embedding.trivial(1, 4))
    expect = Field.from_modes(1, 4, {(1,): 0.005})
    np.testing.assert_allclose(val.coeffs, expect.coeffs, atol=1e-15)


def test_y_gradient_on_trivial_embedding():
    H = model_problem(0.0)
    g = eval_composed(H, order(1, y=[0]), Embedding.trivial(1, 4))
    np.testing.assert_allclose(g.coeffs, Field.constant(GOLDEN, 1, 4).coeffs, atol=1e-15)


@pytest.mark.parametrize("H", [model_problem(0.05), model3(0.05)], ids=["n2", "n3"])
def test_composition_matches_pointwise(H):
    d = H.dim
    rng = np.random.default_rng(7)
    K = 4
    emb = Embedding(
        rfield(rng, d, K, (d,), amp=0.05, mean=False),
        rfield(rng, d, K, (d,), amp=0.05),
        rfield(rng, d, K, (2,), amp=0.05),
    )
    xi = rng.uniform(0, 2 * np.pi, (100, d))
    x = xi + evaluate_at(emb.u, xi)
    y, z = evaluate_at(emb.v, xi), evaluate_at(emb.w, xi)
    for o in (order(d), order(d, y=[0]), order(d, x=[0], z=[0]), order(d, z=[1, 1])):
        f = eval_composed(H, o, emb, cutoff=24 if d == 1 else 16)
        np.testing.assert_allclose(evaluate_at(f, xi), H.derivative(o, x, y, z), atol=1e-10)


def test_modify_identities():
    H = model_problem(0.01)
    assert modify(H, 0.0, 0.0) is H
    m, M = 0.3, -0.7
    Hm = modify(H, m, M)
    rng = np.random.default_rng(8)
    x, y, z = rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), rng.normal(size=(5, 2))
    dz1 = order(1, z=[0])
    np.testing.assert_allclose(Hm.derivative(dz1, x, y, z) - H.derivative(dz1, x, y, z), m + M * z[:, 0])
    K = 6
    emb = Embedding(Field.zeros(1, K, (1,)), Field.zeros(1, K, (1,)), rfield(rng, 1, 3, (2,), amp=0.1).resize(K))
    diff = eval_composed(Hm, order(1), emb) - eval_composed(H, order(1), emb)
    w1 = emb.w[0]
    expect = m * w1 + 0.5 * M * field_mul(w1, w1)
    np.testing.assert_allclose(diff.coeffs, expect.coeffs, atol=1e-13)


def test_vector_field_is_hamiltonian():
    H = model3(0.1)
    rng = np.random.default_rng(9)
    X = rng.normal(size=(3, 6))
    v = H.vector_field(X)
    hx, hy, hz = H.gradients(X[:, :2], X[:, 2:4], X[:, 4:])
    np.testing.assert_allclose(v[:, :2], hy)
    np.testing.assert_allclose(v[:, 2:4], -hx)
    np.testing.assert_allclose(v[:, 4], hz[:, 1])
    np.testing.assert_allclose(v[:, 5], -hz[:, 0])


def test_load_spec_roundtrip(tmp_path):
    p = tmp_path / "m.toml"
    p.write_text(MODEL_TOML)
    H, doc = load_spec(p)
    ref = model_problem(0.01)
    X = np.random.default_rng(10).normal(size=(4, 4))
    np.testing.assert_allclose(H.vector_field(X), ref.vector_field(X), atol=1e-15)
    assert doc["epsilon"] == 0.01


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("epsilon = = 1\n")
    with pytest.raises(ConfigError):
        load_spec(bad)
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        parse_spec({"epsilon": 0.0})
    with pytest.raises(ConfigError):  # grad_y H0(0,0) != omega
        HamiltonianSpec((Term(0.5, (1,), 0), Term(0.5, (0,), 2)), (), 0.0, Freq(np.array([GOLDEN]), 0.3, 1.0))
    with pytest.raises(ConfigError):
        parse_spec({"omega": [GOLDEN], "h1": [{"xmode": [1]}]})


def test_cutoff_overflow():
    with pytest.raises(CutoffOverflow):
        eval_composed(model_problem(), order(1), Embedding.trivial(1, 4), cutoff=20, grid=16)
