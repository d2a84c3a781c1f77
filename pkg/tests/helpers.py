"""Random test data shared by the test modules."""
from __future__ import annotations

import numpy as np

from torus.canonical import Coord, Tangent, identity_coord
from torus.hamiltonian import GOLDEN, HamiltonianSpec, Term
from torus.residual import State
from torus.trigfield import Field, Freq, mode_grid

OMEGA3 = np.array([1.0, GOLDEN])


def rfield(rng, dim: int, K: int, shape=(), amp: float = 1.0, decay: float = 0.7, mean: bool = True) -> Field:
    """Real random trigonometric polynomial with geometrically decaying modes."""
    s1 = np.abs(mode_grid(dim, K)).sum(axis=-1)
    w = np.exp(-decay * s1).reshape(s1.shape + (1,) * len(shape))
    size = (2 * K + 1,) * dim + tuple(shape)
    c = amp * w * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    f = Field(c, dim).realify()
    if not mean:
        f.coeffs[(K,) * dim] = 0.0
    return f


def rcoord(rng, dim: int, K: int, amp: float = 0.05, alpha: float = 0.3, decay: float = 0.7) -> Coord:
    c = identity_coord(dim, K, alpha)
    return Coord(
        amp * rng.standard_normal(dim),
        rfield(rng, dim, K, amp=amp, decay=decay, mean=False),
        rfield(rng, dim, K, (dim,), amp=amp, decay=decay, mean=False),
        c.w + rfield(rng, dim, K, (2,), amp=amp, decay=decay),
        c.W11 + rfield(rng, dim, K, amp=amp, decay=decay),
        rfield(rng, dim, K, amp=amp, decay=decay),
        rfield(rng, dim, K, amp=amp, decay=decay),
    )


def rtangent(rng, dim: int, K: int, amp: float = 1.0) -> Tangent:
    return Tangent(
        amp * rng.standard_normal(dim),
        rfield(rng, dim, K, amp=amp, mean=False),
        rfield(rng, dim, K, (dim,), amp=amp),
        rfield(rng, dim, K, (2,), amp=amp),
        traceless(rfield(rng, dim, K, (2, 2), amp=amp)),
    )


def traceless(G: Field) -> Field:
    c = G.coeffs.copy()
    c[..., 1, 1] = -c[..., 0, 0]
    return Field(c, G.dim)


def rstate(rng, dim: int, K: int, alpha: float, k: float, amp: float = 0.02) -> State:
    return State(rcoord(rng, dim, K, amp, alpha), 0.5 + amp * rng.standard_normal(),
                 k * alpha + amp * rng.standard_normal(), -k + amp * rng.standard_normal())


def model3(epsilon: float = 1e-3) -> HamiltonianSpec:
    """Three degrees of freedom: a two-torus with frequencies (1, golden)."""
    h0 = (
        Term(1.0, (1, 0), 0),
        Term(GOLDEN, (0, 1), 0),
        Term(-0.5, (2, 0), 0),
        Term(-0.5, (0, 2), 0),
        Term(0.5, (0, 0), 2),
    )
    h1 = (Term(1.0, (0, 0), 0, (1, 0), 1, "cos"), Term(0.5, (0, 0), 0, (0, 1), 0, "sin"))
    return HamiltonianSpec(h0, h1, epsilon, Freq(OMEGA3, gamma=0.2, tau=1.0))
