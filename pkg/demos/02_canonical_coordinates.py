"""Coordinates of a symplectic change of variables and its tangent space.

A Coord holds the free functions (beta, phi0, u, w, W11, W12, W21); theta
builds the full coefficient set, whose canonical identities are checked to
rounding level.  xi maps tangent variables to coordinate increments and
xi_inv inverts it.
"""
import numpy as np

from torus.canonical import Coord, Tangent, check_symplectic, identity_coord, theta, xi, xi_inv
from torus.trigfield import Field

K, band = 48, 6
rng = np.random.default_rng(1)


def small(shape=(), mean=True):
    s = np.arange(-band, band + 1)
    w = (0.05 * np.exp(-np.abs(s))).reshape((-1,) + (1,) * len(shape))
    f = Field(w * (rng.normal(size=(2 * band + 1,) + shape) + 1j * rng.normal(size=(2 * band + 1,) + shape)), 1)
    f = f.realify()
    if not mean:
        f.coeffs[band] = 0.0
    return f.resize(K)


base = identity_coord(1, K, alpha=0.4)
c = Coord(np.array([0.02]), small(mean=False), small((1,), mean=False), base.w + small((2,)),
          base.W11 + small(), small(), small())

defects = check_symplectic(theta(c))
for name, val in defects.items():
    print(f"{name:>7s} defect {val:.2e}")

tg = Tangent(np.array([0.3]), small(mean=False), small((1,)), small((2,)), Tangent.zeros(1, K).Gamma)
back = xi_inv(c, xi(c, tg))
print("xi_inv(xi(t)) - t:", f"{(back - tg).max_abs():.2e}")
