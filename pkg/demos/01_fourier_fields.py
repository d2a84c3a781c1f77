"""Trigonometric polynomials on the torus.

Fields are stored as centred Fourier coefficient blocks.  Products are
computed on an oversampled grid and are exact up to the retained cutoff;
the small-divisor equation  omega . grad psi = g  is solved mode by mode.
"""
import numpy as np

from torus.hamiltonian import model_problem
from torus.cohomology import solve_dpartial
from torus.trigfield import Field, dpartial, evaluate_at, field_mul, norm_weighted

freq = model_problem().freq
K = 8

cos = Field.from_modes(1, K, {(1,): 0.5})
square = field_mul(cos, cos)
print("cos^2 has mean", square.mean().real, "and second harmonic", square.coeffs[K + 2].real)

rng = np.random.default_rng(0)
c = rng.normal(size=2 * K + 1) * np.exp(-0.5 * np.abs(np.arange(-K, K + 1)))
g = Field(c + 0j, 1).realify()
g.coeffs[K] = 0.0  # solvability: zero mean
psi = solve_dpartial(g, freq)
print("residual of omega . grad psi = g:", norm_weighted(dpartial(psi, freq) - g))
print("worst divisor |omega.s| up to K:", freq.worst_divisor(K))

xi = np.linspace(0, 2 * np.pi, 5)[:, None]
print("psi at a few points:", np.round(evaluate_at(psi, xi), 6))
