"""Lower-dimensional elliptic invariant tori of nearly integrable Hamiltonians.

Quasi-Newton solver for the modified invariance problem in symplectic
coordinates, Jacobi fields and the action functional whose critical points
select the parameters (alpha, k) of a true invariant torus.
"""
from .canonical import ChartSingular, Coord, identity_coord, theta
from .cohomology import NoContraction, ZeroMeanViolation, approx_inverse, solve_dpartial, solve_gamma, solve_oscillator
from .hamiltonian import ConfigError, CutoffOverflow, HamiltonianSpec, load_spec, model_problem, modify, parse_spec
from .residual import Params, State, phi, dphi, lin_coeffs
from .solver import ModifiedSolution, NoConvergence, SolveOptions, TrustRegionExceeded, solve_modified, sweep
from .trigfield import DivisorUnderflow, Field, Freq
from .variational import action, jacobi, minimize_action, qform, sample_action

__version__ = "0.1.0"
