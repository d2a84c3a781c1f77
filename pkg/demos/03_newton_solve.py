"""Newton iteration for a lower-dimensional torus of the model problem.

H = omega y - y^2/2 + z2^2/2 + eps cos(x1 + z1) with omega the golden mean.
The iteration starts from the closed-form solution at eps = 0 and applies
the approximate inverse of the linearised operator at every step.
"""
from torus.hamiltonian import model_problem
from torus.residual import Params
from torus.solver import SolveOptions, solve_modified

H = model_problem(1e-3)
sol = solve_modified(Params(alpha=0.0, k=0.1), H, SolveOptions(cutoff=16))
for i, r in enumerate(sol.residual_history):
    print(f"step {i}: |Phi| = {r:.3e}")
print("r_(n+1) / r_n^2:", [f"{q:.2f}" for q in sol.quadratic_ratios()])
print(f"counterterms m = {sol.m:.6e}, M = {sol.M:.6e}; energy e = {sol.e:.6e}")
print("GMRES iterations per step:", sol.krylov_iterations)
