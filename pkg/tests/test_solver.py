import numpy as np
import pytest

from torus.hamiltonian import model_problem
from torus.residual import Params, phi
from torus.solver import (
    NoConvergence,
    SolveOptions,
    TrustRegionExceeded,
    seed,
    shift_period,
    solve_modified,
    sweep,
)

OPTS = SolveOptions(cutoff=16)


def test_unperturbed_returns_seed():
    H = model_problem(0.0)
    f = Params(1.3, 0.4)
    sol = solve_modified(f, H, OPTS)
    assert sol.converged and len(sol.residual_history) == 1
    s0 = seed(f, H, 16)
    assert (sol.state.e, sol.state.m, sol.state.M) == (s0.e, s0.m, s0.M)


def test_model_problem_converges_quadratically():
    H = model_problem(1e-3)
    sol = solve_modified(Params(0.0, 0.1), H, OPTS)
    assert sol.converged
    assert len(sol.residual_history) - 1 <= 6
    assert sol.residual < 1e-11
    h = sol.residual_history
    ratios = [h[i + 1] / h[i] ** 2 for i in range(len(h) - 1) if h[i] < 1e-3]
    assert ratios and max(ratios) < 1e3
    assert sol.worst_divisor > 0


def test_periodicity_shift():
    H = model_problem(1e-3)
    a, k = 0.8, 0.3
    s1 = solve_modified(Params(a, k), H, OPTS).state
    s2 = solve_modified(Params(a + 2 * np.pi, k), H, OPTS).state
    back = shift_period(s2, 1)
    assert abs(back.m - s1.m) < 1e-9 and abs(back.M - s1.M) < 1e-9 and abs(back.e - s1.e) < 1e-9
    assert (back.coord - s1.coord).max_abs() < 1e-9
    # the shifted state solves the problem at the original label
    assert phi(Params(a, k), back, H).norm() < 1e-9


def test_trust_region():
    with pytest.raises(TrustRegionExceeded):
        solve_modified(Params(0.0, 0.0), model_problem(0.2), OPTS)


def test_no_convergence_carries_solution():
    H = model_problem(1e-2)
    with pytest.raises(NoConvergence) as info:
        solve_modified(Params(0.0, 0.5), H, SolveOptions(cutoff=16, max_newton=1))
    assert info.value.solution is not None and not info.value.solution.converged
    sol = solve_modified(Params(0.0, 0.5), H, SolveOptions(cutoff=16, max_newton=1), raise_on_fail=False)
    assert not sol.converged


def test_cutoff_doubling():
    H = model_problem(0.04)
    sol = solve_modified(Params(0.4, 0.5), H, SolveOptions(cutoff=4, doubling=True, max_cutoff=64, tol_residual=1e-13))
    assert sol.converged and max(sol.cutoff_history) > 4


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(tol_residual=0.0)
    with pytest.raises(ValueError):
        SolveOptions(cutoff=2)


def test_sweep_single_cell_and_seed_grid():
    H0 = model_problem(0.0)
    cells = sweep([0.5], [0.25], H0, OPTS)
    assert len(cells) == 1 and cells[0].ok
    alphas, ks = np.linspace(0, 6, 4), [0.0, 0.5, 1.0]
    for c in sweep(alphas, ks, H0, OPTS):
        assert c.solution.m == pytest.approx(c.k * c.alpha)
        assert c.solution.M == pytest.approx(-c.k)
    with pytest.raises(ValueError):
        sweep([], [0.0], H0, OPTS)


def test_sweep_continuity_and_order_independence():
    H = model_problem(1e-3)
    alphas = np.linspace(0.0, 0.02, 3)
    cells = sweep(alphas, [0.5], H, OPTS)
    assert [c.alpha for c in cells] == list(alphas)
    d01 = (cells[1].solution.state.coord - cells[0].solution.state.coord).max_abs()
    assert d01 < 10 * (alphas[1] - alphas[0])
    par = sweep(alphas, [0.5], H, OPTS, workers=2)
    for a, b in zip(cells, par):
        assert a.solution.m == b.solution.m and a.solution.residual_history == b.solution.residual_history


def test_sweep_records_failures():
    H = model_problem(1e-3)
    cells = sweep([0.0], [0.5], H, SolveOptions(cutoff=16, max_newton=0))
    assert not cells[0].ok and "no-convergence" in cells[0].error
