"""Newton iteration for the modified torus problem and parameter sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .canonical import ChartSingular, Coord
from .cohomology import NoContraction, approx_inverse, divisor_report
from .hamiltonian import HamiltonianSpec
from .residual import Params, State, phi, seed as _seed

log = logging.getLogger(__name__)

__all__ = [
    "SolveOptions",
    "ModifiedSolution",
    "NoConvergence",
    "TrustRegionExceeded",
    "seed",
    "solve_modified",
    "shift_period",
    "SweepCell",
    "sweep",
]


class NoConvergence(RuntimeError):
    def __init__(self, msg: str, solution: "ModifiedSolution | None" = None):
        super().__init__(msg)
        self.solution = solution


class TrustRegionExceeded(ValueError):
    """|epsilon| beyond the configured bound of the perturbative solver."""


@dataclass(frozen=True)
class SolveOptions:
    cutoff: int = 24
    tol_residual: float = 1e-11
    max_newton: int = 12
    divisor_floor: float | None = None
    doubling: bool = False
    max_cutoff: int = 128
    eps_max: float = 0.05
    krylov_tol: float = 1e-12
    krylov_maxiter: int = 50

    def __post_init__(self):
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.cutoff < 4:
            raise ValueError("cutoff must be at least 4")


@dataclass
class ModifiedSolution:
    params: Params
    state: State
    residual_history: list
    worst_divisor: float
    converged: bool
    krylov_iterations: list = field(default_factory=list)
    cutoff_history: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    @property
    def m(self) -> float:
        return self.state.m

    @property
    def M(self) -> float:
        return self.state.M

    @property
    def e(self) -> float:
        return self.state.e

    def quadratic_ratios(self) -> list:
        """r_{n+1} / r_n^2 along the Newton history (bounded under quadratic convergence)."""
        h = self.residual_history
        return [h[i + 1] / h[i] ** 2 for i in range(len(h) - 1) if h[i] > 0]


def seed(f: Params, H: HamiltonianSpec, cutoff: int = 24) -> State:
    """The exact solution at epsilon = 0, used as the Newton starting point."""
    return _seed(f, H, H.dim, cutoff)


def _resize_state(s: State, K: int) -> State:
    return State(s.coord.resize(K), s.e, s.m, s.M)


def solve_modified(
    f: Params,
    H: HamiltonianSpec,
    opts: SolveOptions = SolveOptions(),
    start: State | None = None,
    raise_on_fail: bool = True,
) -> ModifiedSolution:
    """Newton's method  u <- u + R(u)[-Phi(u)]  from the epsilon = 0 solution."""
    if abs(H.epsilon) > opts.eps_max:
        raise TrustRegionExceeded(f"|epsilon| = {abs(H.epsilon)} exceeds eps_max = {opts.eps_max}")
    K = opts.cutoff
    s = seed(f, H, K) if start is None else _resize_state(start, K)
    hist, kry, cut = [], [], []
    converged = False
    for it in range(opts.max_newton + 1):
        r = phi(f, s, H)
        nr = r.norm()
        hist.append(nr)
        cut.append(K)
        log.info("alpha=%.4f k=%.4f step %d residual %.3e (K=%d)", f.alpha, f.k, it, nr, K)
        if not math.isfinite(nr):
            break
        if nr <= opts.tol_residual:
            converged = True
            break
        if it == opts.max_newton:
            break
        if opts.doubling and it > 0 and nr > 0.25 * hist[-2] and 2 * K <= opts.max_cutoff:
            K *= 2
            s = _resize_state(s, K)
            r = phi(f, s, H)
        ds, lin = approx_inverse(
            f, s, -r, H, divisor_floor=opts.divisor_floor, tol=opts.krylov_tol, max_iter=opts.krylov_maxiter
        )
        kry.append(lin.info.iterations)
        s = s.apply(ds)
    worst = divisor_report(K, H.freq, f.k)["dpartial"]
    sol = ModifiedSolution(f, s, hist, worst, converged, kry, cut)
    if not converged and raise_on_fail:
        raise NoConvergence(
            f"Newton did not reach {opts.tol_residual:.1e} in {opts.max_newton} steps "
            f"(last residual {hist[-1]:.3e}) at alpha={f.alpha}, k={f.k}",
            sol,
        )
    return sol


def shift_period(s: State, turns: int = 1) -> State:
    """Express a solution at alpha + 2 pi turns as the equivalent solution at alpha.

    The shift w1 -> w1 - 2 pi turns leaves H invariant (it is 2 pi periodic
    in z1) and is absorbed by m -> m + 2 pi turns M and a shift of e.
    """
    a = 2 * np.pi * turns
    c = s.coord
    w = c.w.copy()
    w.coeffs[(w.cutoff,) * w.dim + (0,)] -= a
    coord = Coord(c.beta.copy(), c.phi0.copy(), c.u.copy(), w, c.W11.copy(), c.W12.copy(), c.W21.copy())
    return State(coord, s.e - (a * s.m + 0.5 * a * a * s.M), s.m + a * s.M, s.M)


@dataclass
class SweepCell:
    alpha: float
    k: float
    solution: ModifiedSolution | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.solution is not None and self.solution.converged


def _solve_cell(args) -> SweepCell:
    a, k, H, opts = args
    try:
        return SweepCell(a, k, solve_modified(Params(a, k), H, opts))
    except NoConvergence as exc:
        return SweepCell(a, k, exc.solution, f"no-convergence: {exc}")
    except (NoContraction, ChartSingular, ArithmeticError, ValueError) as exc:
        return SweepCell(a, k, None, f"{type(exc).__name__}: {exc}")


def sweep(alphas, ks, H: HamiltonianSpec, opts: SolveOptions = SolveOptions(), workers: int = 1) -> list:
    """Solve on the grid alphas x ks (alpha-major order); failures are recorded per cell."""
    alphas = np.atleast_1d(np.asarray(alphas, float))
    ks = np.atleast_1d(np.asarray(ks, float))
    if alphas.size == 0 or ks.size == 0:
        raise ValueError("empty parameter grid")
    jobs = [(float(a), float(k), H, opts) for a in alphas for k in ks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_solve_cell, jobs))
    return [_solve_cell(j) for j in jobs]
