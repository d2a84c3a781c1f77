"""Parameter derivatives of the torus family, the action and the bifurcation equations.

The family of modified tori (alpha, k) -> u(alpha, k) is differentiated by
solving linear systems at a converged solution: the Jacobi fields.  They give
the quadratic form L, the derivatives of M, and closed-form expressions for
the derivatives of the action, whose minimiser over (alpha, k) solves
m = M = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .canonical import J2, Tangent, theta
from .cohomology import LinSolution, solve_extended, solve_jacobi
from .hamiltonian import Composer, Embedding, HamiltonianSpec
from .residual import LinCoeffs, Params, Residual, lin_coeffs, omega_matrix
from .solver import ModifiedSolution, NoConvergence, SolveOptions, solve_modified
from .trigfield import Field, dpartial, einsum, gradient, mean_product, norm_weighted

log = logging.getLogger(__name__)

__all__ = [
    "JacobiSet",
    "QForm",
    "ActionSample",
    "BifurcationReport",
    "jacobi",
    "qform",
    "action",
    "dw1",
    "varsigma1",
    "action_identities",
    "sample_action",
    "minimize_action",
]


@dataclass
class JacobiSet:
    mu1: Field
    lambda1: Field
    chi1: Field
    p1: float
    mu2: Field
    lambda2: Field
    chi2: Field
    p2: float
    dM_dalpha: float
    dM_dk: float
    d_alpha: Tangent  # tangent of the alpha-derivative of the family
    d_k: Tangent
    p_alpha: float
    normalization: tuple  # (system 1, system 2) values of mean((W lambda)_1 + chi . grad w1)


@dataclass
class QForm:
    L11: float
    L12: float
    L22: float
    L21: float

    @property
    def asymmetry(self) -> float:
        return abs(self.L12 - self.L21)


def _volume(d: int) -> float:
    return (2 * np.pi) ** d


def _dw1(lc: LinCoeffs, lam: Field, chi: Field) -> Field:
    """First component of the w-variation generated by (lambda, chi)."""
    K = lc.cutoff
    return einsum("q,q->", lc.W[0], lam, cutoff=K) + einsum("j,j->", gradient(lc.w[0]), chi, cutoff=K)


def jacobi(f: Params, sol: ModifiedSolution, H: HamiltonianSpec, lc: LinCoeffs | None = None, **kw) -> JacobiSet:
    """Jacobi fields at a converged solution.

    System 1 is the response to a unit shift of mean(w1) at fixed M; system 2
    is the response to a unit change of M (the M terms of the first two
    equations moved to the right-hand side).  The alpha- and k-derivatives of
    the family come from the extended system, which also returns dM.
    """
    s = sol.state
    lc = lin_coeffs(f, s, H) if lc is None else lc
    d, K, freq = lc.dim, lc.cutoff, H.freq
    Z = Residual.zeros(d, K)
    r1 = Residual.zeros(d, K)
    r1.f5 = 1.0
    s1 = solve_jacobi(lc, r1, freq, dM=0.0, **kw)
    s2 = solve_jacobi(lc, Z, freq, dM=1.0, **kw)
    sa = solve_extended(lc, r1, freq, **kw)
    rk = Residual.zeros(d, K)
    rk.F4 = Field.constant(-np.diag([1.0, 0.0]), d, K)  # d Phi4 / dk = diag(1, 0)
    sk = solve_extended(lc, rk, freq, **kw)
    norm1 = float(_dw1(lc, s1.tangent.lam, s1.tangent.chi).mean().real)
    norm2 = float(_dw1(lc, s2.tangent.lam, s2.tangent.chi).mean().real)
    return JacobiSet(
        s1.mu, s1.tangent.lam, s1.tangent.chi, s1.sec.p,
        s2.mu, s2.tangent.lam, s2.tangent.chi, s2.sec.p,
        sa.dM, sk.dM, sa.tangent, sk.tangent, sa.sec.p, (norm1, norm2),
    )


def _lform(lc: LinCoeffs, k: float, mu_i: Field, lam_i: Field, mu_j: Field, lam_j: Field) -> float:
    K, d = lc.cutoff, lc.dim
    Smu = einsum("ab,b->a", lc.S, mu_i, cutoff=K)
    Jl = einsum("pq,q->p", Field.constant(J2, d, 0), lam_i, cutoff=K)
    osc = dpartial(Jl, lc.omega) + einsum("pq,q->p", Field.constant(omega_matrix(k), d, 0), lam_i, cutoff=K)
    val = mean_product(Smu, mu_j).sum() - mean_product(osc, lam_j).sum()
    return float(_volume(d) * val)


def qform(js: JacobiSet, lc: LinCoeffs, k: float) -> QForm:
    """L_ij = integral of S mu_i . mu_j - (J d lambda_i + Omega lambda_i) . lambda_j (exact, by Parseval)."""
    a = (js.mu1, js.lambda1)
    b = (js.mu2, js.lambda2)
    return QForm(
        _lform(lc, k, *a, *a),
        _lform(lc, k, *a, *b),
        _lform(lc, k, *b, *b),
        _lform(lc, k, *b, *a),
    )


def action(f: Params, sol: ModifiedSolution, H: HamiltonianSpec) -> float:
    """Integral over the torus of (omega + d u) . v + w2 d w1 - H(xi + u, v, w), with the unmodified H."""
    s = sol.state
    K = s.cutoff
    t = theta(s.coord, K)
    om = H.freq.omega
    d = H.dim
    Hval = Composer(H, Embedding(t.u, t.v, t.w), K).block("")
    kin = float(om @ t.v.mean().real) + mean_product(dpartial(t.u, om), t.v).sum()
    sympl = mean_product(t.w[1], dpartial(t.w[0], om))
    return float(_volume(d) * (kin + sympl - Hval.mean().real))


def dw1(lc: LinCoeffs, tg: Tangent) -> Field:
    """Parameter derivative of w1 along the family, from its tangent."""
    return _dw1(lc, tg.lam, tg.chi)


def varsigma1(lc: LinCoeffs, js: JacobiSet) -> float:
    """Integral of w1* times the alpha-derivative of w1*."""
    w1s = lc.w[0] - lc.w[0].mean()
    dw = dw1(lc, js.d_alpha)
    dws = dw - dw.mean()
    return float(_volume(lc.dim) * mean_product(w1s, dws))


def action_identities(f: Params, sol: ModifiedSolution, lc: LinCoeffs, js: JacobiSet, L: QForm) -> dict:
    """Derivatives of the action predicted from m, M, the Jacobi fields and L."""
    d = lc.dim
    m, M = sol.state.m, sol.state.M
    vs1 = varsigma1(lc, js)
    w1 = lc.w[0]
    direct_a = _volume(d) * mean_product(w1 * M + m, dw1(lc, js.d_alpha))
    direct_k = _volume(d) * mean_product(w1 * M + m, dw1(lc, js.d_k))
    return {
        "dpsi_dalpha": _volume(d) * (m + f.alpha * M) + vs1 * M,
        "dpsi_dk": M * js.dM_dk * L.L22,
        "dpsi_dalpha_direct": float(direct_a),
        "dpsi_dk_direct": float(direct_k),
        "varsigma1": vs1,
    }


@dataclass
class ActionSample:
    alpha: float
    k: float
    psi: float
    m: float
    M: float
    L11: float = math.nan
    L12: float = math.nan
    L22: float = math.nan
    dpsi_dalpha: float = math.nan
    dpsi_dk: float = math.nan
    fd_dalpha: float = math.nan
    fd_dk: float = math.nan
    varsigma1: float = math.nan
    dM_dalpha: float = math.nan
    dM_dk: float = math.nan
    residual: float = math.nan
    converged: bool = False
    flagged: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def sample_action(
    f: Params,
    H: HamiltonianSpec,
    opts: SolveOptions = SolveOptions(),
    sol: ModifiedSolution | None = None,
    fd_step: float | None = None,
    fd_tol: float = 1e-6,
) -> ActionSample:
    """Action, counterterms, quadratic form and derivative identities at one parameter point.

    With ``fd_step`` the identities are compared with central differences of
    the action (one-sided at the ends of the k-interval) and the sample is
    flagged when they disagree by more than ``max(fd_tol, 10 * FD error)``,
    the FD error being estimated from the step-halving difference.
    """
    sol = solve_modified(f, H, opts) if sol is None else sol
    lc = lin_coeffs(f, sol.state, H)
    js = jacobi(f, sol, H, lc)
    L = qform(js, lc, f.k)
    ids = action_identities(f, sol, lc, js, L)
    psi = action(f, sol, H)
    out = ActionSample(
        f.alpha, f.k, psi, sol.state.m, sol.state.M, L.L11, L.L12, L.L22,
        ids["dpsi_dalpha"], ids["dpsi_dk"], varsigma1=ids["varsigma1"],
        dM_dalpha=js.dM_dalpha, dM_dk=js.dM_dk, residual=sol.residual, converged=sol.converged,
    )
    if fd_step:
        fa, ea = _fd(lambda a: action(Params(a, f.k), solve_modified(Params(a, f.k), H, opts), H), f.alpha, fd_step, None)
        fk, ek = _fd(lambda k: action(Params(f.alpha, k), solve_modified(Params(f.alpha, k), H, opts), H), f.k, fd_step, (0.0, 1.0))
        out.fd_dalpha, out.fd_dk = fa, fk
        out.flagged = abs(fa - out.dpsi_dalpha) > max(fd_tol, 10 * ea) or abs(fk - out.dpsi_dk) > max(fd_tol, 10 * ek)
    return out


def _fd(fn, x: float, h: float, bounds) -> tuple[float, float]:
    """Derivative by differences and an error estimate from step halving."""

    def diff(hh):
        lo, hi = x - hh, x + hh
        if bounds is not None and lo < bounds[0]:
            return (-3 * fn(x) + 4 * fn(x + hh) - fn(x + 2 * hh)) / (2 * hh)
        if bounds is not None and hi > bounds[1]:
            return (3 * fn(x) - 4 * fn(x - hh) + fn(x - 2 * hh)) / (2 * hh)
        return (fn(hi) - fn(lo)) / (2 * hh)

    d1, d2 = diff(h), diff(h / 2)
    return d2, abs(d1 - d2)


# --- bifurcation equations -------------------------------------------------


@dataclass
class BifurcationReport:
    alpha0: float
    k0: float
    psi0: float
    m: float
    M: float
    grid_alpha: float
    grid_k: float
    case: str  # "interior" or "boundary"
    degenerate: bool
    flat: bool
    refined: bool
    polished: bool
    psi_range: float
    w1_star_norm: float
    dpsi_dalpha: float
    dpsi_dk: float
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def minimize_action(
    table: list,
    H: HamiltonianSpec,
    opts: SolveOptions = SolveOptions(),
    refine: bool = True,
    polish: bool = True,
    boundary_tol: float = 1e-8,
    flat_tol: float = 1e-12,
) -> BifurcationReport:
    """Locate a minimiser of the action over (alpha, k) and solve m = M = 0 there.

    ``table`` is a list of :class:`ActionSample`.  The best converged grid
    point is refined by bounded Nelder-Mead on the action.  Because the action
    is quadratic in (m, M) near its minimiser, its value only determines the
    minimiser to about the square root of the rounding level; the optional
    polish step therefore solves m = M = 0 by bounded least squares started
    from the refined point.
    """
    good = [s for s in table if s.converged and math.isfinite(s.psi)]
    if not good:
        raise ValueError("no converged samples in the action table")
    psis = np.array([s.psi for s in good])
    best = good[int(np.argmin(psis))]
    prange = float(psis.max() - psis.min())
    flat = prange <= flat_tol * max(1.0, float(np.abs(psis).max()))
    notes = []
    a0, k0 = best.alpha, best.k
    refined = polished = False

    cache: dict = {}

    def solve_at(a, k):
        key = (float(a), float(k))
        if key not in cache:
            cache[key] = solve_modified(Params(float(a), float(k)), H, opts)
        return cache[key]

    def psi_at(x):
        a, k = float(x[0]), float(np.clip(x[1], 0.0, 1.0))
        try:
            return action(Params(a, k), solve_at(a, k), H)
        except (NoConvergence, ArithmeticError, ValueError):
            return np.inf

    if refine and not flat:
        res = minimize(
            psi_at,
            x0=np.array([a0, k0]),
            method="Nelder-Mead",
            bounds=[(a0 - np.pi, a0 + np.pi), (0.0, 1.0)],
            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 400},
        )
        if np.isfinite(res.fun) and res.fun <= best.psi:
            a0, k0 = float(res.x[0]), float(np.clip(res.x[1], 0.0, 1.0))
            refined = True
        notes.append(f"nelder-mead: {res.nit} iterations, {res.message}")
    elif flat:
        notes.append("flat action landscape: every grid point is a minimiser")

    if polish:

        def mM(x):
            sol = solve_at(x[0], x[1])
            return np.array([sol.state.m, sol.state.M])

        r0 = mM([a0, k0])
        if np.max(np.abs(r0)) > opts.tol_residual:
            res = least_squares(
                mM, x0=np.array([a0, k0]), bounds=([-np.inf, 0.0], [np.inf, 1.0]),
                xtol=1e-15, ftol=1e-15, gtol=1e-15, diff_step=1e-6, max_nfev=50,
            )
            if np.max(np.abs(res.fun)) < np.max(np.abs(r0)):
                a0, k0 = float(res.x[0]), float(res.x[1])
                polished = True
            notes.append(f"polish: |(m, M)| {np.max(np.abs(r0)):.2e} -> {np.max(np.abs(res.fun)):.2e}")

    a0 = float(np.mod(a0, 2 * np.pi))
    if k0 < boundary_tol:
        k0 = 0.0
    sol = solve_at(a0, k0)
    lc = lin_coeffs(Params(a0, k0), sol.state, H)
    w1s = lc.w[0] - lc.w[0].mean()
    w1n = norm_weighted(w1s)
    degenerate = w1n <= 10 * opts.tol_residual
    if degenerate:
        notes.append("w1* vanishes on the minimising fiber: the counterterm M is not controlled by the action")
    js = jacobi(Params(a0, k0), sol, H, lc)
    L = qform(js, lc, k0)
    ids = action_identities(Params(a0, k0), sol, lc, js, L)
    return BifurcationReport(
        a0, k0, action(Params(a0, k0), sol, H), sol.state.m, sol.state.M, float(best.alpha), float(best.k),
        "boundary" if k0 == 0.0 else "interior", bool(degenerate), bool(flat), refined, polished,
        prange, w1n, ids["dpsi_dalpha"], ids["dpsi_dk"], notes,
    )
