"""Linear solvers for the torus problem.

The three constant-coefficient model equations are solved mode by mode.
The variable-coefficient systems (truncated, Jacobi and extended forms) are
solved by GMRES right-preconditioned with the constant-coefficient
triangular solve, which plays the role of the contraction closure: the
preconditioned operator is a small perturbation of the identity near the
trivial solution and the Krylov residual contracts geometrically.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .canonical import J2, Tangent, xi
from .residual import LinCoeffs, Params, Residual, State, StateDelta, lin_coeffs, omega_matrix
from .trigfield import DivisorUnderflow, Field, Freq, dpartial, einsum, gradient, mode_grid, norm_weighted, stack

log = logging.getLogger(__name__)

__all__ = [
    "ZeroMeanViolation",
    "NoContraction",
    "SecPair",
    "LinSolution",
    "secular_pair",
    "secular_inverse",
    "solve_dpartial",
    "solve_oscillator",
    "solve_gamma",
    "divisor_report",
    "LinearProblem",
    "solve_truncated",
    "solve_jacobi",
    "solve_extended",
    "approx_inverse",
]

MEAN_TOL = 1e-10
KRYLOV_TOL = 1e-12
KRYLOV_MAXITER = 50


class ZeroMeanViolation(ValueError):
    """Right-hand side of a mean-free equation has a nonzero average."""


class NoContraction(RuntimeError):
    """The preconditioned Krylov closure did not reach its tolerance."""


def _floor(freq: Freq, divisor_floor: float | None) -> float:
    return 1e-8 * freq.gamma if divisor_floor is None else divisor_floor


def _check_mean(g: Field, tol: float) -> None:
    m = np.max(np.abs(g.mean()), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(g.coeffs), initial=0.0)))
    if m > tol * scale:
        raise ZeroMeanViolation(f"mean {m:.3e} of a right-hand side that must average to zero")


def _divisors(f: Field, freq: Freq) -> tuple[np.ndarray, tuple]:
    """omega.s on the mode grid of ``f`` and the index of the zero mode."""
    ws = mode_grid(f.dim, f.cutoff) @ freq.omega
    return ws, (f.cutoff,) * f.dim


def _guard(den: np.ndarray, centre: tuple, floor: float, what: str) -> float:
    d = np.abs(den).copy()
    d[centre] = np.inf
    worst = float(d.min()) if d.size > 1 else np.inf
    if worst < floor:
        raise DivisorUnderflow(f"{what} divisor {worst:.3e} below floor {floor:.3e}")
    return worst


def _bcast(arr: np.ndarray, f: Field) -> np.ndarray:
    return arr.reshape(arr.shape + (1,) * len(f.shape))


def solve_dpartial(g: Field, freq: Freq, divisor_floor: float | None = None, tol: float = MEAN_TOL) -> Field:
    """Zero-mean solution of  omega . grad psi = g."""
    _check_mean(g, tol)
    ws, c = _divisors(g, freq)
    _guard(ws, c, _floor(freq, divisor_floor), "small")
    den = 1j * ws
    den[c] = 1.0
    out = g.coeffs / _bcast(den, g)
    out[c] = 0.0
    return Field(out, g.dim)


def solve_oscillator(h: Field, k: float, freq: Freq, divisor_floor: float | None = None, tol: float = MEAN_TOL) -> Field:
    """Zero-mean solution of  J d lambda + Omega lambda = h,  Omega = diag(-k, 1)."""
    _check_mean(h, tol)
    ws, c = _divisors(h, freq)
    den = k + ws**2
    _guard(den, c, _floor(freq, divisor_floor) ** 2, "oscillator")
    den[c] = 1.0
    h1, h2 = h.coeffs[..., 0], h.coeffs[..., 1]
    l1 = -(h1 - 1j * ws * h2) / den
    l2 = h2 + 1j * ws * l1
    out = np.stack([l1, l2], -1)
    out[c] = 0.0
    return Field(out, h.dim)


def solve_gamma(
    G: Field, f4: float, k: float, freq: Freq, divisor_floor: float | None = None
) -> tuple[Field, complex]:
    """Traceless Gamma and dM with

        d(J Gamma) + Omega Gamma + (Omega Gamma)^T + diag(dM, 0) = G,
        mean(Gamma_12) = f4.

    G is read through its (1,1), (1,2), (2,2) entries.
    """
    ws, c = _divisors(G, freq)
    floor = _floor(freq, divisor_floor)
    _guard(ws, c, floor, "small")
    _guard(ws**2 + 4 * k, c, floor**2, "gamma")
    g11, g12, g22 = G.coeffs[..., 0, 0], G.coeffs[..., 0, 1], G.coeffs[..., 1, 1]
    iws = 1j * ws
    iws_safe = np.where(ws == 0, 1.0, iws)
    den = ws**2 + 4 * k
    den[c] = 1.0
    G12 = 2.0 / den * ((g11 - k * g22) / iws_safe + 0.5 * iws * g22 - g12)
    G22 = 0.5 * g22 + 0.5 * iws * G12
    G21 = g12 + k * G12 - iws * G22
    # mean part
    m11, m12, m22 = g11[c], g12[c], g22[c]
    G12[c] = f4
    G22[c] = 0.5 * m22
    G21[c] = k * f4 + m12
    dM = m11 - k * m22
    Gam = np.stack([np.stack([-G22, G12], -1), np.stack([G21, G22], -1)], -2)
    return Field(Gam, G.dim), dM


def divisor_report(cutoff: int, freq: Freq, k: float) -> dict:
    """Worst divisors over the retained nonzero modes for the three model equations."""
    ws = mode_grid(freq.dim, cutoff) @ freq.omega
    ws = np.delete(ws.ravel(), ws.size // 2)
    if ws.size == 0:
        return {"dpartial": np.inf, "oscillator": np.inf, "gamma": np.inf}
    return {
        "dpartial": float(np.abs(ws).min()),
        "oscillator": float((k + ws**2).min()),
        "gamma": float((ws**2 + 4 * k).min()),
    }


# --- secular variables ----------------------------------------------------


@dataclass
class SecPair:
    q: float
    p: float


def secular_pair(dbeta, de: float, dm: float, dM: float, alpha: float, omega) -> SecPair:
    """Collect the secular terms: q = omega.dbeta - de + alpha dm + alpha^2 dM / 2, p = dm + alpha dM."""
    q = float(np.dot(omega, dbeta)) - de + alpha * dm + 0.5 * alpha**2 * dM
    return SecPair(q, dm + alpha * dM)


def secular_inverse(sp: SecPair, dM: float, dbeta, alpha: float, omega) -> tuple[float, float]:
    """Recover (de, dm) from the secular pair."""
    dm = sp.p - alpha * dM
    de = float(np.dot(omega, dbeta)) + alpha * dm + 0.5 * alpha**2 * dM - sp.q
    return de, dm


# --- variable-coefficient systems -------------------------------------------


class _Layout:
    """Flat complex vector <-> named fields and scalars."""

    def __init__(self, dim: int, K: int, fields: list, scalars: list):
        self.dim, self.K = dim, K
        self.fields, self.scalars = fields, scalars
        n = (2 * K + 1) ** dim
        self.slices = {}
        pos = 0
        for name, shape in fields:
            size = n * int(np.prod(shape, dtype=int))
            self.slices[name] = (pos, size, shape, True)
            pos += size
        for name, size in scalars:
            self.slices[name] = (pos, size, (size,), False)
            pos += size
        self.size = pos

    def pack(self, parts: dict) -> np.ndarray:
        out = np.zeros(self.size, complex)
        for name, (pos, size, shape, is_field) in self.slices.items():
            v = parts[name]
            if is_field:
                v = v.resize(self.K).coeffs
            out[pos : pos + size] = np.ravel(v)
        return out

    def unpack(self, vec: np.ndarray) -> dict:
        out = {}
        side = (2 * self.K + 1,) * self.dim
        for name, (pos, size, shape, is_field) in self.slices.items():
            v = vec[pos : pos + size]
            out[name] = Field(v.reshape(side + tuple(shape)), self.dim) if is_field else v.copy()
        return out


def _gamma_full(g3: Field) -> Field:
    """(G11, G12, G21) -> traceless 2x2 field."""
    return stack([stack([g3[0], g3[1]]), stack([g3[2], -g3[0]])])


def _sym3(X: Field) -> Field:
    return stack([X[0, 0], X[0, 1], X[1, 1]])


@dataclass
class KrylovInfo:
    iterations: int
    residual: float
    contraction: float
    history: list = dc_field(default_factory=list)


@dataclass
class LinSolution:
    tangent: Tangent
    sec: SecPair
    dM: float
    de: float
    dm: float
    info: KrylovInfo

    @property
    def mu(self) -> Field:
        return self.tangent.mu


class LinearProblem:
    """The approximate linear system at a state, in one of three forms.

    ``truncated``  d psi0 + q = F1, J d lam + Omega lam + T mu + p e1 = F2,
                   -d chi + S mu + T^T lam = F3, plain means of psi0, chi, lam_1.
    ``jacobi``     adds the secular terms p w~, p W^T e1 and the exact
                   orthogonality functionals; dM is a fixed parameter.
    ``extended``   adds the Gamma equation with dM as unknown.
    """

    FORMS = ("truncated", "jacobi", "extended")

    def __init__(
        self,
        lc: LinCoeffs,
        freq: Freq,
        form: str = "extended",
        divisor_floor: float | None = None,
        tol: float = KRYLOV_TOL,
        max_iter: int = KRYLOV_MAXITER,
    ):
        if form not in self.FORMS:
            raise ValueError(f"unknown form {form!r}")
        self.lc, self.freq, self.form = lc, freq, form
        self.floor = divisor_floor
        self.tol, self.max_iter = tol, max_iter
        d, K = lc.dim, lc.cutoff
        self.d, self.K = d, K
        self.k, self.alpha = lc.k, lc.alpha
        ext = form == "extended"
        self.unknowns = _Layout(
            d, K,
            [("psi0", ()), ("chi", (d,)), ("lam", (2,))] + ([("G", (3,))] if ext else []),
            [("dbeta", d), ("q", 1), ("p", 1)] + ([("dM", 1)] if ext else []),
        )
        self.equations = _Layout(
            d, K,
            [("E1", ()), ("E2", (2,)), ("E3", (d,))] + ([("E4", (3,))] if ext else []),
            [("o1", 1), ("f5", 1), ("o3", d)] + ([("o4", 1)] if ext else []),
        )
        self.wt = lc.w[0] - self.alpha
        self.We1 = lc.W[0]
        self.J = Field.constant(J2, d, 0)
        self.Om = Field.constant(omega_matrix(self.k), d, 0)
        self.du = gradient(lc.u)
        self.A = self.du + Field.constant(np.eye(d), d, 0)
        self.gw1 = gradient(lc.w[0])
        self.gW12 = gradient(lc.W[0, 1])
        self._mean_matrix = self._build_mean_matrix()

    # -- operator -----------------------------------------------------------
    def apply_parts(self, x: dict, dM: complex = 0.0) -> dict:
        lc, K, om = self.lc, self.K, self.freq.omega
        psi0, chi, lam = x["psi0"], x["chi"], x["lam"]
        dbeta, q, p = x["dbeta"], x["q"][0], x["p"][0]
        if self.form == "extended":
            dM = x["dM"][0]
        mu = gradient(psi0) + dbeta
        Jlam = einsum("pq,q->p", self.J, lam, cutoff=K)
        E3 = -dpartial(chi, om) + einsum("ij,j->i", lc.S, mu, cutoff=K) + einsum("pi,p->i", lc.T, lam, cutoff=K)
        base2 = dpartial(Jlam, om) + einsum("pq,q->p", self.Om, lam, cutoff=K) + einsum("pj,j->p", lc.T, mu, cutoff=K)
        out = {"E3": E3, "o1": np.array([psi0.mean()])}
        if self.form == "truncated":
            out["E1"] = dpartial(psi0, om) + q
            out["E2"] = base2 + Field.constant(np.array([p, 0.0]), self.d, 0)
            out["f5"] = np.array([lam.mean()[0]])
            out["o3"] = chi.mean().copy()
            return out
        wt = self.wt
        out["E1"] = dpartial(psi0, om) + q + wt * p + (wt * wt).resize(K) * (0.5 * dM)
        out["E2"] = base2 + self.We1 * p + (wt * self.We1).resize(K) * dM
        out["f5"] = np.array(
            [einsum("q,q->", self.We1, lam, cutoff=K).mean() + einsum("j,j->", self.gw1, chi, cutoff=K).mean()]
        )
        out["o3"] = einsum("ij,j->i", self.A, chi, cutoff=K).mean().copy()
        if self.form == "extended":
            Gam = _gamma_full(x["G"])
            JG = einsum("pq,qr->pr", self.J, Gam, cutoff=K)
            OG = einsum("pq,qr->pr", self.Om, Gam, cutoff=K)
            E4 = (
                dpartial(JG, om)
                + OG
                + OG.T
                + einsum("ijab,ij->ab", lc.U, gradient(lam), cutoff=K)
                + einsum("i,iab->ab", mu, lc.E, cutoff=K)
                + einsum("i,iab->ab", lam, lc.K, cutoff=K)
                + einsum("a,b->ab", self.We1, self.We1, cutoff=K) * dM
            )
            out["E4"] = _sym3(E4)
            out["o4"] = np.array(
                [
                    einsum("q,q->", self.We1, Gam[:, 1], cutoff=K).mean()
                    + einsum("j,j->", self.gW12, chi, cutoff=K).mean()
                ]
            )
        return out

    def apply(self, vec: np.ndarray, dM: complex = 0.0) -> np.ndarray:
        return self.equations.pack(self.apply_parts(self.unknowns.unpack(vec), dM))

    # -- constant-coefficient preconditioner ---------------------------------
    def _build_mean_matrix(self) -> np.ndarray:
        """Mean block in (dbeta, lam_bar, p): rows E2 mean, E3 mean, f5."""
        d = self.d
        Tb, Sb = self.lc.T.mean(), self.lc.S.mean()
        if self.form == "truncated":
            we, r5 = np.array([1.0, 0.0]), np.array([1.0, 0.0])
        else:
            we = self.We1.mean()
            r5 = self.We1.mean()
        M = np.zeros((d + 3, d + 3), complex)
        M[:2, :d] = Tb
        M[:2, d : d + 2] = omega_matrix(self.k)
        M[:2, d + 2] = we
        M[2 : 2 + d, :d] = Sb
        M[2 : 2 + d, d : d + 2] = Tb.T
        M[2 + d, d : d + 2] = r5
        return M

    def precondition_parts(self, r: dict) -> dict:
        lc, K, d, om = self.lc, self.K, self.d, self.freq.omega
        fl = self.floor
        E1 = r["E1"]
        q = E1.mean()
        E1s = E1.copy()
        E1s.coeffs[(K,) * d] = 0.0
        psi0 = solve_dpartial(E1s, self.freq, fl)
        psi0.coeffs[(K,) * d] = r["o1"][0]
        gpsi = gradient(psi0)
        a = r["E2"].mean() - einsum("pj,j->p", lc.T, gpsi, cutoff=K).mean()
        b = r["E3"].mean() - einsum("ij,j->i", lc.S, gpsi, cutoff=K).mean()
        sol = np.linalg.solve(self._mean_matrix, np.concatenate([a, b, r["f5"]]))
        dbeta, lbar, p = sol[:d], sol[d : d + 2], sol[d + 2]
        mu = gpsi + dbeta
        we = Field.constant(np.array([1.0, 0.0]), d, 0) if self.form == "truncated" else self.We1
        h = r["E2"] - einsum("pj,j->p", lc.T, mu, cutoff=K) - we * p
        h.coeffs[(K,) * d] = 0.0
        lam = solve_oscillator(h, self.k, self.freq, fl)
        lam.coeffs[(K,) * d] = lbar
        g = einsum("ij,j->i", lc.S, mu, cutoff=K) + einsum("pi,p->i", lc.T, lam, cutoff=K) - r["E3"]
        g.coeffs[(K,) * d] = 0.0
        chi = solve_dpartial(g, self.freq, fl)
        if self.form == "truncated":
            chi.coeffs[(K,) * d] = r["o3"]
        else:
            chi.coeffs[(K,) * d] = r["o3"] - einsum("ij,j->i", self.du, chi, cutoff=K).mean()
        out = {"psi0": psi0, "chi": chi, "lam": lam, "dbeta": dbeta, "q": np.array([q]), "p": np.array([p])}
        if self.form == "extended":
            G4 = r["E4"]
            Gfull = stack([stack([G4[0], G4[1]]), stack([G4[1], G4[2]])])
            forcing = (
                einsum("ijab,ij->ab", lc.U, gradient(lam), cutoff=K)
                + einsum("i,iab->ab", mu, lc.E, cutoff=K)
                + einsum("i,iab->ab", lam, lc.K, cutoff=K)
            )
            f4 = r["o4"][0] - einsum("j,j->", self.gW12, chi, cutoff=K).mean()
            Gam, dMv = solve_gamma(Gfull - forcing, f4, self.k, self.freq, fl)
            out["G"] = stack([Gam[0, 0], Gam[0, 1], Gam[1, 0]])
            out["dM"] = np.array([dMv])
        return out

    def precondition(self, vec: np.ndarray) -> np.ndarray:
        return self.unknowns.pack(self.precondition_parts(self.equations.unpack(vec)))

    # -- closure -------------------------------------------------------------
    def solve_vec(self, rhs: np.ndarray, dM: complex = 0.0) -> tuple[np.ndarray, KrylovInfo]:
        """Solve ``apply(x, dM) = rhs``; for the fixed-dM forms the dM terms move to the right."""
        n = self.unknowns.size
        if dM != 0.0:
            rhs = rhs - self.apply(np.zeros(n, complex), dM)
        bnorm = float(np.linalg.norm(rhs))
        if bnorm == 0.0:
            return np.zeros(n, complex), KrylovInfo(0, 0.0, 0.0)
        op = LinearOperator((n, n), matvec=lambda y: self.apply(self.precondition(y)), dtype=complex)
        hist: list = []
        y, status = gmres(
            op,
            rhs,
            rtol=self.tol,
            atol=0.0,
            restart=self.max_iter,
            maxiter=1,
            callback=lambda r: hist.append(float(r)),
            callback_type="pr_norm",
        )
        x = self.precondition(y)
        res = float(np.linalg.norm(self.apply(x) - rhs)) / bnorm
        its = len(hist)
        rate = float(res ** (1.0 / max(its, 1))) if res > 0 else 0.0
        info = KrylovInfo(its, res, rate, hist)
        if status != 0 and res > 10 * self.tol:
            raise NoContraction(
                f"{self.form} closure stalled at relative residual {res:.2e} after {its} iterations"
            )
        log.debug("%s closure: %d iterations, residual %.2e, rate %.3f", self.form, its, res, rate)
        return x, info

    def rhs_vec(self, F: Residual) -> np.ndarray:
        parts = {
            "E1": F.F1,
            "E2": F.F2,
            "E3": F.F3,
            "o1": np.array([F.f1]),
            "f5": np.array([F.f5]),
            "o3": np.asarray(F.f3, complex),
        }
        if self.form == "extended":
            parts["E4"] = _sym3(F.F4)
            parts["o4"] = np.array([F.f4])
        return self.equations.pack(parts)

    def solve(self, F: Residual, dM: float = 0.0) -> LinSolution:
        x, info = self.solve_vec(self.rhs_vec(F), dM)
        u = self.unknowns.unpack(x)
        d, K = self.d, self.K
        Gam = _gamma_full(u["G"]).realify() if "G" in u else Field.zeros(d, K, (2, 2))
        tg = Tangent(u["dbeta"].real.copy(), u["psi0"].realify(), u["chi"].realify(), u["lam"].realify(), Gam)
        dMv = float(u["dM"][0].real) if "dM" in u else float(dM)
        sec = SecPair(float(u["q"][0].real), float(u["p"][0].real))
        de, dm = secular_inverse(sec, dMv, tg.dbeta, self.alpha, self.freq.omega)
        return LinSolution(tg, sec, dMv, de, dm, info)


def _residual_like(F1=None, F2=None, F3=None, f1=0.0, f3=None, f5=0.0, dim=1, K=0) -> Residual:
    return Residual(
        Field.zeros(dim, K) if F1 is None else F1,
        Field.zeros(dim, K, (2,)) if F2 is None else F2,
        Field.zeros(dim, K, (dim,)) if F3 is None else F3,
        Field.zeros(dim, K, (2, 2)),
        float(f5),
        float(f1),
        np.zeros(dim) if f3 is None else np.asarray(f3, float),
        0.0,
    )


def solve_truncated(lc: LinCoeffs, F: tuple, fbar: tuple, k: float, freq: Freq, **kw) -> LinSolution:
    """psi0, lambda, chi, dbeta, q, p of the truncated system; ``fbar = (f1, f3, f5)``."""
    if abs(k - lc.k) > 1e-15:
        raise ValueError("k differs from the k used to assemble the coefficients")
    F1, F2, F3 = F
    f1, f3, f5 = fbar
    R = _residual_like(F1, F2, F3, f1, f3, f5, lc.dim, lc.cutoff)
    return LinearProblem(lc, freq, "truncated", **kw).solve(R)


def solve_jacobi(lc: LinCoeffs, F: Residual, freq: Freq, dM: float = 0.0, **kw) -> LinSolution:
    """The system without the Gamma equation at a fixed value of dM."""
    return LinearProblem(lc, freq, "jacobi", **kw).solve(F, dM)


def solve_extended(lc: LinCoeffs, F: Residual, freq: Freq, **kw) -> LinSolution:
    """The full approximate system, with (de, dm, dM) recovered from the secular pair."""
    return LinearProblem(lc, freq, "extended", **kw).solve(F)


def approx_inverse(
    f: Params, s: State, F: Residual, H, lc: LinCoeffs | None = None, **kw
) -> tuple[StateDelta, LinSolution]:
    """Approximate right inverse of the linearised operator at ``s`` applied to ``F``."""
    lc = lin_coeffs(f, s, H) if lc is None else lc
    sol = solve_extended(lc, F, H.freq, **kw)
    dc = xi(s.coord, sol.tangent)
    return StateDelta(dc, sol.de, sol.dm, sol.dM), sol
