"""The operator of the modified torus problem and its linearisation.

For parameters ``(alpha, k)`` and a state ``(coord, e, m, M)`` the residual
measures how far the canonical change of variables ``theta(coord)`` is
from putting ``H + m z1 + M z1^2/2`` into the normal form

    e + omega . eta + (Omega zeta . zeta)/2 + ...,   Omega = diag(-k, 1).
"""
from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .canonical import Coeffs, Coord, J2, Tangent, _VecOps, identity_coord, theta
from .hamiltonian import Composer, Embedding, HamiltonianSpec, modify
from .trigfield import Field, dpartial, einsum, gradient, norm_weighted, stack

__all__ = [
    "Params",
    "State",
    "Residual",
    "LinCoeffs",
    "phi",
    "lin_coeffs",
    "dphi",
    "omega_matrix",
    "seed",
    "flow_defects",
]


@dataclass(frozen=True)
class Params:
    alpha: float
    k: float

    def __post_init__(self):
        if not (0.0 <= self.k <= 1.0):
            raise ValueError(f"k = {self.k} outside [0, 1]")


@dataclass
class State(_VecOps):
    coord: Coord
    e: float
    m: float
    M: float

    def apply(self, d: "StateDelta", step: float = 1.0) -> "State":
        c = self.coord.apply(d.dcoord, step)
        c.phi0.coeffs[(c.phi0.cutoff,) * c.dim] = 0.0
        return State(c, self.e + step * d.de, self.m + step * d.dm, self.M + step * d.dM)

    @property
    def cutoff(self) -> int:
        return self.coord.cutoff


@dataclass
class StateDelta:
    dcoord: object  # DeltaCoord
    de: float
    dm: float
    dM: float


@dataclass
class Residual(_VecOps):
    F1: Field
    F2: Field
    F3: Field
    F4: Field
    f5: float
    f1: float
    f3: np.ndarray
    f4: float

    def norm(self, sigma: float = 0.0) -> float:
        """Largest component norm (weighted coefficient sums for fields)."""
        vals = []
        for _, a in self._items():
            if isinstance(a, Field):
                vals.append(norm_weighted(a, sigma))
            else:
                vals.append(float(np.max(np.abs(a), initial=0.0)))
        return max(vals)

    @classmethod
    def zeros(cls, dim: int, cutoff: int) -> "Residual":
        return cls(
            Field.zeros(dim, cutoff),
            Field.zeros(dim, cutoff, (2,)),
            Field.zeros(dim, cutoff, (dim,)),
            Field.zeros(dim, cutoff, (2, 2)),
            0.0,
            0.0,
            np.zeros(dim),
            0.0,
        )


@dataclass
class LinCoeffs:
    """Variable coefficients of the triangular linearisation at a state."""

    S: Field  # (d, d)
    T: Field  # (2, d)
    U: Field  # (2, d, 2, 2): coefficient of d lambda_i / d xi_j
    E: Field  # (d, 2, 2): coefficient of mu_i
    K: Field  # (2, 2, 2): coefficient of lambda_i
    W: Field
    w: Field
    u: Field
    V: Field
    k: float
    alpha: float
    omega: np.ndarray

    @property
    def dim(self) -> int:
        return self.S.dim

    @property
    def cutoff(self) -> int:
        return self.S.cutoff


def omega_matrix(k: float) -> np.ndarray:
    return np.diag([-k, 1.0])


class _Frame:
    """Everything derived from a state that the operator and its derivative share."""

    def __init__(self, f: Params, s: State, H: HamiltonianSpec, cutoff: int | None = None):
        K = s.cutoff if cutoff is None else cutoff
        self.K = K
        self.t: Coeffs = theta(s.coord, K)
        self.Hm = modify(H, s.m, s.M)
        self.comp = Composer(self.Hm, Embedding(self.t.u, self.t.v, self.t.w), K)
        self.omega = H.freq.omega
        self.dim = H.dim

    def block(self, b: str) -> Field:
        return self.comp.block(b)

    @property
    def B(self) -> Field:
        """The (d+2) x 2 stack [Lambda; W]."""
        t = self.t
        return Field(np.concatenate([t.Lambda.coeffs, t.W.resize(t.Lambda.cutoff).coeffs], axis=-2), self.dim)


def phi(f: Params, s: State, H: HamiltonianSpec, cutoff: int | None = None, frame: _Frame | None = None) -> Residual:
    """Residual of the modified problem."""
    fr = _Frame(f, s, H, cutoff) if frame is None else frame
    K, t = fr.K, fr.t
    Hv, Hy, Hz = fr.block(""), fr.block("y"), fr.block("z")
    F1 = Hv - s.e
    F2 = einsum("ip,i->p", t.Lambda, Hy, cutoff=K) + einsum("qp,q->p", t.W, Hz, cutoff=K)
    F3 = einsum("ij,i->j", t.V, Hy, cutoff=K) - fr.omega
    B = fr.B
    hess = fr.block("qq")
    F4 = (
        einsum("i,iab->ab", Hy, t.R, cutoff=K)
        + einsum("ka,kl,lb->ab", B, hess, B, cutoff=K)
        - omega_matrix(f.k)
    )
    c = s.coord
    return Residual(
        F1,
        F2,
        F3,
        F4,
        float(c.w.mean()[0].real - f.alpha),
        float(c.phi0.mean().real),
        c.u.mean().real.copy(),
        float(c.W12.mean().real),
    )


def lin_coeffs(f: Params, s: State, H: HamiltonianSpec, cutoff: int | None = None, frame: _Frame | None = None) -> LinCoeffs:
    """S, T and the Gamma-equation coefficients U, E, K at a state."""
    fr = _Frame(f, s, H, cutoff) if frame is None else frame
    K, t, d = fr.K, fr.t, fr.dim
    V, W = t.V, t.W
    hess = fr.block("qq")  # (d+2, d+2)
    d3 = fr.block("qqq")
    Hyy = fr.block("yy")
    Hzy = fr.block("zy")
    S = einsum("ki,kl,lj->ij", V, Hyy, V, cutoff=K)
    T = einsum("qp,qj,jl->pl", W, Hzy, V, cutoff=K) + einsum("jp,jk,kl->pl", t.Lambda, Hyy, V, cutoff=K)
    B = fr.B
    R = t.R
    hessB = einsum("kl,lb->kb", hess, B, cutoff=K)

    def sym(X: Field) -> Field:
        return X + Field(np.swapaxes(X.coeffs, -1, -2), d)

    # G_i = [V e_i; 0]
    G = Field(np.concatenate([V.coeffs, np.zeros(V.coeffs.shape[:-2] + (2, d), complex)], axis=-2), d)
    hessG = einsum("kl,li->ki", hess, G, cutoff=K)  # (d+2, d)
    E = einsum("li,lab->iab", hessG[:d], R, cutoff=K) + einsum("ka,klm,mi,lb->iab", B, d3, G, B, cutoff=K)
    # K_i: direction lambda = e_i
    JW = stack([W[1], -W[0]])
    gW = gradient(W)  # (2, 2, d)
    dLamK = -einsum("kj,pij,pr->ikr", V, gW, JW, cutoff=K)  # (2, d, 2)
    CK = Field(np.concatenate([dLamK.coeffs, np.zeros(dLamK.coeffs.shape[:-2] + (2, 2), complex)], axis=-2), d)
    Kc = (
        einsum("li,lab->iab", hessB[:d], R, cutoff=K)
        + einsum("ka,klm,mi,lb->iab", B, d3, B, B, cutoff=K)
        + sym(einsum("ika,kb->iab", CK, hessB, cutoff=K))
    )
    # U_ij: direction d lambda_i / d xi_j, delta Lambda = -V[:, j] (x) J[i, :]
    Vpad = Field(np.concatenate([V.coeffs, np.zeros(V.coeffs.shape[:-2] + (2, d), complex)], axis=-2), d)
    hv = einsum("kb,kj->jb", hessB, Vpad, cutoff=K)  # (d, 2): (V[:, j])^T (Hess B)[:d]
    Ufull = -einsum("ia,jb->ijab", Field.constant(J2, d, 0), hv, cutoff=K)
    U = sym(Ufull)
    return LinCoeffs(S, T, U, E, Kc, W, t.w, t.u, V, f.k, f.alpha, fr.omega)


def _sym(X: Field) -> Field:
    return X + X.T


def dphi(
    f: Params,
    s: State,
    tg: Tangent,
    de: float,
    dm: float,
    dM: float,
    H: HamiltonianSpec,
    cutoff: int | None = None,
    res: Residual | None = None,
    lc: LinCoeffs | None = None,
) -> Residual:
    """Directional derivative in the triangular form, including the terms linear in the residual."""
    fr = _Frame(f, s, H, cutoff)
    K, t, d = fr.K, fr.t, fr.dim
    res = phi(f, s, H, frame=fr) if res is None else res
    lc = lin_coeffs(f, s, H, frame=fr) if lc is None else lc
    om = fr.omega
    mu = tg.mu
    lam, chi, Gam = tg.lam, tg.chi, tg.Gamma
    w1 = t.w[0]
    We1 = t.W[0]  # first row of W = W^T e1
    J = Field.constant(J2, d, 0)
    Om = omega_matrix(f.k)

    # Residual-linear corrections
    Pi1 = (
        einsum("j,j->", gradient(res.F1), chi, cutoff=K)
        + einsum("p,p->", res.F2, lam, cutoff=K)
        + einsum("i,i->", res.F3, mu, cutoff=K)
    )
    Jlam = einsum("pq,q->p", J, lam, cutoff=K)
    Pi2 = (
        einsum("pj,j->p", gradient(res.F2), chi, cutoff=K)
        + einsum("qp,q->p", Gam, res.F2, cutoff=K)
        + einsum("pq,q->p", res.F4, lam, cutoff=K)
        + einsum("pj,j->p", gradient(Jlam), res.F3, cutoff=K)
    )
    Pi3 = einsum("ij,j->i", gradient(res.F3), chi, cutoff=K) - einsum("ij,j->i", gradient(chi), res.F3, cutoff=K)
    JG = einsum("pq,qr->pr", J, Gam, cutoff=K)
    F4G = einsum("pq,qr->pr", res.F4, Gam, cutoff=K)
    Pi4 = (
        einsum("abj,j->ab", gradient(res.F4), chi, cutoff=K)
        + einsum("i,abi->ab", res.F3, gradient(JG), cutoff=K)
        + _sym(F4G)
    )

    D1 = dpartial(tg.psi0, om) + (float(om @ tg.dbeta) - de) + w1 * dm + (w1 * w1) * (0.5 * dM) + Pi1
    D2 = (
        dpartial(Jlam, om)
        + einsum("pq,q->p", Field.constant(Om, d, 0), lam, cutoff=K)
        + einsum("pj,j->p", lc.T, mu, cutoff=K)
        + We1 * dm
        + (w1 * We1) * dM
        + Pi2
    )
    D3 = -dpartial(chi, om) + einsum("ij,j->i", lc.S, mu, cutoff=K) + einsum("pi,p->i", lc.T, lam, cutoff=K) + Pi3
    OG = einsum("pq,qr->pr", Field.constant(Om, d, 0), Gam, cutoff=K)
    dMmat = Field.constant(np.diag([dM, 0.0]), d, 0)
    D4 = (
        dpartial(JG, om)
        + _sym(OG)
        + einsum("ijab,ij->ab", lc.U, gradient(lam), cutoff=K)
        + einsum("i,iab->ab", mu, lc.E, cutoff=K)
        + einsum("i,iab->ab", lam, lc.K, cutoff=K)
        + einsum("pa,pq,qb->ab", t.W, dMmat, t.W, cutoff=K)
        + Pi4
    )
    dw1 = einsum("q,q->", We1, lam, cutoff=K) + einsum("j,j->", gradient(w1), chi, cutoff=K)
    A = gradient(t.u) + Field.constant(np.eye(d), d, 0)
    du_mean = einsum("ij,j->i", A, chi, cutoff=K).mean().real
    dW12 = einsum("q,q->", We1, Gam[:, 1], cutoff=K) + einsum("j,j->", gradient(t.W[0, 1]), chi, cutoff=K)
    return Residual(
        D1.resize(K),
        D2.resize(K),
        D3.resize(K),
        D4.resize(K),
        float(dw1.mean().real),
        0.0,
        du_mean.copy(),
        float(dW12.mean().real),
    )


def seed(f: Params, H: HamiltonianSpec, dim: int, cutoff: int) -> State:
    """Closed-form solution of the unperturbed problem.

    With the identity transformation the residual vanishes at epsilon = 0
    exactly when M = -k, m = k alpha and e = H0(0, 0) + k alpha^2 / 2.
    """
    h00 = float(H.integrable().value(np.zeros(dim), np.zeros(dim), np.zeros(2)))
    a, k = f.alpha, f.k
    return State(identity_coord(dim, cutoff, a), h00 + 0.5 * k * a * a, k * a, -k)


def flow_defects(f: Params, s: State, H: HamiltonianSpec, cutoff: int | None = None) -> dict:
    """Invariance of the embedded torus under the modified flow.

    Returns the norms of  omega + d u - H_y,  d v + H_x,  d w - J grad_z H
    along the embedding; all vanish at a solution.
    """
    fr = _Frame(f, s, H, cutoff)
    K, t, d = fr.K, fr.t, fr.dim
    om = fr.omega
    Hx, Hy, Hz = fr.block("x"), fr.block("y"), fr.block("z")
    Jz = stack([Hz[1], -Hz[0]])
    return {
        "x": norm_weighted(dpartial(t.u, om) + om - Hy),
        "y": norm_weighted(dpartial(t.v, om) + Hx),
        "z": norm_weighted(dpartial(t.w, om) - Jz),
    }
