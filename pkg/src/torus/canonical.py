"""Chart of the canonical transformations adapted to a torus.

A :class:`Coord` holds the free functions ``(beta, phi0, u, w, W11, W12, W21)``.
:func:`theta` builds the full coefficient set ``(u, v, w, V, Lambda, W, R)``
of the symplectic change of variables they describe, and :func:`xi` /
:func:`xi_inv` translate between coordinate increments and the normalised
tangent variables ``(dbeta, psi0, chi, lambda, Gamma)``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields, replace
from typing import Iterator

import numpy as np

from .trigfield import Field, einsum, gradient, norm_weighted, pointwise, stack, divergence_free_potential

__all__ = [
    "ChartSingular",
    "Coord",
    "Coeffs",
    "Tangent",
    "DeltaCoord",
    "theta",
    "dtheta",
    "check_symplectic",
    "xi",
    "xi_inv",
    "identity_coord",
    "J2",
]

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
SINGULAR_TOL = 1e-10


class ChartSingular(ArithmeticError):
    """W11 or det(I + u') vanishes somewhere on the grid."""


class _VecOps:
    """Elementwise linear algebra over dataclasses of arrays and Fields."""

    def _items(self) -> Iterator[tuple[str, object]]:
        for f in dc_fields(self):
            yield f.name, getattr(self, f.name)

    def _combine(self, other, op):
        out = {}
        for name, a in self._items():
            b = getattr(other, name)
            out[name] = op(a, b)
        return type(self)(**out)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, c: float):
        return type(self)(**{n: a * c for n, a in self._items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def resize(self, cutoff: int):
        return type(self)(**{n: a.resize(cutoff) if isinstance(a, (Field, _VecOps)) else a for n, a in self._items()})

    def max_abs(self) -> float:
        vals = [np.max(np.abs(a.coeffs)) if isinstance(a, Field) else np.max(np.abs(a), initial=0.0) for _, a in self._items()]
        return float(max(vals))


@dataclass
class Coord(_VecOps):
    beta: np.ndarray
    phi0: Field
    u: Field
    w: Field
    W11: Field
    W12: Field
    W21: Field

    @property
    def dim(self) -> int:
        return self.phi0.dim

    @property
    def cutoff(self) -> int:
        return max(f.cutoff for _, f in self._items() if isinstance(f, Field))

    def apply(self, d: "DeltaCoord", step: float = 1.0) -> "Coord":
        return Coord(
            self.beta + step * d.dbeta,
            self.phi0 + d.dphi0 * step,
            self.u + d.du * step,
            self.w + d.dw * step,
            self.W11 + d.dW11 * step,
            self.W12 + d.dW12 * step,
            self.W21 + d.dW21 * step,
        )


@dataclass
class DeltaCoord(_VecOps):
    dbeta: np.ndarray
    dphi0: Field
    du: Field
    dw: Field
    dW11: Field
    dW12: Field
    dW21: Field


@dataclass
class Tangent(_VecOps):
    dbeta: np.ndarray
    psi0: Field
    chi: Field
    lam: Field
    Gamma: Field

    @classmethod
    def zeros(cls, dim: int, cutoff: int) -> "Tangent":
        return cls(
            np.zeros(dim),
            Field.zeros(dim, cutoff),
            Field.zeros(dim, cutoff, (dim,)),
            Field.zeros(dim, cutoff, (2,)),
            Field.zeros(dim, cutoff, (2, 2)),
        )

    @property
    def mu(self) -> Field:
        return gradient(self.psi0) + self.dbeta


@dataclass
class Coeffs:
    u: Field
    v: Field
    w: Field
    V: Field
    Lambda: Field
    W: Field
    R: Field  # shape (d, 2, 2): R[i] is the symmetric matrix R_i


def identity_coord(dim: int, cutoff: int, alpha: float = 0.0) -> Coord:
    """The coordinates of the identity transformation with mean(w1) = alpha."""
    z = Field.zeros(dim, cutoff)
    return Coord(
        np.zeros(dim),
        z,
        Field.zeros(dim, cutoff, (dim,)),
        Field.constant(np.array([alpha, 0.0]), dim, cutoff),
        Field.constant(1.0, dim, cutoff),
        z.copy(),
        z.copy(),
    )


def _eye_field(dim: int, size: int) -> Field:
    return Field.constant(np.eye(size), dim, 0)


def _vanishes(a: np.ndarray) -> bool:
    # a sign change between grid points of a real function also means a zero
    return bool(np.min(np.abs(a)) < SINGULAR_TOL or (np.min(a) < 0.0 < np.max(a)))


def _inv_t(A: Field, cutoff: int) -> Field:
    def inv_t(a):
        det = np.linalg.det(a)
        if _vanishes(det):
            raise ChartSingular("det(I + u') vanishes on the grid")
        return np.swapaxes(np.linalg.inv(a), -1, -2)

    return pointwise(inv_t, [A], cutoff, nonlinear=True)


def _w22(W11: Field, W12: Field, W21: Field, cutoff: int) -> Field:
    def f(a, b, c):
        if _vanishes(a):
            raise ChartSingular("W11 vanishes on the grid")
        return (1.0 + b * c) / a

    return pointwise(f, [W11, W12, W21], cutoff, nonlinear=True)


def _jw(W: Field) -> Field:
    """J W with J = [[0, 1], [-1, 0]] (a linear recombination of rows)."""
    return stack([W[1], -W[0]], axis=0)


def theta(c: Coord, cutoff: int | None = None) -> Coeffs:
    """Coefficients of the canonical transformation described by ``c``."""
    K = c.cutoff if cutoff is None else cutoff
    d = c.dim
    du = gradient(c.u)
    A = du + _eye_field(d, d)
    V = _inv_t(A, K)
    gw = gradient(c.w)  # (2, d): d w_p / d xi_j
    rhs = gradient(c.phi0) - c.w[1] * gw[0]
    v = einsum("ij,j->i", V, rhs, cutoff=K) + c.beta
    W22 = _w22(c.W11, c.W12, c.W21, K)
    W = stack([stack([c.W11, c.W12]), stack([c.W21, W22])])
    JW = _jw(W)
    Lam = -einsum("ik,pk,pr->ir", V, gw, JW, cutoff=K)
    dW = gradient(W)  # (2, 2, d)
    R = -einsum("ik,bak,br->iar", V, dW, JW, cutoff=K)
    return Coeffs(c.u.resize(K), v, c.w.resize(K), V, Lam, W, R)


def _divide(num: Field, den: Field, K: int) -> Field:
    # linear in num; keep the complex part so Krylov vectors pass through intact
    inv = pointwise(lambda a: 1.0 / a, [den], K, nonlinear=True)
    return (num * inv).resize(K)


def dtheta(c: Coord, dc: DeltaCoord, t: Coeffs | None = None, cutoff: int | None = None) -> Coeffs:
    """Derivative of :func:`theta` at ``c`` in the direction ``dc``."""
    K = c.cutoff if cutoff is None else cutoff
    t = theta(c, K) if t is None else t
    d = c.dim
    V = t.V
    ddu = gradient(dc.du)
    dV = -einsum("ik,jk,jl->il", V, ddu, V, cutoff=K)  # -V (du')^T V
    gw = gradient(c.w)
    dgw = gradient(dc.dw)
    rhs = gradient(c.phi0) - c.w[1] * gw[0]
    drhs = gradient(dc.dphi0) - c.w[1] * dgw[0] - dc.dw[1] * gw[0]
    dv = einsum("ij,j->i", dV, rhs, cutoff=K) + einsum("ij,j->i", V, drhs, cutoff=K) + dc.dbeta
    W = t.W
    dW22 = _divide(c.W12 * dc.dW21 + c.W21 * dc.dW12 - W[1, 1] * dc.dW11, c.W11, K)
    dW = stack([stack([dc.dW11, dc.dW12]), stack([dc.dW21, dW22])]).resize(K)
    JW, JdW = _jw(W), _jw(dW)
    dLam = -(
        einsum("ik,pk,pr->ir", dV, gw, JW, cutoff=K)
        + einsum("ik,pk,pr->ir", V, dgw, JW, cutoff=K)
        + einsum("ik,pk,pr->ir", V, gw, JdW, cutoff=K)
    )
    gW, gdW = gradient(W), gradient(dW)
    dR = -(
        einsum("ik,bak,br->iar", dV, gW, JW, cutoff=K)
        + einsum("ik,bak,br->iar", V, gdW, JW, cutoff=K)
        + einsum("ik,bak,br->iar", V, gW, JdW, cutoff=K)
    )
    return Coeffs(dc.du.resize(K), dv, dc.dw.resize(K), dV, dLam, dW, dR)


def check_symplectic(t: Coeffs) -> dict:
    """Defects of the identities characterising canonical coefficient sets."""
    d = t.u.dim
    K = t.V.cutoff
    A = gradient(t.u) + _eye_field(d, d)
    gw = gradient(t.w)
    JW = _jw(t.W)
    WtJW = einsum("pa,pr->ar", t.W, JW, cutoff=K)
    detW = t.W[0, 0] * t.W[1, 1] - t.W[0, 1] * t.W[1, 0]
    rep = {
        "V": norm_weighted(einsum("ik,jk->ij", t.V, A, cutoff=K) - _eye_field(d, d)),
        "W": norm_weighted(WtJW - Field.constant(J2, d, 0)),
        "det": norm_weighted(detW - 1.0),
        "Lambda": norm_weighted(t.Lambda + einsum("ik,pk,pr->ir", t.V, gw, JW, cutoff=K)),
        "R_sym": norm_weighted(t.R - Field(np.swapaxes(t.R.coeffs, -1, -2), d)),
    }
    # closedness of dx_k ^ dv_k + dw_1 ^ dw_2 pulled back to the torus
    gv = gradient(t.v)
    AtV = einsum("ki,kj->ij", A, gv, cutoff=K)
    ww = einsum("pi,pq,qj->ij", gw, Field.constant(J2, d, 0), gw, cutoff=K)
    C = AtV - AtV.T + ww
    rep["closed"] = norm_weighted(C)
    return rep


def xi(c: Coord, tg: Tangent, t: Coeffs | None = None) -> DeltaCoord:
    """Coordinate increment generated by the tangent variables ``tg``."""
    K = c.cutoff
    t = theta(c, K) if t is None else t
    d = c.dim
    A = gradient(c.u) + _eye_field(d, d)
    chi = tg.chi
    du = einsum("ij,j->i", A, chi, cutoff=K)
    gw = gradient(c.w)
    dw = einsum("pq,q->p", t.W, tg.lam, cutoff=K) + einsum("pj,j->p", gw, chi, cutoff=K)
    dW = einsum("ab,bc->ac", t.W, tg.Gamma, cutoff=K) + einsum("abk,k->ab", gradient(t.W), chi, cutoff=K)
    gphi = gradient(c.phi0) - c.w[1] * gw[0]
    dphi0 = (
        tg.psi0
        + (c.w[1] * dw[0]).resize(K)
        + einsum("j,j->", gphi, chi, cutoff=K)
        - einsum("j,j->", c.u, Field.constant(tg.dbeta, d, 0), cutoff=K)
    )
    dphi0 = _drop_mean(dphi0)
    return DeltaCoord(np.asarray(tg.dbeta, float).copy(), dphi0, du, dw, dW[0, 0], dW[0, 1], dW[1, 0])


def _drop_mean(f: Field) -> Field:
    g = f.copy()
    g.coeffs[(g.cutoff,) * g.dim] = 0.0
    return g


def _w_inverse(W: Field) -> Field:
    # det W = 1, so the inverse is the adjugate
    return stack([stack([W[1, 1], -W[0, 1]]), stack([-W[1, 0], W[0, 0]])])


def xi_inv(c: Coord, dc: DeltaCoord, t: Coeffs | None = None) -> Tangent:
    """Tangent variables of a coordinate increment (inverse of :func:`xi`)."""
    K = c.cutoff
    t = theta(c, K) if t is None else t
    d = c.dim
    chi = einsum("ji,j->i", t.V, dc.du, cutoff=K)
    gw = gradient(c.w)
    Winv = _w_inverse(t.W)
    lam = einsum("pq,q->p", Winv, dc.dw - einsum("pj,j->p", gw, chi, cutoff=K), cutoff=K)
    dt = dtheta(c, dc, t, K)
    dWfull = dt.W - einsum("abk,k->ab", gradient(t.W), chi, cutoff=K)
    Gamma = einsum("ab,bc->ac", Winv, dWfull, cutoff=K)
    At = gradient(c.u) + _eye_field(d, d)  # V^{-1} = (I + u')^T
    rest = dt.v - einsum("ij,j->i", gradient(t.v), chi, cutoff=K) - einsum("ip,p->i", t.Lambda, lam, cutoff=K)
    mu = einsum("ji,j->i", At, rest, cutoff=K)
    dbeta = mu.mean().real.copy()
    psi0 = divergence_free_potential(mu - dbeta)
    return Tangent(dbeta, psi0, chi, lam, Gamma)
