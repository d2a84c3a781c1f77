"""Polynomial-trigonometric Hamiltonians and their compositions with torus embeddings.

Phase space variables are ordered ``(x_1..x_d, y_1..y_d, z_1, z_2)`` with
``d = n - 1``.  A term is

    coef * prod_j y_j**ypow_j * z_2**z2pow * trig(xmode . x + z1mode * z_1)

with ``trig`` either cos or sin.  The integrable part H0 only uses terms
with zero harmonics.  An exact polynomial slot ``m z_1 + M z_1**2 / 2``
carries the counterterms of the modified problem.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trigfield import Field, Freq, _fft_size, sample_from_grid

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

__all__ = [
    "Term",
    "HamiltonianSpec",
    "Embedding",
    "CutoffOverflow",
    "ConfigError",
    "eval_composed",
    "eval_block",
    "Composer",
    "modify",
    "load_spec",
    "parse_spec",
    "model_problem",
]


class CutoffOverflow(ValueError):
    """Requested output cutoff does not fit on the evaluation grid."""


class ConfigError(ValueError):
    """Malformed Hamiltonian description."""


@dataclass(frozen=True)
class Term:
    coef: float
    ypow: tuple
    z2pow: int = 0
    xmode: tuple = ()
    z1mode: int = 0
    phase: str = "cos"

    def __post_init__(self):
        if self.phase not in ("cos", "sin"):
            raise ConfigError(f"phase must be 'cos' or 'sin', got {self.phase!r}")
        if self.z2pow < 0 or any(a < 0 for a in self.ypow):
            raise ConfigError("polynomial exponents must be non-negative")


def _falling(a: int, c: int) -> float:
    return float(math.perm(a, c)) if c <= a else 0.0


def _trig_derivative(phase: str, r: int, theta: np.ndarray) -> np.ndarray:
    # derivative of order r of cos or sin
    shift = r % 4 if phase == "cos" else (r + 3) % 4
    return (np.cos(theta), -np.sin(theta), -np.cos(theta), np.sin(theta))[shift]


@dataclass(frozen=True)
class HamiltonianSpec:
    """H = H0(y, z2) + epsilon * H1(x, y, z) + m z1 + M z1^2 / 2."""

    h0: tuple
    h1: tuple
    epsilon: float
    freq: Freq
    m: float = 0.0
    M: float = 0.0
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        d = self.dim
        for t in self.h0 + self.h1:
            if len(t.ypow) != d or (t.xmode and len(t.xmode) != d):
                raise ConfigError(f"term {t} does not match torus dimension {d}")
        for t in self.h0:
            if any(t.xmode) or t.z1mode != 0:
                raise ConfigError("integrable terms may not carry harmonics")
        if self.validate:
            self.check_normalization()

    @property
    def dim(self) -> int:
        return self.freq.dim

    @property
    def n(self) -> int:
        return self.dim + 1

    def terms(self) -> Iterable[tuple[float, Term]]:
        for t in self.h0:
            yield 1.0, t
        if self.epsilon != 0.0:
            for t in self.h1:
                yield self.epsilon, t

    def integrable(self) -> "HamiltonianSpec":
        return replace(self, epsilon=0.0)

    def check_normalization(self, tol: float = 1e-12) -> None:
        d = self.dim
        zero = np.zeros(d)
        z = np.zeros(2)
        h0 = replace(self, epsilon=0.0, m=0.0, M=0.0, validate=False)
        grad_y = np.array([h0.derivative(_order(d, y=[j]), zero, zero, z) for j in range(d)])
        dz2 = h0.derivative(_order(d, z=[1]), zero, zero, z)
        dz22 = h0.derivative(_order(d, z=[1, 1]), zero, zero, z)
        if np.max(np.abs(grad_y - self.freq.omega)) > tol:
            raise ConfigError(f"grad_y H0(0,0) = {grad_y} differs from omega = {self.freq.omega}")
        if abs(dz2) > tol:
            raise ConfigError(f"d H0/d z2 (0,0) = {dz2}, expected 0")
        if abs(dz22 - 1.0) > tol:
            raise ConfigError(f"d2 H0/d z2^2 (0,0) = {dz22}, expected 1")

    # pointwise evaluation ------------------------------------------------
    def derivative(self, order: np.ndarray, x, y, z) -> np.ndarray:
        """Partial derivative with multiplicities ``order`` (length 2d+2) at points."""
        d = self.dim
        order = np.asarray(order, dtype=int)
        cx, cy, cz1, cz2 = order[:d], order[d : 2 * d], order[2 * d], order[2 * d + 1]
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1], z.shape[:-1]))
        for scale, t in self.terms():
            xmode = np.asarray(t.xmode if t.xmode else (0,) * d, dtype=int)
            r = int(cx.sum() + cz1)
            pref = scale * t.coef * np.prod(xmode.astype(float) ** cx) * float(t.z1mode) ** cz1
            if pref == 0.0:
                continue
            poly = np.ones_like(out)
            for j in range(d):
                f = _falling(t.ypow[j], cy[j])
                if f == 0.0:
                    poly = None
                    break
                poly = poly * f * y[..., j] ** (t.ypow[j] - cy[j])
            if poly is None:
                continue
            f2 = _falling(t.z2pow, cz2)
            if f2 == 0.0:
                continue
            poly = poly * f2 * z[..., 1] ** (t.z2pow - cz2)
            theta = x @ xmode.astype(float) + t.z1mode * z[..., 0]
            out = out + pref * poly * _trig_derivative(t.phase, r, theta)
        if (self.m or self.M) and not cx.any() and not cy.any() and cz2 == 0:
            z1 = z[..., 0]
            if cz1 == 0:
                out = out + self.m * z1 + 0.5 * self.M * z1**2
            elif cz1 == 1:
                out = out + self.m + self.M * z1
            elif cz1 == 2:
                out = out + self.M
        return out

    def value(self, x, y, z) -> np.ndarray:
        return self.derivative(np.zeros(2 * self.dim + 2, int), x, y, z)

    def gradients(self, x, y, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d = self.dim
        hx = np.stack([self.derivative(_order(d, x=[j]), x, y, z) for j in range(d)], -1)
        hy = np.stack([self.derivative(_order(d, y=[j]), x, y, z) for j in range(d)], -1)
        hz = np.stack([self.derivative(_order(d, z=[p]), x, y, z) for p in range(2)], -1)
        return hx, hy, hz

    def vector_field(self, state: np.ndarray) -> np.ndarray:
        """Hamilton's equations x' = H_y, y' = -H_x, z' = J grad_z H."""
        d = self.dim
        x, y, z = state[..., :d], state[..., d : 2 * d], state[..., 2 * d :]
        hx, hy, hz = self.gradients(x, y, z)
        zdot = np.stack([hz[..., 1], -hz[..., 0]], -1)
        return np.concatenate([hy, -hx, zdot], -1)

    def scaled(self, c: float) -> "HamiltonianSpec":
        """c * H; the normalisation checks are skipped for c != 1."""
        h0 = tuple(replace(t, coef=c * t.coef) for t in self.h0)
        h1 = tuple(replace(t, coef=c * t.coef) for t in self.h1)
        return replace(self, h0=h0, h1=h1, m=c * self.m, M=c * self.M, validate=False)


def _order(d: int, x: Sequence[int] = (), y: Sequence[int] = (), z: Sequence[int] = ()) -> np.ndarray:
    o = np.zeros(2 * d + 2, int)
    for j in x:
        o[j] += 1
    for j in y:
        o[d + j] += 1
    for p in z:
        o[2 * d + p] += 1
    return o


def modify(H: HamiltonianSpec, m: float, M: float) -> HamiltonianSpec:
    """Add the counterterms m z1 + M z1^2 / 2."""
    if m == 0.0 and M == 0.0:
        return H
    return replace(H, m=H.m + m, M=H.M + M, validate=False)


@dataclass(frozen=True)
class Embedding:
    """Torus embedding xi -> (xi + u, v, w)."""

    u: Field
    v: Field
    w: Field

    @property
    def cutoff(self) -> int:
        return max(self.u.cutoff, self.v.cutoff, self.w.cutoff)

    @classmethod
    def trivial(cls, dim: int, cutoff: int, alpha: float = 0.0) -> "Embedding":
        return cls(
            Field.zeros(dim, cutoff, (dim,)),
            Field.zeros(dim, cutoff, (dim,)),
            Field.constant(np.array([alpha, 0.0]), dim, cutoff),
        )


class Composer:
    """Grid samples of an embedding, reused across many derivative blocks."""

    def __init__(self, H: HamiltonianSpec, emb: Embedding, cutoff: int | None = None, grid: int | None = None):
        self.H = H
        self.dim = H.dim
        self.cutoff = emb.cutoff if cutoff is None else int(cutoff)
        n = _fft_size(2 * (self.cutoff + emb.cutoff) + 1) if grid is None else int(grid)
        if n < 2 * self.cutoff + 1:
            raise CutoffOverflow(f"output cutoff {self.cutoff} exceeds grid of {n} points")
        self.grid = n
        d = self.dim
        ax = 2 * np.pi * np.arange(n) / n
        xi = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1)
        self.x = xi + emb.u.to_grid(n)
        self.y = emb.v.to_grid(n)
        self.z = emb.w.to_grid(n)
        self._cache: dict = {}

    def order(self, order: np.ndarray) -> Field:
        key = tuple(int(o) for o in order)
        if key not in self._cache:
            vals = self.H.derivative(np.asarray(key), self.x, self.y, self.z)
            self._cache[key] = sample_from_grid(vals, self.dim, self.cutoff)
        return self._cache[key]

    def block(self, blocks: str) -> Field:
        """Derivative block such as '', 'y', 'zy', 'yyz' as an array-valued field.

        Axis p of the result runs over the components of variable group
        ``blocks[p]``; ``'zy'`` has entries d^2 H / dz_p dy_j.  The group
        ``'q'`` is the concatenation (y, z).
        """
        d = self.dim
        sizes = [{"x": d, "y": d, "z": 2, "q": d + 2}[b] for b in blocks]
        offset = {"x": 0, "y": d, "z": 2 * d, "q": d}
        out = np.zeros((2 * self.cutoff + 1,) * d + tuple(sizes), complex)
        for idx in itertools.product(*[range(s) for s in sizes]):
            o = np.zeros(2 * d + 2, int)
            for b, i in zip(blocks, idx):
                o[offset[b] + i] += 1
            out[(Ellipsis,) + idx] = self.order(o).coeffs
        return Field(out, d)


def eval_composed(H: HamiltonianSpec, order, emb: Embedding, cutoff: int | None = None, grid: int | None = None) -> Field:
    """The field xi -> (d^order H)(xi + u(xi), v(xi), w(xi))."""
    if isinstance(order, str):
        return Composer(H, emb, cutoff, grid).block(order)
    order = np.asarray(order, dtype=int)
    if order.sum() > 3:
        raise ValueError("derivatives beyond third order are not supported")
    return Composer(H, emb, cutoff, grid).order(order)


def eval_block(H: HamiltonianSpec, blocks: str, emb: Embedding, cutoff: int | None = None) -> Field:
    return Composer(H, emb, cutoff).block(blocks)


# --- construction ---------------------------------------------------------


def _term_from_table(tab: dict, d: int, harmonic: bool) -> Term:
    try:
        coef = float(tab["coef"])
        ypow = tuple(int(a) for a in tab.get("ypow", [0] * d))
        z2pow = int(tab.get("z2pow", 0))
        if harmonic:
            xmode = tuple(int(s) for s in tab.get("xmode", [0] * d))
            z1mode = int(tab.get("z1mode", 0))
            phase = str(tab.get("phase", "cos"))
        else:
            xmode, z1mode, phase = (0,) * d, 0, "cos"
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad term {tab!r}: {exc}") from exc
    return Term(coef, ypow, z2pow, xmode, z1mode, phase)


def _term_list(raw, key: str) -> list:
    if raw is None:
        return []
    if isinstance(raw, list):
        return raw
    if isinstance(raw, dict) and "terms" in raw:
        return list(raw["terms"])
    raise ConfigError(f"[{key}] must be an array of tables or hold a 'terms' list")


def parse_spec(doc: dict) -> HamiltonianSpec:
    """Build a spec from a parsed TOML document."""
    try:
        omega = np.atleast_1d(np.asarray(doc["omega"], dtype=float))
        gamma = float(doc.get("gamma", 0.5 * np.min(np.abs(omega))))
        tau = float(doc.get("tau", 1.0))
        eps = float(doc.get("epsilon", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"missing or malformed top-level key: {exc}") from exc
    d = len(omega)
    try:
        freq = Freq(omega, gamma, tau)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    h0 = tuple(_term_from_table(t, d, False) for t in _term_list(doc.get("h0"), "h0"))
    h1 = tuple(_term_from_table(t, d, True) for t in _term_list(doc.get("h1"), "h1"))
    return HamiltonianSpec(h0, h1, eps, freq)


def load_spec(path: str | Path) -> tuple[HamiltonianSpec, dict]:
    """Read a TOML Hamiltonian description; returns the spec and the raw document."""
    try:
        with open(path, "rb") as fh:
            doc = _toml.load(fh)
    except (OSError, _toml.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_spec(doc), doc


GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def model_problem(epsilon: float = 1e-3, omega: float = GOLDEN) -> HamiltonianSpec:
    """H0 = omega y - y^2/2 + z2^2/2,  H1 = cos(x1 + z1)."""
    h0 = (
        Term(omega, (1,), 0),
        Term(-0.5, (2,), 0),
        Term(0.5, (0,), 2),
    )
    h1 = (Term(1.0, (0,), 0, (1,), 1, "cos"),)
    freq = Freq(np.array([omega]), gamma=0.5 * omega, tau=1.0)
    return HamiltonianSpec(h0, h1, epsilon, freq)
