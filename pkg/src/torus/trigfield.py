"""Truncated Fourier series on the torus T^d.

A :class:`Field` stores the complex coefficients f̂(s) for all integer
modes with ``|s|_inf <= cutoff`` in a centred array: along every torus
axis index ``K + s`` holds mode ``s``.  Trailing array axes carry the
value shape (scalar, vector or matrix).

Nonlinear operations go through a physical grid.  Products are exact up
to the output cutoff because the grid is always large enough to keep
aliased modes out of the retained band.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.fft import next_fast_len

__all__ = [
    "Field",
    "Freq",
    "DivisorUnderflow",
    "mode_grid",
    "field_mul",
    "pointwise",
    "einsum",
    "dpartial",
    "gradient",
    "split_mean",
    "norm_weighted",
    "norm_sobolev",
    "sample_from_grid",
    "evaluate_at",
    "mean_product",
]

REALITY_TOL = 1e-10


class DivisorUnderflow(ArithmeticError):
    """A retained mode has a divisor below the configured floor."""


def mode_grid(dim: int, cutoff: int) -> np.ndarray:
    """Integer modes, shape ``(2K+1,)*dim + (dim,)``."""
    ax = np.arange(-cutoff, cutoff + 1)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack(mesh, axis=-1)


def _fft_size(n: int) -> int:
    return int(next_fast_len(max(int(n), 1)))


class Field:
    """Real-valued trigonometric polynomial on T^dim with array values."""

    __array_priority__ = 100

    def __init__(self, coeffs: np.ndarray, dim: int):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim < dim:
            raise ValueError("coefficient array has fewer axes than the torus dimension")
        side = coeffs.shape[0] if dim else 1
        if any(n != side for n in coeffs.shape[:dim]) or side % 2 == 0:
            raise ValueError(f"bad coefficient block {coeffs.shape[:dim]}")
        self.coeffs = coeffs
        self.dim = dim
        self.cutoff = (side - 1) // 2

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, dim: int, cutoff: int, shape: Sequence[int] = ()) -> "Field":
        return cls(np.zeros((2 * cutoff + 1,) * dim + tuple(shape), complex), dim)

    @classmethod
    def constant(cls, value, dim: int, cutoff: int) -> "Field":
        value = np.asarray(value, dtype=complex)
        f = cls.zeros(dim, cutoff, value.shape)
        f.coeffs[(cutoff,) * dim] = value
        return f

    @classmethod
    def from_grid(cls, values: np.ndarray, dim: int, cutoff: int) -> "Field":
        return sample_from_grid(values, dim, cutoff)

    @classmethod
    def from_modes(cls, dim: int, cutoff: int, terms: dict, shape: Sequence[int] = ()) -> "Field":
        """Build from ``{mode tuple: coefficient}``; the conjugate mode is filled in."""
        f = cls.zeros(dim, cutoff, shape)
        for s, c in terms.items():
            s = tuple(int(si) for si in np.atleast_1d(s))
            idx = tuple(cutoff + si for si in s)
            neg = tuple(cutoff - si for si in s)
            if idx == neg:
                f.coeffs[idx] += np.real(c)
            else:
                f.coeffs[idx] += c
                f.coeffs[neg] += np.conj(c)
        return f

    # basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[self.dim:]

    @property
    def nmodes(self) -> int:
        return (2 * self.cutoff + 1) ** self.dim

    def copy(self) -> "Field":
        return Field(self.coeffs.copy(), self.dim)

    def __repr__(self) -> str:
        return f"Field(dim={self.dim}, cutoff={self.cutoff}, shape={self.shape})"

    def __getitem__(self, key) -> "Field":
        if not isinstance(key, tuple):
            key = (key,)
        return Field(self.coeffs[(slice(None),) * self.dim + key], self.dim)

    @property
    def T(self) -> "Field":
        if len(self.shape) != 2:
            raise ValueError("transpose needs a matrix field")
        return Field(np.swapaxes(self.coeffs, -1, -2), self.dim)

    def real_mean(self) -> np.ndarray:
        return self.mean().real

    def mean(self) -> np.ndarray:
        return self.coeffs[(self.cutoff,) * self.dim]

    def reality_defect(self) -> float:
        flipped = self.coeffs[(slice(None, None, -1),) * self.dim]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs)), initial=0.0))

    def realify(self) -> "Field":
        """Project onto the real subspace (average with the conjugate reflection)."""
        flipped = self.coeffs[(slice(None, None, -1),) * self.dim]
        return Field(0.5 * (self.coeffs + np.conj(flipped)), self.dim)

    def resize(self, cutoff: int) -> "Field":
        """Zero-pad or truncate to a new cutoff."""
        K = self.cutoff
        if cutoff == K:
            return self
        out = np.zeros((2 * cutoff + 1,) * self.dim + self.shape, complex)
        m = min(K, cutoff)
        src = tuple(slice(K - m, K + m + 1) for _ in range(self.dim))
        dst = tuple(slice(cutoff - m, cutoff + m + 1) for _ in range(self.dim))
        out[dst] = self.coeffs[src]
        return Field(out, self.dim)

    def active_cutoff(self, tol: float = 0.0) -> int:
        """Largest |s|_inf carrying a coefficient above ``tol``."""
        mag = np.abs(self.coeffs).reshape(self.coeffs.shape[: self.dim] + (-1,)).max(axis=-1)
        idx = np.argwhere(mag > tol)
        if idx.size == 0:
            return 0
        return int(np.max(np.abs(idx - self.cutoff)))

    # grid transforms --------------------------------------------------
    def to_grid(self, n: int | None = None, real: bool = True) -> np.ndarray:
        """Values on the uniform grid with ``n`` points per axis.

        ``real=False`` keeps the imaginary part, which multilinear operations
        need when acting on complex (non-Hermitian) coefficient vectors.
        """
        K = self.cutoff
        n = 2 * K + 1 if n is None else int(n)
        if n < 2 * K + 1:
            raise ValueError(f"grid of {n} points cannot carry cutoff {K}")
        buf = np.zeros((n,) * self.dim + self.shape, complex)
        sl = np.r_[0 : K + 1, n - K : n] if K > 0 else np.r_[0:1]
        src = np.r_[K : 2 * K + 1, 0:K]
        ix_dst = np.ix_(*([sl] * self.dim)) if self.dim else ()
        ix_src = np.ix_(*([src] * self.dim)) if self.dim else ()
        buf[ix_dst] = self.coeffs[ix_src]
        axes = tuple(range(self.dim))
        vals = np.fft.ifftn(buf, axes=axes) * n**self.dim
        return vals.real if real else vals

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Field":
        if isinstance(other, Field):
            return other
        return Field.constant(other, self.dim, 0)

    def __add__(self, other) -> "Field":
        other = self._coerce(other)
        K = max(self.cutoff, other.cutoff)
        a, b = self.resize(K).coeffs, other.resize(K).coeffs
        return Field(a + b, self.dim)

    __radd__ = __add__

    def __neg__(self) -> "Field":
        return Field(-self.coeffs, self.dim)

    def __sub__(self, other) -> "Field":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Field":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Field":
        if isinstance(other, Field):
            return field_mul(self, other)
        other = np.asarray(other)
        if other.ndim == 0:
            return Field(self.coeffs * other, self.dim)
        return Field(self.coeffs * other, self.dim)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Field":
        if isinstance(other, Field):
            return pointwise(lambda a, b: a / b, [self, other], nonlinear=True)
        return Field(self.coeffs / other, self.dim)

    # evaluation -------------------------------------------------------
    def evaluate_at(self, xi) -> np.ndarray:
        return evaluate_at(self, xi)


def stack(fields: Sequence[Field], axis: int = 0) -> Field:
    """Stack fields of equal shape into a new value axis."""
    K = max(f.cutoff for f in fields)
    dim = fields[0].dim
    arrs = [f.resize(K).coeffs for f in fields]
    return Field(np.stack(arrs, axis=dim + axis if axis >= 0 else axis), dim)


def _grid_size(fields: Sequence[Field], cutoff: int, nonlinear: bool) -> int:
    total = sum(f.cutoff for f in fields)
    n = total + cutoff + 1
    if nonlinear:
        n = max(n, 4 * cutoff + 2 * max(f.cutoff for f in fields) + 1)
    return _fft_size(max(n, 2 * cutoff + 1, 2 * max(f.cutoff for f in fields) + 1))


def pointwise(
    fn: Callable[..., np.ndarray],
    fields: Sequence[Field],
    cutoff: int | None = None,
    grid: int | None = None,
    nonlinear: bool = False,
) -> Field:
    """Apply ``fn`` to grid values of ``fields`` and transform back.

    For polynomial ``fn`` of total degree len(fields) the default grid is
    alias-free on the retained band.  ``nonlinear=True`` oversamples for
    analytic functions (inverses, compositions) whose spectra are infinite.
    """
    dim = fields[0].dim
    K = max(f.cutoff for f in fields) if cutoff is None else cutoff
    n = _grid_size(fields, K, nonlinear) if grid is None else int(grid)
    if n < 2 * K + 1:
        raise ValueError(f"grid of {n} points cannot carry cutoff {K}")
    vals = [f.to_grid(n, real=nonlinear) for f in fields]
    return sample_from_grid(np.asarray(fn(*vals)), dim, K)


def _expand(vals: np.ndarray, dim: int, rank: int) -> np.ndarray:
    extra = rank - (vals.ndim - dim)
    return vals.reshape(vals.shape + (1,) * extra) if extra > 0 else vals


def field_mul(a: Field, b: Field, cutoff: int | None = None) -> Field:
    """Pointwise product (scalar factors broadcast over value axes)."""
    rank = max(len(a.shape), len(b.shape))
    if len(a.shape) and len(b.shape) and a.shape != b.shape:
        raise ValueError(f"incompatible value shapes {a.shape} and {b.shape}")
    dim = a.dim
    return pointwise(lambda x, y: _expand(x, dim, rank) * _expand(y, dim, rank), [a, b], cutoff)


def einsum(spec: str, *fields: Field, cutoff: int | None = None) -> Field:
    """Pointwise ``np.einsum`` over value axes, e.g. ``einsum('ij,j->i', V, x)``."""
    lhs, rhs = spec.split("->")
    ops = ["..." + s for s in lhs.split(",")]
    full = ",".join(ops) + "->..." + rhs
    return pointwise(lambda *v: np.einsum(full, *v), list(fields), cutoff)


def sample_from_grid(values: np.ndarray, dim: int, cutoff: int) -> Field:
    """Fourier coefficients with ``|s|_inf <= cutoff`` of uniform grid samples."""
    values = np.asarray(values)
    n = values.shape[0] if dim else 1
    if n < 2 * cutoff + 1:
        raise ValueError(f"{n} samples cannot resolve cutoff {cutoff}")
    axes = tuple(range(dim))
    c = np.fft.fftn(values, axes=axes) / n**dim
    K = cutoff
    sel = np.r_[n - K : n, 0 : K + 1] if K > 0 else np.r_[0:1]
    out = c[np.ix_(*([sel] * dim))] if dim else c
    return Field(out, dim)


def evaluate_at(f: Field, xi) -> np.ndarray:
    """Direct sum of the series at points ``xi`` (shape ``(..., dim)``)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = xi.reshape(-1, f.dim)
    modes = mode_grid(f.dim, f.cutoff).reshape(-1, f.dim)
    phase = np.exp(1j * pts @ modes.T)
    flat = f.coeffs.reshape((-1,) + f.shape)
    vals = np.tensordot(phase, flat, axes=(1, 0)).real
    return vals[0] if single else vals.reshape(xi.shape[:-1] + f.shape)


def _broadcast_modes(f: Field, factor: np.ndarray) -> np.ndarray:
    return factor.reshape(factor.shape + (1,) * len(f.shape))


@dataclass(frozen=True)
class Freq:
    """Frequency vector with its diophantine constants."""

    omega: np.ndarray
    gamma: float
    tau: float
    check_cutoff: int = 32
    worst: float = dc_field(default=np.inf, compare=False)

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "omega", omega)
        if self.gamma <= 0 or self.tau < 0:
            raise ValueError("gamma must be positive and tau non-negative")
        K = min(self.check_cutoff, max(2, int(4000 ** (1 / len(omega)))))
        s = mode_grid(len(omega), K).reshape(-1, len(omega))
        s = s[np.any(s != 0, axis=1)]
        div = np.abs(s @ omega)
        bound = self.gamma * np.abs(s).sum(axis=1) ** (-self.tau)
        ratio = div / bound
        if np.min(ratio) < 1.0 - 1e-12:
            bad = s[np.argmin(ratio)]
            raise ValueError(f"frequency violates the diophantine bound at mode {tuple(bad)}")
        object.__setattr__(self, "worst", float(np.min(div)))

    @property
    def dim(self) -> int:
        return len(self.omega)

    def divisors(self, cutoff: int) -> np.ndarray:
        """The array ``omega . s`` over the centred mode block."""
        return mode_grid(self.dim, cutoff) @ self.omega

    def worst_divisor(self, cutoff: int) -> float:
        d = np.delete(np.abs(self.divisors(cutoff)).ravel(), (2 * cutoff + 1) ** self.dim // 2)
        return float(d.min()) if d.size else np.inf


def dpartial(f: Field, freq: Freq | np.ndarray) -> Field:
    """The derivative along the flow, s -> i (omega . s) f̂(s)."""
    omega = freq.omega if isinstance(freq, Freq) else np.atleast_1d(freq)
    div = mode_grid(f.dim, f.cutoff) @ omega
    return Field(f.coeffs * _broadcast_modes(f, 1j * div), f.dim)


def gradient(f: Field) -> Field:
    """Append a trailing axis j holding d f / d xi_j (Jacobian for vector fields)."""
    s = mode_grid(f.dim, f.cutoff)
    c = f.coeffs[..., None]
    factor = 1j * s.reshape(s.shape[:-1] + (1,) * len(f.shape) + (f.dim,))
    return Field(c * factor, f.dim)


def divergence_free_potential(g: Field) -> Field:
    """Least-squares scalar psi with grad psi closest to the vector field g (zero mean)."""
    s = mode_grid(g.dim, g.cutoff)
    s2 = (s**2).sum(axis=-1).astype(float)
    s2[(g.cutoff,) * g.dim] = 1.0
    num = np.einsum("...j,...j->...", -1j * s, g.coeffs)
    out = num / s2
    out[(g.cutoff,) * g.dim] = 0.0
    return Field(out, g.dim)


def split_mean(f: Field) -> tuple[np.ndarray, Field, float]:
    """Return ``(mean, f - mean, imaginary residue of the mean)``."""
    m = f.mean()
    star = f.copy()
    star.coeffs[(f.cutoff,) * f.dim] = 0.0
    return m.real, star, float(np.max(np.abs(m.imag), initial=0.0))


def _mode_modulus(f: Field) -> np.ndarray:
    c = np.abs(f.coeffs) ** 2
    c = c.reshape(c.shape[: f.dim] + (-1,)).sum(axis=-1)
    return np.sqrt(c)


def norm_weighted(f: Field, sigma: float = 0.0, d: int = 0) -> float:
    """Computable proxy  sum_s (1+|s|)^d exp(sigma |s|) |f̂(s)|  with |s| the l1 norm."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    s1 = np.abs(mode_grid(f.dim, f.cutoff)).sum(axis=-1)
    w = (1.0 + s1) ** d * np.exp(sigma * s1)
    return float((w * _mode_modulus(f)).sum())


def norm_sobolev(f: Field, s: float = 0.0) -> float:
    """(sum_m (1+|m|^2)^s |f̂(m)|^2)^(1/2)."""
    m2 = (mode_grid(f.dim, f.cutoff) ** 2).sum(axis=-1)
    return float(np.sqrt(((1.0 + m2) ** s * _mode_modulus(f) ** 2).sum()))


def mean_product(a: Field, b: Field) -> np.ndarray:
    """Mean over the torus of the pointwise product of scalar/matching fields (Parseval)."""
    K = min(a.cutoff, b.cutoff)
    ac = a.resize(K).coeffs
    bc = b.resize(K).coeffs[(slice(None, None, -1),) * a.dim]
    val = (ac * bc).reshape((-1,) + ac.shape[a.dim:]).sum(axis=0)
    return val.real
