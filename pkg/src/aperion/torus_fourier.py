"""Truncated Fourier series on the torus R^d/Z^d.

A ``TorusFun`` stores the coefficients of

    f(theta) = sum_k c_k exp(2 pi i <k, theta>)

on a dense box of modes, keeping only modes with weighted length
``|k|_1 = sum_j j |k_j| <= K`` (axes counted from 1).  Values are scalars or
square matrices.  Products are exact convolutions evaluated with zero-padded
FFTs and then truncated back to the budget, recording the dropped mass.
"""

from __future__ import annotations

import functools
import math
from collections import namedtuple

import numpy as np
import scipy.fft as sfft

from .errors import ConvergenceError, DomainError, StructuralError

COEFF_FLOOR = 1e-16
SERIES_TOL = 1e-17
MAX_SERIES_TERMS = 400

_Geometry = namedtuple("_Geometry", "half axes weight mask")


def default_budget(dim: int) -> int:
    """Default maximal weighted degree for a torus of dimension ``dim``."""
    if dim < 1:
        raise StructuralError(f"torus dimension must be >= 1, got {dim}")
    if dim == 1:
        return 32
    return max(4, 32 // dim)


def weighted_length(k) -> int:
    """Exact weighted length sum_j j*|k_j| of an integer vector."""
    return sum((j + 1) * abs(int(kj)) for j, kj in enumerate(k))


@functools.lru_cache(maxsize=None)
def _geometry(dim: int, K: int) -> _Geometry:
    half = tuple(K // j for j in range(1, dim + 1))
    axes = tuple(np.arange(-m, m + 1) for m in half)
    grids = np.meshgrid(*axes, indexing="ij")
    weight = sum((j + 1) * np.abs(g) for j, g in enumerate(grids))
    mask = weight <= K
    for a in (*axes, weight, mask):
        a.setflags(write=False)
    return _Geometry(half, axes, weight, mask)


def _frac(x):
    return x - np.floor(x)


def _as_vector(omega):
    vec = getattr(omega, "vector", omega)
    return np.atleast_1d(np.asarray(vec, dtype=np.longdouble))


def _phase(frac_part):
    ang = 2 * np.pi * np.asarray(frac_part, dtype=np.longdouble)
    return (np.cos(ang) + 1j * np.sin(ang)).astype(complex)


def _axis_powers(x, m):
    """exp(2 pi i k x) for k = -m..m; the base phase in extended precision, powers by products."""
    z = _phase(_frac(x))
    pos = np.ones((len(z), m + 1), dtype=complex)
    if m:
        pos[:, 1:] = z[:, None]
        pos = np.cumprod(pos, axis=1)
    return np.concatenate([np.conj(pos[:, :0:-1]), pos], axis=1)


def _entry_norm(c, nv):
    """Per-mode norm of a coefficient array: abs for scalars, Frobenius for matrices."""
    if nv == 0:
        return np.abs(c)
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=tuple(range(nv))))


class TorusFun:
    """Immutable truncated Fourier series with scalar or square-matrix values."""

    __array_priority__ = 1000
    __slots__ = ("_c", "_K", "_vshape", "_radius", "_discarded")

    def __init__(self, coeffs, K: int, value_shape=(), radius=None, discarded=0.0, prune=True):
        c = np.array(coeffs, dtype=complex)
        value_shape = tuple(value_shape)
        dim = c.ndim - len(value_shape)
        if dim < 1:
            raise StructuralError("coefficient array has no torus axes")
        if len(value_shape) not in (0, 2) or (value_shape and value_shape[0] != value_shape[1]):
            raise StructuralError(f"values must be scalars or square matrices, got {value_shape}")
        geom = _geometry(dim, int(K))
        expected = value_shape + tuple(2 * m + 1 for m in geom.half)
        if c.shape != expected:
            raise StructuralError(f"coefficient shape {c.shape} does not match budget box {expected}")
        c[..., ~geom.mask] = 0
        if prune:
            total = _entry_norm(c, len(value_shape)).sum()
            if total > 0:
                c[np.abs(c) < COEFF_FLOOR * total] = 0
        c.setflags(write=False)
        self._c = c
        self._K = int(K)
        self._vshape = value_shape
        self._radius = radius
        self._discarded = float(discarded)

    # ------------------------------------------------------------------ basics
    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def K(self) -> int:
        return self._K

    @property
    def dim(self) -> int:
        return self._c.ndim - len(self._vshape)

    @property
    def value_shape(self) -> tuple:
        return self._vshape

    @property
    def is_matrix(self) -> bool:
        return bool(self._vshape)

    @property
    def radius(self):
        return self._radius

    @property
    def discarded(self) -> float:
        """Mass dropped by truncation while producing this function."""
        return self._discarded

    @property
    def half(self) -> tuple:
        return _geometry(self.dim, self._K).half

    def _like(self, coeffs, discarded=None, value_shape=None):
        vs = self._vshape if value_shape is None else value_shape
        d = self._discarded if discarded is None else discarded
        return TorusFun(coeffs, self._K, vs, self._radius, d)

    def __repr__(self):
        kind = "matrix%s" % (self._vshape,) if self._vshape else "scalar"
        return f"TorusFun(dim={self.dim}, K={self._K}, {kind}, modes={self.support_size()})"

    # ------------------------------------------------------------ constructors
    @classmethod
    def zeros(cls, dim: int, K: int | None = None, value_shape=()):
        K = default_budget(dim) if K is None else K
        geom = _geometry(dim, K)
        return cls(np.zeros(tuple(value_shape) + tuple(2 * m + 1 for m in geom.half)), K, value_shape)

    @classmethod
    def constant(cls, value, dim: int, K: int | None = None):
        value = np.asarray(value, dtype=complex)
        f = cls.zeros(dim, K, value.shape)
        c = np.array(f._c)
        c[(...,) + f._zero_index()] = value
        return cls(c, f._K, value.shape)

    @classmethod
    def identity(cls, m: int, dim: int, K: int | None = None):
        return cls.constant(np.eye(m), dim, K)

    @classmethod
    def from_modes(cls, modes: dict, dim: int, K: int | None = None, value_shape=()):
        """Build from an explicit ``{k: coefficient}`` map (k an integer tuple)."""
        f = cls.zeros(dim, K, value_shape)
        c = np.array(f._c)
        half = f.half
        for k, v in modes.items():
            k = tuple(int(x) for x in np.atleast_1d(k))
            if len(k) != dim:
                raise StructuralError(f"mode {k} has wrong dimension for d={dim}")
            if weighted_length(k) > f._K:
                raise StructuralError(f"mode {k} exceeds the budget K={f._K}")
            c[(...,) + tuple(kj + m for kj, m in zip(k, half))] += np.asarray(v, dtype=complex)
        return cls(c, f._K, value_shape)

    @classmethod
    def cos(cls, k, amplitude=1.0, dim: int | None = None, K: int | None = None, phase=0.0):
        """amplitude * cos(2 pi <k, theta> + phase)."""
        k = tuple(int(x) for x in np.atleast_1d(k))
        dim = len(k) if dim is None else dim
        half = 0.5 * amplitude
        if not any(k):
            return cls.constant(amplitude * math.cos(phase), dim, K)
        neg = tuple(-x for x in k)
        return cls.from_modes({k: half * np.exp(1j * phase), neg: half * np.exp(-1j * phase)}, dim, K)

    @classmethod
    def sin(cls, k, amplitude=1.0, dim: int | None = None, K: int | None = None):
        return cls.cos(k, amplitude, dim, K, phase=-math.pi / 2)

    @classmethod
    def from_entries(cls, rows):
        """Assemble a matrix function from a nested list of scalar functions or numbers."""
        ref = next((x for row in rows for x in row if isinstance(x, TorusFun)), None)
        if ref is None:
            raise StructuralError("from_entries needs at least one TorusFun entry")
        m = len(rows)
        entries = []
        for row in rows:
            if len(row) != m:
                raise StructuralError("matrix entries must form a square array")
            for x in row:
                if isinstance(x, TorusFun):
                    if x.is_matrix or x.dim != ref.dim:
                        raise StructuralError("matrix entries must be scalar functions on one torus")
                    entries.append(x.with_budget(ref.K)._c)
                else:
                    entries.append(cls.constant(x, ref.dim, ref.K)._c)
        c = np.stack(entries).reshape((m, m) + entries[0].shape)
        return cls(c, ref.K, (m, m))

    @classmethod
    def from_grid(cls, values, K: int | None = None, value_shape=()):
        """Coefficients from samples on the uniform grid theta_j = i_j / N_j.

        ``values`` has shape ``value_shape + (N_1, ..., N_d)``; modes beyond the
        budget are discarded.
        """
        values = np.asarray(values)
        nv = len(value_shape)
        N = values.shape[nv:]
        dim = len(N)
        K = default_budget(dim) if K is None else K
        axes = tuple(range(nv, nv + dim))
        full = sfft.fftn(values, axes=axes) / np.prod(N)
        geom = _geometry(dim, K)
        if any(n <= 2 * m for n, m in zip(N, geom.half)):
            raise StructuralError(f"grid {N} too coarse for budget K={K}")
        idx = tuple(np.mod(ax, n) for ax, n in zip(geom.axes, N))
        c = full[(...,) + np.ix_(*idx)]
        return cls(c, K, value_shape)

    # ------------------------------------------------------------- structure
    def _zero_index(self):
        return tuple(self.half)

    def coefficient(self, k):
        k = tuple(int(x) for x in np.atleast_1d(k))
        if len(k) != self.dim:
            raise StructuralError(f"mode {k} has wrong dimension")
        if any(abs(kj) > m for kj, m in zip(k, self.half)):
            return np.zeros(self._vshape, dtype=complex) if self._vshape else 0j
        return self._c[(...,) + tuple(kj + m for kj, m in zip(k, self.half))]

    def modes(self):
        """Iterate over ``(k, coefficient)`` for nonzero modes in lexicographic order."""
        nv = len(self._vshape)
        nz = _entry_norm(self._c, nv) > 0
        for idx in zip(*np.nonzero(nz)):
            k = tuple(int(i - m) for i, m in zip(idx, self.half))
            yield k, self._c[(...,) + idx]

    def support_size(self) -> int:
        return int(np.count_nonzero(_entry_norm(self._c, len(self._vshape))))

    def max_degree(self) -> int:
        """Largest weighted length among nonzero modes."""
        geom = _geometry(self.dim, self._K)
        nz = _entry_norm(self._c, len(self._vshape)) > 0
        return int(geom.weight[nz].max()) if nz.any() else 0

    def with_budget(self, K: int) -> "TorusFun":
        """Re-embed into the box of budget ``K`` (truncating when K shrinks)."""
        if K == self._K:
            return self
        new = _geometry(self.dim, K)
        old = self.half
        c = np.zeros(self._vshape + tuple(2 * m + 1 for m in new.half), dtype=complex)
        src, dst = [], []
        for mo, mn in zip(old, new.half):
            m = min(mo, mn)
            src.append(slice(mo - m, mo + m + 1))
            dst.append(slice(mn - m, mn + m + 1))
        c[(...,) + tuple(dst)] = self._c[(...,) + tuple(src)]
        kept = np.array(c)
        kept[..., ~new.mask] = 0
        lost = self.norm() - _entry_norm(kept, len(self._vshape)).sum()
        return TorusFun(kept, K, self._vshape, self._radius, self._discarded + max(lost, 0.0))

    def truncate(self, degree: int, strict: bool = False) -> "TorusFun":
        """Keep modes with |k|_1 <= degree (``< degree`` if ``strict``)."""
        geom = _geometry(self.dim, self._K)
        keep = geom.weight < degree if strict else geom.weight <= degree
        c = np.array(self._c)
        c[..., ~keep] = 0
        lost = _entry_norm(self._c, len(self._vshape))[~keep].sum()
        return self._like(c, self._discarded + lost)

    def tail_mass(self, degree: int) -> float:
        """Sum of coefficient norms with |k|_1 > degree."""
        geom = _geometry(self.dim, self._K)
        return float(_entry_norm(self._c, len(self._vshape))[geom.weight > degree].sum())

    def entry(self, i: int, j: int) -> "TorusFun":
        if not self.is_matrix:
            raise StructuralError("entry() needs a matrix function")
        return TorusFun(self._c[i, j], self._K, (), self._radius, self._discarded)

    def transpose(self) -> "TorusFun":
        if not self.is_matrix:
            return self
        return self._like(np.swapaxes(self._c, 0, 1))

    def diag_part(self) -> "TorusFun":
        if not self.is_matrix:
            raise StructuralError("diag_part() needs a matrix function")
        m = self._vshape[0]
        c = np.zeros_like(self._c)
        for i in range(m):
            c[i, i] = self._c[i, i]
        return self._like(c)

    def offdiag_part(self) -> "TorusFun":
        return self - self.diag_part()

    def reflect(self) -> "TorusFun":
        """theta -> -theta."""
        axes = tuple(range(len(self._vshape), self._c.ndim))
        return self._like(np.flip(self._c, axis=axes))

    def real_part(self) -> "TorusFun":
        """Project onto real-valued functions: c_k <- (c_k + conj(c_{-k})) / 2."""
        return self._like(0.5 * (self._c + np.conj(self.reflect()._c)))

    def reality_defect(self) -> float:
        return float(np.max(np.abs(self._c - np.conj(self.reflect()._c)), initial=0.0))

    def shift(self, omega, times=1) -> "TorusFun":
        """theta -> theta + times*omega."""
        w = _as_vector(omega) * np.longdouble(times)
        if w.shape[0] != self.dim:
            raise StructuralError(f"shift vector of length {w.shape[0]} on a {self.dim}-torus")
        geom = _geometry(self.dim, self._K)
        ph = np.ones((), dtype=complex)
        for ax, wj in zip(geom.axes, w):
            pj = _phase(_frac(ax.astype(np.longdouble) * wj))
            ph = np.multiply.outer(ph, pj)
        return self._like(self._c * ph)

    def map_modes(self, multiplier) -> "TorusFun":
        """Multiply each mode by ``multiplier`` (array over the coefficient box)."""
        return self._like(self._c * multiplier)

    # ---------------------------------------------------------------- norms
    def norm(self, r=None) -> float:
        """Weighted norm sum_k |c_k| exp(r |k|_1); r defaults to the stored radius or 0."""
        r = (self._radius or 0.0) if r is None else r
        w = _entry_norm(self._c, len(self._vshape))
        if r:
            w = w * np.exp(r * _geometry(self.dim, self._K).weight)
        return float(w.sum())

    def _default_grid(self):
        return tuple(max(32, sfft.next_fast_len(4 * m + 2)) for m in self.half)

    def sup_norm(self, grid=None) -> float:
        """Maximum of |f| (operator 2-norm for matrices) on a uniform grid."""
        vals = self.grid_values(grid)
        if not self.is_matrix:
            return float(np.max(np.abs(vals)))
        nv = len(self._vshape)
        mats = np.moveaxis(vals.reshape(self._vshape + (-1,)), -1, 0)
        return float(np.max(np.linalg.norm(mats, ord=2, axis=(1, 2))))

    def average(self):
        """Mean over the torus (the zero mode)."""
        c0 = self._c[(...,) + self._zero_index()]
        if np.all(np.abs(np.imag(c0)) <= 1e-12 * (1 + np.abs(c0))):
            c0 = np.real(c0)
        return c0 if self._vshape else c0[()]

    # ----------------------------------------------------------- evaluation
    def _embed(self, N):
        arr = np.zeros(self._vshape + tuple(N), dtype=complex)
        geom = _geometry(self.dim, self._K)
        idx = tuple(np.mod(ax, n) for ax, n in zip(geom.axes, N))
        if all(n > 2 * m for n, m in zip(N, geom.half)):
            arr[(...,) + np.ix_(*idx)] = self._c
        else:
            nv = len(self._vshape)
            # fold aliased modes together
            target = np.moveaxis(arr, tuple(range(nv)), tuple(range(-nv, 0))) if nv else arr
            moved = np.moveaxis(self._c, tuple(range(nv)), tuple(range(-nv, 0))) if nv else self._c
            np.add.at(target, np.ix_(*idx), moved)
        return arr

    def grid_values(self, grid=None) -> np.ndarray:
        """Values on theta = (i_1/N_1, ..., i_d/N_d); shape value_shape + grid."""
        if grid is None:
            grid = self._default_grid()
        N = (grid,) * self.dim if np.isscalar(grid) else tuple(grid)
        if len(N) != self.dim:
            raise StructuralError(f"grid {N} does not match torus dimension {self.dim}")
        nv = len(self._vshape)
        axes = tuple(range(nv, nv + self.dim))
        return sfft.ifftn(self._embed(N), axes=axes) * np.prod(N)

    def __call__(self, theta):
        """Evaluate at points; ``theta`` has shape (..., d) (or any shape when d = 1)."""
        th = np.asarray(theta, dtype=np.longdouble)
        if self.dim == 1 and (th.ndim == 0 or th.shape[-1] != 1):
            th = th[..., None]
        if th.shape[-1] != self.dim:
            raise StructuralError(f"points of length {th.shape[-1]} on a {self.dim}-torus")
        lead = th.shape[:-1]
        pts = th.reshape(-1, self.dim)
        vals = self._eval_points(pts)
        return vals.reshape(lead + self._vshape)

    def _eval_points(self, pts):
        geom = _geometry(self.dim, self._K)
        nv = len(self._vshape)
        T = self._c
        # contract the last torus axis first
        for j in range(self.dim - 1, -1, -1):
            E = _axis_powers(pts[:, j], geom.half[j])
            if j == self.dim - 1:
                T = np.tensordot(T, E, axes=([nv + j], [1]))
            else:
                T = np.einsum("...ap,pa->...p", T, E)
        # T has shape value_shape + (npts,)
        return np.moveaxis(T, -1, 0)

    def eval_orbit(self, omega, n0: int, n1: int):
        """Values f(n*omega) for n = n0, ..., n1 (inclusive)."""
        w = _as_vector(omega)
        n = np.arange(n0, n1 + 1).astype(np.longdouble)
        pts = _frac(np.multiply.outer(n, w))
        return self._eval_points(pts).reshape((len(n),) + self._vshape)

    # ------------------------------------------------------------ arithmetic
    def _coerce(self, other):
        if isinstance(other, TorusFun):
            if other.dim != self.dim:
                raise StructuralError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        value = np.asarray(other, dtype=complex)
        return TorusFun.constant(value, self.dim, self._K)

    def _binary_add(self, other, sign):
        other = self._coerce(other)
        K = max(self._K, other._K)
        a, b = self.with_budget(K), other.with_budget(K)
        if a._vshape == b._vshape:
            c = a._c + sign * b._c
            vs = a._vshape
        elif not b._vshape and a._vshape:
            c = np.array(a._c)
            for i in range(a._vshape[0]):
                c[i, i] += sign * b._c
            vs = a._vshape
        elif not a._vshape and b._vshape:
            c = sign * np.array(b._c)
            for i in range(b._vshape[0]):
                c[i, i] += a._c
            vs = b._vshape
        else:
            raise StructuralError(f"cannot add values of shapes {a._vshape} and {b._vshape}")
        return TorusFun(c, K, vs, self._radius, a._discarded + b._discarded)

    def __add__(self, other):
        return self._binary_add(other, 1)

    def __radd__(self, other):
        return self._binary_add(other, 1)

    def __sub__(self, other):
        return self._binary_add(other, -1)

    def __rsub__(self, other):
        return (-self)._binary_add(other, 1)

    def __neg__(self):
        return self._like(-self._c)

    def __mul__(self, other):
        if isinstance(other, TorusFun):
            return mul(self, other)
        value = np.asarray(other)
        if value.ndim == 0:
            return self._like(self._c * complex(value))
        return mul(self, TorusFun.constant(value, self.dim, self._K))

    def __rmul__(self, other):
        value = np.asarray(other)
        if value.ndim == 0:
            return self._like(self._c * complex(value))
        return mul(TorusFun.constant(value, self.dim, self._K), self)

    __matmul__ = __mul__
    __rmatmul__ = __rmul__

    def __truediv__(self, other):
        if isinstance(other, TorusFun):
            return mul(self, inverse(other))
        return self._like(self._c / complex(other))

    def __rtruediv__(self, other):
        return mul(self._coerce(other), inverse(self))

    # -------------------------------------------------------------- serial
    def to_json_dict(self) -> dict:
        out = {"dim": self.dim, "K": self._K, "radius": self._radius}
        if self._vshape:
            out["shape"] = list(self._vshape)
        entries = []
        for k, v in self.modes():
            v = np.asarray(v)
            entries.append({"k": list(k), "re": np.real(v).tolist(), "im": np.imag(v).tolist()})
        out["coeffs"] = entries
        return out

    @classmethod
    def from_json_dict(cls, data: dict, K: int | None = None) -> "TorusFun":
        dim = int(data["dim"])
        K = int(data.get("K") or default_budget(dim)) if K is None else K
        vshape = tuple(data.get("shape", ()))
        modes = {}
        for e in data.get("coeffs", []):
            k = tuple(int(x) for x in e["k"])
            val = np.asarray(e.get("re", 0.0), dtype=float) + 1j * np.asarray(e.get("im", 0.0), dtype=float)
            modes[k] = modes.get(k, 0) + val
        f = cls.from_modes(modes, dim, K, vshape)
        return TorusFun(f._c, K, vshape, data.get("radius"))


# ---------------------------------------------------------------- products
def _fft_grid(half):
    return tuple(sfft.next_fast_len(4 * m + 1) for m in half)


def mul(f: TorusFun, g: TorusFun) -> TorusFun:
    """Product of two torus functions (pointwise; matrix product for matrices)."""
    if not isinstance(f, TorusFun) or not isinstance(g, TorusFun):
        raise StructuralError("mul expects two TorusFun arguments")
    if f.dim != g.dim:
        raise StructuralError(f"dimension mismatch: {f.dim} vs {g.dim}")
    if f.is_matrix and g.is_matrix and f.value_shape[1] != g.value_shape[0]:
        raise StructuralError(f"matrix shapes {f.value_shape} and {g.value_shape} do not chain")
    K = max(f.K, g.K)
    f, g = f.with_budget(K), g.with_budget(K)
    half = f.half
    N = _fft_grid(half)
    d = f.dim
    F = sfft.ifftn(f._embed(N), axes=tuple(range(-d, 0)))
    G = sfft.ifftn(g._embed(N), axes=tuple(range(-d, 0)))
    if f.is_matrix and g.is_matrix:
        H = np.einsum("ij...,jk...->ik...", F, G)
        vs = (f.value_shape[0], g.value_shape[1])
    elif f.is_matrix:
        H, vs = F * G, f.value_shape
    elif g.is_matrix:
        H, vs = F * G, g.value_shape
    else:
        H, vs = F * G, ()
    full = sfft.fftn(H, axes=tuple(range(-d, 0))) * np.prod(N)
    geom = _geometry(d, K)
    idx = tuple(np.mod(ax, n) for ax, n in zip(geom.axes, N))
    c = full[(...,) + np.ix_(*idx)]
    nv = len(vs)
    rest = np.array(full)
    rest[(...,) + np.ix_(*idx)] = np.where(geom.mask, 0, c)
    lost = float(_entry_norm(rest, nv).sum())
    return TorusFun(c, K, vs, f.radius, f.discarded + g.discarded + lost)


def _unit(f: TorusFun) -> TorusFun:
    if f.is_matrix:
        return TorusFun.identity(f.value_shape[0], f.dim, f.K)
    return TorusFun.constant(1.0, f.dim, f.K)


def _require_square(f):
    if f.is_matrix and f.value_shape[0] != f.value_shape[1]:
        raise StructuralError("exp/log/inverse need square matrix values")


def mat_exp(f: TorusFun) -> TorusFun:
    """exp of a scalar or matrix function by scaled Taylor series and squaring."""
    _require_square(f)
    nrm = f.norm(0)
    s = max(0, math.ceil(math.log2(nrm / 0.25))) if nrm > 0.25 else 0
    X = f * (0.5 ** s)
    one = _unit(f)
    total, term = one, one
    for j in range(1, MAX_SERIES_TERMS):
        term = mul(term, X) * (1.0 / j)
        total = total + term
        if term.norm() <= SERIES_TOL * max(1.0, total.norm()):
            break
    else:
        raise ConvergenceError("exponential series did not converge")
    for _ in range(s):
        total = mul(total, total)
    return total


def inverse(f: TorusFun, tol: float = 1e-15, max_iter: int = 60) -> TorusFun:
    """Multiplicative inverse by Newton-Schulz iteration started at the mean."""
    _require_square(f)
    avg = np.asarray(f.coeffs[(...,) + f._zero_index()])
    if f.is_matrix:
        if abs(np.linalg.det(avg)) == 0:
            raise DomainError("mean matrix is singular; cannot seed the inverse")
        X = TorusFun.constant(np.linalg.inv(avg), f.dim, f.K)
    else:
        if avg == 0:
            raise DomainError("function has zero mean; cannot seed the inverse")
        X = TorusFun.constant(1.0 / avg, f.dim, f.K)
    one = _unit(f)
    prev = math.inf
    history = []
    for _ in range(max_iter):
        R = one - mul(f, X)
        r = R.norm()
        history.append(r)
        if r <= tol:
            return X
        if r >= 1.0 and r >= prev:
            raise DomainError(f"function is not invertible within the Fourier algebra (residual {r:.3g})")
        if r >= prev and r < 1e-13:
            return X
        prev = r
        X = X + mul(X, R)
    raise ConvergenceError("Newton-Schulz inverse did not converge", history)


def mat_log(f: TorusFun, check: bool = True) -> TorusFun:
    """Principal logarithm for ||f - id||_0 < 1, via log f = 2 artanh((f - 1)(f + 1)^-1).

    ``check=False`` skips the grid test of the domain condition.
    """
    _require_square(f)
    one = _unit(f)
    Z = f - one
    if check:
        dist = Z.sup_norm()
        if dist >= 1.0:
            raise DomainError(f"log needs ||f - id||_0 < 1, got {dist:.6g}")
    if Z.norm() == 0:
        return Z
    W = mul(Z, inverse(f + one))
    W2 = mul(W, W)
    total, term = W, W
    for n in range(1, MAX_SERIES_TERMS):
        term = mul(term, W2)
        piece = term * (1.0 / (2 * n + 1))
        total = total + piece
        if piece.norm() <= SERIES_TOL * max(1.0, total.norm()):
            break
    else:
        raise ConvergenceError("logarithm series did not converge")
    return total * 2.0


exp = mat_exp
log = mat_log


def average(f: TorusFun):
    return f.average()
