"""Jacobi operators, their transfer-matrix cocycles and the constant hyperbolic part.

The operator acts on sequences by

    (L u)(n) = h * [ (e^-g + W1(n w)) u(n+1) + (e^g + W2(n w)) u(n-1) + V(n w) u(n) ]

with ``h`` an overall positive scale (1 unless stated).  Eigen-solutions of
L u = E u satisfy (u(n+1), u(n)) = S(n w) (u(n), u(n-1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, StructuralError
from .frequency import Frequency
from .torus_fourier import TorusFun, default_budget, inverse


@dataclass(frozen=True)
class JacobiOp:
    g: float
    W1: TorusFun
    W2: TorusFun
    V: TorusFun
    omega: Frequency
    scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.omega, Frequency):
            object.__setattr__(self, "omega", Frequency(self.omega))
        dims = {self.W1.dim, self.W2.dim, self.V.dim, self.omega.dim}
        if len(dims) != 1:
            raise StructuralError(f"inconsistent torus dimensions {sorted(dims)}")
        if any(f.is_matrix for f in (self.W1, self.W2, self.V)):
            raise StructuralError("operator coefficients must be scalar functions")
        if self.scale <= 0:
            raise DomainError("operator scale must be positive")
        K = max(self.W1.K, self.W2.K, self.V.K)
        for name in ("W1", "W2", "V"):
            object.__setattr__(self, name, getattr(self, name).with_budget(K))

    @classmethod
    def build(cls, g, omega, V=None, W1=None, W2=None, K=None, scale=1.0):
        omega = omega if isinstance(omega, Frequency) else Frequency(omega)
        K = default_budget(omega.dim) if K is None else K
        zero = TorusFun.zeros(omega.dim, K)

        def coerce(f):
            if f is None:
                return zero
            if isinstance(f, TorusFun):
                return f
            return TorusFun.constant(f, omega.dim, K)

        return cls(float(g), coerce(W1), coerce(W2), coerce(V), omega, float(scale))

    @property
    def dim(self) -> int:
        return self.omega.dim

    @property
    def K(self) -> int:
        return self.V.K

    @property
    def forward(self) -> TorusFun:
        """Coefficient of u(n+1): e^-g + W1."""
        return math.exp(-self.g) + self.W1

    @property
    def backward(self) -> TorusFun:
        """Coefficient of u(n-1): e^g + W2."""
        return math.exp(self.g) + self.W2

    def perturbation_size(self) -> float:
        """||W1||_0 + ||W2||_0 + ||V - <V>||_0."""
        Vc = self.V - self.V.average()
        return self.W1.sup_norm() + self.W2.sup_norm() + Vc.sup_norm()

    def hopping_report(self, grid=None) -> dict:
        """Minimum of both hopping coefficients on a grid and the sup-norm criterion."""
        grid = grid or _dense_grid(self.dim)
        fw = np.real(self.forward.grid_values(grid))
        bw = np.real(self.backward.grid_values(grid))
        bound = math.exp(-abs(self.g))
        return {
            "min_forward": float(fw.min()),
            "min_backward": float(bw.min()),
            "sup_bound_ok": bool(self.W1.sup_norm() < bound and self.W2.sup_norm() < bound),
        }

    def shifted(self, c: float) -> "JacobiOp":
        return replace(self, V=self.V + c)

    def rescaled(self, h: float) -> "JacobiOp":
        return replace(self, scale=self.scale * h)

    def reflected(self) -> "JacobiOp":
        """Conjugation by u(n) -> u(-n): g -> -g, W1 <-> W2(-.), V -> V(-.)."""
        return JacobiOp(-self.g, self.W2.reflect(), self.W1.reflect(), self.V.reflect(), self.omega, self.scale)

    def adjoint(self) -> "JacobiOp":
        """Transpose on l^2(Z): g -> -g, W1 -> W2(. + w), W2 -> W1(. - w)."""
        return JacobiOp(
            -self.g,
            self.W2.shift(self.omega, 1),
            self.W1.shift(self.omega, -1),
            self.V,
            self.omega,
            self.scale,
        )

    def coefficients_on_orbit(self, n0: int, n1: int):
        """(forward, backward, V) evaluated at n*w for n = n0..n1."""
        a = np.real(self.forward.eval_orbit(self.omega, n0, n1))
        b = np.real(self.backward.eval_orbit(self.omega, n0, n1))
        v = np.real(self.V.eval_orbit(self.omega, n0, n1))
        return a, b, v

    def apply(self, u, n0: int = 0):
        """(L u)(n) for interior sites n0+1 .. n0+len(u)-2 of a finite sequence."""
        u = np.asarray(u)
        n1 = n0 + len(u) - 1
        a, b, v = self.coefficients_on_orbit(n0 + 1, n1 - 1)
        return self.scale * (a * u[2:] + b * u[:-2] + v * u[1:-1])

    def to_json_dict(self) -> dict:
        return {
            "g": self.g,
            "scale": self.scale,
            "omega": self.omega.to_json_dict(),
            "K": self.K,
            "W1": self.W1.to_json_dict(),
            "W2": self.W2.to_json_dict(),
            "V": self.V.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "JacobiOp":
        omega = Frequency.from_json_dict(data["omega"])
        K = int(data.get("K") or default_budget(omega.dim))

        def fun(name):
            entry = data.get(name)
            if entry is None:
                return TorusFun.zeros(omega.dim, K)
            if isinstance(entry, (int, float)):
                return TorusFun.constant(float(entry), omega.dim, K)
            entry = dict(entry)
            entry.setdefault("dim", omega.dim)
            return TorusFun.from_json_dict(entry, K)

        return cls(float(data["g"]), fun("W1"), fun("W2"), fun("V"), omega, float(data.get("scale", 1.0)))


def _dense_grid(dim: int):
    return (1024,) if dim == 1 else (128,) * dim


@dataclass(frozen=True)
class ConstantPart:
    E: float
    g: float
    lam: float
    mu: float
    P: np.ndarray

    @property
    def A(self) -> np.ndarray:
        """A_g(E) = [[E e^g, -e^2g], [1, 0]]."""
        return np.array([[self.E * math.exp(self.g), -math.exp(2 * self.g)], [1.0, 0.0]])

    @property
    def Pinv(self) -> np.ndarray:
        return np.linalg.inv(self.P)

    @property
    def ratio_gap(self) -> float:
        """|lambda/mu - 1|."""
        return abs(self.lam / self.mu - 1.0)

    @property
    def inverse_ratio_gap(self) -> float:
        """|mu/lambda - 1|."""
        return abs(self.mu / self.lam - 1.0)

    def in_interval(self) -> bool:
        lo, hi = search_interval(self.g)
        return lo <= self.E <= hi

    def to_json_dict(self) -> dict:
        return {
            "E": self.E,
            "g": self.g,
            "lambda": self.lam,
            "mu": self.mu,
            "separation_lambda_over_mu": self.ratio_gap,
            "separation_mu_over_lambda": self.inverse_ratio_gap,
            "in_interval": self.in_interval(),
        }


def search_interval(g: float) -> tuple:
    """[2 + min(g^2, 1)/9, 2(e^g + e^-g)]."""
    return 2.0 + min(g * g, 1.0) / 9.0, 2.0 * (math.exp(g) + math.exp(-g))


def nonresonance_threshold(g: float) -> float:
    return min(g * g, 1.0) / 27.0


def eigen_split(E: float, g: float) -> ConstantPart:
    """Eigenvalues lambda < mu of A_g(E) and its diagonaliser P = [[lambda, mu], [1, 1]]."""
    if E < 2.0:
        raise DomainError(f"A_g(E) has complex eigenvalues for E = {E} < 2")
    s = math.sqrt(E * E - 4.0)
    lam = 2.0 * math.exp(g) / (E + s)
    mu = math.exp(g) * (E + s) / 2.0
    P = np.array([[lam, mu], [1.0, 1.0]])
    return ConstantPart(float(E), float(g), lam, mu, P)


def _checked_hopping(op: JacobiOp):
    grid = _dense_grid(op.dim)
    for name, f in (("forward", op.forward), ("backward", op.backward)):
        vals = np.real(f.grid_values(grid))
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[idx] <= 0:
            theta = tuple(i / n for i, n in zip(idx, grid))
            raise DomainError(f"{name} hopping coefficient vanishes near theta={theta} (value {vals[idx]:.3g})")


def transfer_matrix(op: JacobiOp, E) -> TorusFun:
    """S(theta) = [[(E/h - V)/a, -b/a], [1, 0]] with a, b the forward/backward hoppings."""
    _checked_hopping(op)
    inv_a = inverse(op.forward)
    e = E / op.scale
    top_left = (e - op.V) * inv_a
    top_right = -(op.backward * inv_a)
    return TorusFun.from_entries([[top_left, top_right], [1.0, 0.0]])


def transfer_matrices_on_orbit(op: JacobiOp, E, n0: int, n1: int) -> np.ndarray:
    """Pointwise S(n w), n = n0..n1, shape (n, 2, 2)."""
    a, b, v = op.coefficients_on_orbit(n0, n1)
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("hopping coefficient vanishes on the orbit")
    e = E / op.scale
    S = np.zeros((len(a), 2, 2), dtype=np.result_type(e, float))
    S[:, 0, 0] = (e - v) / a
    S[:, 0, 1] = -b / a
    S[:, 1, 0] = 1.0
    return S


def lyapunov_estimate(op: JacobiOp, E, n: int, samples: int = 8, seed: int = 0, burn_in=None) -> float:
    """Top Lyapunov exponent from renormalised products along the orbit.

    The first ``burn_in`` steps (default min(n/10, 1000)) align the vector with
    the expanding direction and are excluded from the growth average.
    """
    if n < 1:
        raise StructuralError("n must be >= 1")
    burn = min(n // 10, 1000) if burn_in is None else burn_in
    rng = np.random.default_rng(seed)
    theta0 = rng.random((samples, op.dim))
    a_f, b_f, v_f = op.forward, op.backward, op.V
    steps = np.arange(n + burn).astype(np.longdouble)
    w = np.asarray(op.omega.vector, dtype=np.longdouble)
    e = E / op.scale
    total = 0.0
    for t0 in theta0:
        pts = np.multiply.outer(steps, w) + t0.astype(np.longdouble)
        pts = pts - np.floor(pts)
        a = np.real(a_f(pts))
        b = np.real(b_f(pts))
        v = np.real(v_f(pts))
        s11 = (e - v) / a
        s12 = -b / a
        x, y = 1.0 + 0j * e, 0.3
        growth = 0.0
        for j in range(n + burn):
            x, y = s11[j] * x + s12[j] * y, x
            nrm = math.hypot(abs(x), abs(y))
            x, y = x / nrm, y / nrm
            if j >= burn:
                growth += math.log(nrm)
        total += growth / n
    return total / samples
