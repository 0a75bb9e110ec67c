"""Conversions between divergence-form difference operators and Jacobi form.

Elliptic form:  (L u)(n) = D*(A1 D u) + A2 D* u + W u,  with
Du(n) = u(n+1) - u(n) and D*u(n) = u(n) - u(n-1), coefficients taken at n*w.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cocycle import JacobiOp, _dense_grid
from .errors import DomainError, StructuralError
from .frequency import Frequency
from .torus_fourier import TorusFun, default_budget

SELF_ADJOINT_TOL = 1e-14


@dataclass(frozen=True)
class EllipticOp:
    A1: TorusFun
    A2: TorusFun
    W: TorusFun
    omega: Frequency

    def __post_init__(self):
        if not isinstance(self.omega, Frequency):
            object.__setattr__(self, "omega", Frequency(self.omega))
        dims = {self.A1.dim, self.A2.dim, self.W.dim, self.omega.dim}
        if len(dims) != 1:
            raise StructuralError(f"inconsistent torus dimensions {sorted(dims)}")
        K = max(self.A1.K, self.A2.K, self.W.K)
        for name in ("A1", "A2", "W"):
            object.__setattr__(self, name, getattr(self, name).with_budget(K))

    @classmethod
    def build(cls, omega, A1, A2=0.0, W=0.0, K=None):
        omega = omega if isinstance(omega, Frequency) else Frequency(omega)
        K = default_budget(omega.dim) if K is None else K

        def coerce(f):
            return f if isinstance(f, TorusFun) else TorusFun.constant(f, omega.dim, K)

        return cls(coerce(A1), coerce(A2), coerce(W), omega)

    @property
    def dim(self) -> int:
        return self.omega.dim

    @property
    def K(self) -> int:
        return self.A1.K

    def validate(self, grid=None) -> dict:
        """Grid minima of A1 and A1(. - w) - A2; raises if either is not positive."""
        grid = grid or _dense_grid(self.dim)
        a1 = np.real(self.A1.grid_values(grid))
        back = np.real((self.A1.shift(self.omega, -1) - self.A2).grid_values(grid))
        if a1.min() <= 0:
            raise DomainError(f"A1 is not positive (min {a1.min():.3g})")
        if back.min() <= 0:
            raise DomainError(f"A1(. - w) - A2 is not positive (min {back.min():.3g})")
        return {"min_A1": float(a1.min()), "min_backward": float(back.min())}

    def apply(self, u, n0: int = 0):
        """(L u)(n) on interior sites n0+1 .. n0+len(u)-2."""
        u = np.asarray(u)
        n1 = n0 + len(u) - 1
        a1 = np.real(self.A1.eval_orbit(self.omega, n0, n1))
        a2 = np.real(self.A2.eval_orbit(self.omega, n0 + 1, n1 - 1))
        w = np.real(self.W.eval_orbit(self.omega, n0 + 1, n1 - 1))
        Du = np.diff(u)
        flux = a1[:-1] * Du
        div = np.diff(flux)
        back = u[1:-1] - u[:-2]
        return div + a2 * back + w * u[1:-1]

    def adjoint_apply(self, u, n0: int = 0):
        """(L* u)(n) = D*(A1 D u) - D(A2 u) + W u on interior sites."""
        u = np.asarray(u)
        n1 = n0 + len(u) - 1
        a1 = np.real(self.A1.eval_orbit(self.omega, n0, n1))
        a2 = np.real(self.A2.eval_orbit(self.omega, n0, n1))
        w = np.real(self.W.eval_orbit(self.omega, n0 + 1, n1 - 1))
        div = np.diff(a1[:-1] * np.diff(u))
        a2u = a2 * u
        return div - (a2u[2:] - a2u[1:-1]) + w * u[1:-1]

    def shifted(self, c: float) -> "EllipticOp":
        return EllipticOp(self.A1, self.A2, self.W + c, self.omega)

    def rescaled(self, h: float) -> "EllipticOp":
        return EllipticOp(self.A1 * h, self.A2 * h, self.W * h, self.omega)

    def to_json_dict(self) -> dict:
        return {
            "omega": self.omega.to_json_dict(),
            "K": self.K,
            "A1": self.A1.to_json_dict(),
            "A2": self.A2.to_json_dict(),
            "W": self.W.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EllipticOp":
        omega = Frequency.from_json_dict(data["omega"])
        K = int(data.get("K") or default_budget(omega.dim))

        def fun(name, default=0.0):
            entry = data.get(name, default)
            if isinstance(entry, (int, float)):
                return TorusFun.constant(float(entry), omega.dim, K)
            entry = dict(entry)
            entry.setdefault("dim", omega.dim)
            return TorusFun.from_json_dict(entry, K)

        return cls(fun("A1", 1.0), fun("A2"), fun("W"), omega)


def jacobi_constants(a1_mean: float, a2_mean: float) -> tuple:
    """(g, h) with e^-g = sqrt(a1 / (a1 - a2)) and h = sqrt((a1 - a2) a1)."""
    if a1_mean <= 0 or a1_mean - a2_mean <= 0:
        raise DomainError("need <A1> > 0 and <A1> - <A2> > 0")
    g = -0.5 * math.log(a1_mean / (a1_mean - a2_mean))
    h = math.sqrt((a1_mean - a2_mean) * a1_mean)
    return g, h


def to_jacobi(e: EllipticOp) -> tuple:
    """(op, h) with (1/h) L_elliptic = op as operators on sequences."""
    a1 = float(np.real(e.A1.average()))
    a2 = float(np.real(e.A2.average()))
    g, h = jacobi_constants(a1, a2)
    A1m = e.A1.shift(e.omega, -1)
    W1 = e.A1 - a1
    W2 = A1m - e.A2 - a1 + a2
    V = e.W - e.A1 + e.A2 - A1m
    op = JacobiOp(g, W1 * (1 / h), W2 * (1 / h), V * (1 / h), e.omega)
    return op, h


def from_jacobi(op: JacobiOp) -> EllipticOp:
    """Elliptic coefficients (a, b, c) of a Jacobi operator (including its scale)."""
    eg, emg = math.exp(op.g), math.exp(-op.g)
    a = emg + op.W1
    b = emg - eg + op.W1.shift(op.omega, -1) - op.W2
    c = op.V + op.W1 + op.W2 + emg + eg
    out = EllipticOp(a * op.scale, b * op.scale, c * op.scale, op.omega)
    if b.norm() < SELF_ADJOINT_TOL:
        warnings.warn("drift coefficient vanishes identically (self-adjoint-like case)", RuntimeWarning)
    return out


def is_self_adjoint_like(e: EllipticOp) -> bool:
    return e.A2.norm() < SELF_ADJOINT_TOL
