"""Discrete Fisher-KPP evolution u_t = D*(a D u) + b D* u + c u - u^2 and its steady state.

Coefficients are the three functions of an ``EllipticOp`` (a = A1, b = A2,
c = W) sampled along the orbit n*w.  Fields live on a window [n0, n1] with
frozen ghost values at n0 - 1 and n1 + 1 taken from the almost-periodic
extension of the initial data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic_bridge import EllipticOp
from .errors import ConvergenceError, StabilityError
from .frequency import Frequency
from .torus_fourier import TorusFun, _geometry

MONOTONE_SLACK = 1e-12
DT_SAFETY = 0.4


@dataclass(frozen=True)
class LatticeField:
    n0: int
    values: np.ndarray
    left: float = 0.0
    right: float = 0.0
    t: float = 0.0

    @property
    def n1(self) -> int:
        return self.n0 + len(self.values) - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n0, self.n1 + 1)

    @classmethod
    def constant(cls, value: float, N: int) -> "LatticeField":
        return cls(-N, np.full(2 * N + 1, float(value)), float(value), float(value))

    @classmethod
    def from_torus(cls, f: TorusFun, omega, N: int, factor: float = 1.0) -> "LatticeField":
        vals = factor * np.real(f.eval_orbit(omega, -N - 1, N + 1))
        return cls(-N, vals[1:-1].copy(), float(vals[0]), float(vals[-1]))

    def padded(self) -> np.ndarray:
        return np.concatenate([[self.left], self.values, [self.right]])

    def sup(self) -> float:
        return float(max(np.max(np.abs(self.values)), abs(self.left), abs(self.right)))


class KPPModel:
    """Coefficient arrays of one window, cached for repeated stepping."""

    def __init__(self, coeffs: EllipticOp, n0: int, n1: int):
        self.coeffs = coeffs
        self.n0, self.n1 = n0, n1
        om = coeffs.omega
        self.a = np.real(coeffs.A1.eval_orbit(om, n0 - 1, n1))  # a(n) for n = n0-1 .. n1
        self.b = np.real(coeffs.A2.eval_orbit(om, n0, n1))
        self.c = np.real(coeffs.W.eval_orbit(om, n0, n1))
        self.sup_a = float(np.max(np.abs(self.a)))
        self.sup_b = float(np.max(np.abs(self.b)))
        self.sup_c = float(np.max(np.abs(self.c)))

    def linear(self, up: np.ndarray) -> np.ndarray:
        """D*(a D u) + b D* u + c u on the window from the padded field."""
        flux = self.a * np.diff(up)
        u = up[1:-1]
        return np.diff(flux) + self.b * (u - up[:-2]) + self.c * u

    def rhs(self, up: np.ndarray) -> np.ndarray:
        u = up[1:-1]
        return self.linear(up) - u * u

    def dt_max(self, sup_u: float) -> float:
        return DT_SAFETY / (2 * self.sup_a + self.sup_b + self.sup_c + 2 * sup_u)

    def step(self, u: LatticeField, dt: float, sup_u: float | None = None) -> LatticeField:
        bound = self.dt_max(u.sup() if sup_u is None else sup_u)
        if dt > bound:
            raise StabilityError(f"dt = {dt:.4g} exceeds the explicit bound {bound:.4g}")
        up = u.padded()
        new = u.values + dt * self.rhs(up)
        return replace(u, values=new, t=u.t + dt)


def dt_max(u: LatticeField, coeffs: EllipticOp) -> float:
    """0.4 / (2 sup a + sup|b| + sup|c| + 2 sup|u|) over the window."""
    return KPPModel(coeffs, u.n0, u.n1).dt_max(u.sup())


def step(u: LatticeField, dt: float, coeffs: EllipticOp) -> LatticeField:
    """One explicit Euler step of the lattice KPP equation."""
    return KPPModel(coeffs, u.n0, u.n1).step(u, dt)


def kpp_residual(u: LatticeField, coeffs: EllipticOp, model: KPPModel | None = None) -> np.ndarray:
    model = model or KPPModel(coeffs, u.n0, u.n1)
    return model.rhs(u.padded())


@dataclass
class SteadyState:
    u0: LatticeField
    residual: float
    gap: float
    window_defect: float | None
    sandwich_ok: bool
    monotone_violations: int
    steps: int
    M: float
    eps: float
    interior: int
    upper: LatticeField
    lower: LatticeField
    notes: dict = field(default_factory=dict)

    def interior_values(self) -> tuple:
        sel = np.abs(self.u0.sites) <= self.interior
        return self.u0.sites[sel], self.u0.values[sel]


def _evolve_pair(model, upper, lower, dt, tol, max_steps):
    violations = 0
    worst = 0.0
    for k in range(1, max_steps + 1):
        nu = model.step(upper, dt, sup_u=upper.sup())
        nl = model.step(lower, dt, sup_u=upper.sup())
        du = nu.values - upper.values
        dl = nl.values - lower.values
        if du.max() > MONOTONE_SLACK or dl.min() < -MONOTONE_SLACK or np.any(nl.values > nu.values + MONOTONE_SLACK):
            violations += 1
            worst = max(worst, float(du.max()), float(-dl.min()))
        upper, lower = nu, nl
        if np.max(np.abs(du)) < tol and np.max(np.abs(dl)) < tol:
            return upper, lower, k, violations, worst
    raise ConvergenceError(f"no steady state after {max_steps} steps")


def steady_state(coeffs: EllipticOp, E0: float, p: TorusFun, M: float | None = None, eps: float | None = None,
                 N: int = 2048, dt: float | None = None, tol: float = 1e-10, max_steps: int = 200_000,
                 check_window: bool = True) -> SteadyState:
    """Common limit of the evolutions from the supersolution M and the subsolution eps*p."""
    if E0 <= 0:
        raise ValueError("the steady-state sandwich needs E0 > 0")
    om = coeffs.omega
    c_sup = float(np.max(np.real(coeffs.W.grid_values())))
    pv = np.real(p.grid_values())
    if pv.min() <= 0:
        raise ValueError("the subsolution profile p must be positive")
    M = c_sup + 0.5 if M is None else float(M)
    if M <= c_sup:
        raise ValueError(f"M = {M} must exceed sup c = {c_sup:.6g}")
    eps = 0.5 * min(M, E0) / pv.max() if eps is None else float(eps)
    model = KPPModel(coeffs, -N, N)
    upper = LatticeField.constant(M, N)
    lower = LatticeField.from_torus(p, om, N, eps)
    dt = model.dt_max(M) if dt is None else dt
    upper, lower, steps, violations, worst = _evolve_pair(model, upper, lower, dt, tol, max_steps)
    interior = N // 2
    sel = np.abs(upper.sites) <= interior
    gap = float(np.max(np.abs(upper.values[sel] - lower.values[sel])))
    if gap > 1e-6:
        raise ConvergenceError(f"upper and lower limits differ by {gap:.3g} on the interior")
    u0 = replace(upper, values=0.5 * (upper.values + lower.values))
    res = float(np.max(np.abs(model.rhs(u0.padded())[sel])))
    inner = u0.values[sel]
    sandwich = bool(eps * pv.min() <= inner.min() + 1e-12 and inner.max() <= M + 1e-12)
    window_defect = None
    if check_window:
        big = steady_state(coeffs, E0, p, M, eps, 2 * N, dt, tol, max_steps, check_window=False)
        sb = np.abs(big.u0.sites) <= interior
        window_defect = float(np.max(np.abs(big.u0.values[sb] - inner)))
    notes = {"worst_monotone_excess": worst, "dt": dt}
    return SteadyState(u0, res, gap, window_defect, sandwich, violations, steps, M, eps, interior, upper, lower, notes)


# -------------------------------------------------------- almost periodicity
@dataclass
class PeriodicityReport:
    shifts: list
    coefficient_defects: list
    solution_defects: list
    modulus: float | None
    fourier_error: float
    fourier_modes: int


def _near_periods(omega: Frequency, m_max: int) -> list:
    """Record minima of ||m w|| for 1 <= m <= m_max (the convergent denominators when d = 1)."""
    w = np.asarray(omega.vector, dtype=np.longdouble)
    best = math.inf
    out = []
    for m in range(1, m_max + 1):
        x = w * m
        dist = float(np.max(np.abs(x - np.round(x))))
        if dist < best:
            best = dist
            out.append(m)
        if dist == 0.0:
            break
    return out


def check_almost_periodicity(ss: SteadyState, coeffs: EllipticOp, shifts=None, m_max: int | None = None,
                             fit_K: int = 16) -> PeriodicityReport:
    """Shift defects of u0 against coefficient near-periods, plus a torus-function fit."""
    om = coeffs.omega
    sites, vals = ss.interior_values()
    span = len(sites)
    m_max = span // 2 if m_max is None else m_max
    shifts = _near_periods(om, m_max) if shifts is None else list(shifts)
    coeff_def, sol_def = [], []
    for m in shifts:
        d = 0.0
        for f in (coeffs.A1, coeffs.A2, coeffs.W):
            d = max(d, (f.shift(om, m) - f).sup_norm())
        coeff_def.append(float(d))
        sol_def.append(float(np.max(np.abs(vals[m:] - vals[:-m]))) if 0 < m < span else float("nan"))
    ratios = [s / math.sqrt(c) for s, c in zip(sol_def, coeff_def) if c > 0 and np.isfinite(s)]
    modulus = max(ratios) if ratios else None
    # least-squares torus fit along the orbit
    K = min(fit_K, coeffs.K)
    geom = _geometry(om.dim, K)
    modes = [tuple(int(i - m) for i, m in zip(idx, geom.half)) for idx in zip(*np.nonzero(geom.mask))]
    kw = np.asarray(modes, dtype=np.longdouble) @ np.asarray(om.vector, dtype=np.longdouble)
    phase = np.multiply.outer(sites.astype(np.longdouble), kw)
    basis = np.exp(2j * np.pi * (phase - np.floor(phase)).astype(float))
    coef, *_ = np.linalg.lstsq(basis, vals.astype(complex), rcond=None)
    err = float(np.max(np.abs(basis @ coef - vals)))
    return PeriodicityReport(list(shifts), coeff_def, sol_def, modulus, err, len(modes))
