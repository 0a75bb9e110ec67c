"""Homogenization of the eps-scaled discrete parabolic problem around a ground state.

The lattice problem is  u_t = eps^-2 L u  on sites n (position z = eps n), with
L the elliptic operator D*(A1 D u) + A2 D* u + W u.  Writing
u = exp(E0 t / eps^2) p(n) v(t, n) turns it into

    Q v_t = eps^-2 [ D*(a D v) + c (D + D*) v ],   Q = p p*,

whose solutions, read in the frame moving with speed -l / eps, converge to the
solution of  <Q> u0_t = a_bar u0_zz  with u0(0) = phi / <Q>.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .elliptic_bridge import EllipticOp
from .errors import ConsistencyError, DomainError, IllConditionedError, StabilityError, WindowError
from .reducibility import solve_cohomological
from .torus_fourier import TorusFun, _geometry, inverse

OSCILLATION_TOL = 1e-8
OSCILLATION_FAIL = 1e-6
CELL_GRID = 512
CELL_RESIDUAL_TOL = 1e-8
CELL_FAIL = 1e-6
CONDITION_LIMIT = 1e12
FORMULA_TOL = 1e-8
FORMULA_FAIL = 1e-6
CFL = 0.2
WINDOW_CHANGE = 0.1


def _grid(dim: int):
    return (CELL_GRID,) if dim == 1 else (64,) * dim


def _mean(*funs, grid) -> float:
    vals = np.ones(grid)
    for f in funs:
        vals = vals * np.real(f.grid_values(grid))
    return float(vals.mean())


@dataclass
class CellData:
    Q: TorusFun
    a_tilde: TorusFun
    c_bar: float
    l: float
    c0: float
    E0: float
    P: TorusFun
    P_star: TorusFun
    omega: object
    c_tilde_oscillation: float
    N: TorusFun | None = None
    a_bar: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def Q_mean(self) -> float:
        return float(np.real(self.Q.average()))

    def to_json_dict(self) -> dict:
        return {
            "E0": self.E0,
            "c_bar": self.c_bar,
            "l": self.l,
            "c0": self.c0,
            "a_bar": self.a_bar,
            "Q_mean": self.Q_mean,
            "inf_a_tilde": float(np.real(self.a_tilde.grid_values(_grid(self.a_tilde.dim))).min()),
            "c_tilde_oscillation": self.c_tilde_oscillation,
            "N_mean": None if self.N is None else float(np.real(self.N.average())),
            **self.notes,
        }


def assemble_cell_data(e: EllipticOp, gs) -> CellData:
    """Q = P P*, the reduced diffusion a~ and the constant drift c~/2 from the ground states."""
    if gs.P_star is None:
        raise ValueError("the ground state must include the adjoint eigenfunction")
    om = e.omega
    P = gs.P * (1.0 / float(np.real(gs.P.average())))
    Ps = gs.P_star * (1.0 / float(np.real(gs.P_star.average())))
    K = max(e.K, P.K, Ps.K)
    P, Ps = P.with_budget(K), Ps.with_budget(K)
    A1, A2 = e.A1.with_budget(K), e.A2.with_budget(K)
    grid = _grid(e.dim)
    Pp, Psp = P.shift(om, 1), Ps.shift(om, 1)
    Pm, Psm = P.shift(om, -1), Ps.shift(om, -1)
    A1P, A1Ps, A2Ps = A1 * P, A1 * Ps, A2 * Ps
    a_t = 0.5 * (A1P * Psp - A2Ps.shift(om, 1) * P + A1Ps * Pp)
    c_t = A1Ps.shift(om, -1) * P - A1P.shift(om, -1) * Ps + A2Ps * Pm
    cv = np.real(c_t.grid_values(grid))
    osc = float(cv.max() - cv.min())
    if osc > OSCILLATION_FAIL:
        raise ConsistencyError(f"drift term c~ is not constant (oscillation {osc:.3g}): inconsistent ground states")
    c_bar = 0.5 * float(cv.mean())
    Q = P * Ps
    qm = float(np.real(Q.average()))
    a_inf = float(np.real(a_t.grid_values(grid)).min())
    if a_inf <= abs(c_bar):
        raise DomainError(f"inf a~ = {a_inf:.6g} does not exceed |c_bar| = {abs(c_bar):.6g}")
    notes = {"inf_a_tilde": a_inf, "c_tilde_within_tol": osc <= OSCILLATION_TOL}
    return CellData(Q, a_t.real_part(), c_bar, 2 * c_bar / qm, 1.0 / qm, float(gs.E0), P, Ps, om, osc,
                    notes=notes)


# ------------------------------------------------------------- cell problem
def cell_residual(cd: CellData, N: TorusFun, grid=None) -> float:
    """sup of |D*(a~ DN) + c (D + D*)N + D*a~ + 2c - l Q| on a grid."""
    om = cd.omega
    grid = grid or _grid(N.dim)
    val = lambda f: np.real(f.grid_values(grid))  # noqa: E731
    Nv, Np, Nm = val(N), val(N.shift(om, 1)), val(N.shift(om, -1))
    a, am = val(cd.a_tilde), val(cd.a_tilde.shift(om, -1))
    q = val(cd.Q)
    r = a * (Np - Nv) - am * (Nv - Nm) + cd.c_bar * (Np - Nm) + (a - am) + 2 * cd.c_bar - cd.l * q
    return float(np.max(np.abs(r)))


def _mode_list(dim: int, K: int):
    geom = _geometry(dim, K)
    idx = np.argwhere(geom.mask)
    return geom, idx - np.asarray(geom.half)


def _galerkin(A: TorusFun, rhs: TorusFun, c_bar: float, omega) -> tuple:
    """Solve A (N(.+w) - N) + 2 c_bar N = rhs over the coefficient box of rhs."""
    K = rhs.K
    geom, modes = _mode_list(rhs.dim, K)
    box = np.asarray(geom.half)
    A = A.with_budget(K)
    Ac = A.coeffs
    n = len(modes)
    diff = modes[:, None, :] - modes[None, :, :]
    inside = np.all(np.abs(diff) <= box, axis=-1)
    idx = tuple(np.clip(diff[..., j] + box[j], 0, 2 * box[j]) for j in range(rhs.dim))
    T = np.where(inside, Ac[idx], 0.0)
    phase = omega.cohomology_divisors(K)[tuple((modes + box).T)]
    M = T * phase[None, :] + 2 * c_bar * np.eye(n)
    b = rhs.coeffs[tuple((modes + box).T)]
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(f"cell system condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}")
    x = np.linalg.solve(M, b)
    c = np.zeros_like(rhs.coeffs)
    c[tuple((modes + box).T)] = x
    return TorusFun(c, K).real_part(), cond


def solve_cell_problem(cd: CellData, full_output: bool = False):
    """Corrector N of  D*(a~ DN) + c (D + D*)N + D*a~ + 2c - l Q = 0."""
    om = cd.omega
    a = cd.a_tilde
    F = cd.l * cd.Q - (a - a.shift(om, -1)) - 2 * cd.c_bar
    if abs(float(np.real(F.average()))) > 1e-10:
        raise ConsistencyError(f"<F> = {float(np.real(F.average())):.3g} is not zero")
    # Y - Y(. - w) = F
    Y0 = solve_cohomological(F.shift(om, 1), om).real_part()
    A = a + cd.c_bar
    Ainv = inverse(A)
    cprime = -float(np.real((Y0 * Ainv).average())) / float(np.real(Ainv.average()))
    info = {"c_prime": cprime}
    if abs(cd.c_bar) < 1e-15:
        Z = (Y0 + cprime) * Ainv
        N = solve_cohomological(Z, om).real_part()
        info["route"] = "two-division"
    else:
        N, cond = _galerkin(A, Y0 + cprime, cd.c_bar, om)
        info["route"] = "galerkin"
        info["condition"] = cond
    res = cell_residual(cd, N)
    info["residual"] = res
    info["N_mean"] = float(np.real(N.average()))
    if res > CELL_FAIL:
        raise ConsistencyError(f"cell equation residual {res:.3g} exceeds {CELL_FAIL:.0e}")
    if res > CELL_RESIDUAL_TOL:
        warnings.warn(f"cell equation residual {res:.3g} above {CELL_RESIDUAL_TOL:.0e}", RuntimeWarning)
    cd.N = N
    cd.notes.update({f"cell_{k}": v for k, v in info.items()})
    return (N, info) if full_output else N


def averaged_coefficient(cd: CellData, N: TorusFun | None = None) -> tuple:
    """(a_bar, c0): a_bar by the linear and the quadratic formula, which must agree."""
    N = cd.N if N is None else N
    if N is None:
        raise ValueError("solve the cell problem first")
    grid = _grid(N.dim)
    DN = N.shift(cd.omega, 1) - N
    one_DN = 1.0 + DN
    linear = _mean(cd.a_tilde, one_DN, grid=grid) + _mean(2 * cd.c_bar - cd.l * cd.Q, N, grid=grid)
    quadratic = _mean(cd.a_tilde, one_DN, one_DN, grid=grid)
    gap = abs(linear - quadratic)
    if gap > FORMULA_FAIL:
        raise ConsistencyError(f"the two a_bar formulas disagree by {gap:.3g}: invalid cell solution")
    cd.a_bar = quadratic
    cd.notes.update({"a_bar_linear": linear, "a_bar_quadratic": quadratic, "a_bar_gap": gap})
    return quadratic, cd.c0


def homogenize(e: EllipticOp, gs) -> CellData:
    cd = assemble_cell_data(e, gs)
    solve_cell_problem(cd)
    averaged_coefficient(cd)
    return cd


def reduction_defect(e: EllipticOp, cd: CellData, u, n0: int = 0) -> float:
    """max |p*(L - E0)(p u) - [D*(a~ Du) + c (D + D*)u]| over interior sites."""
    u = np.asarray(u, dtype=float)
    n1 = n0 + len(u) - 1
    om = e.omega
    p = np.real(cd.P.eval_orbit(om, n0, n1))
    ps = np.real(cd.P_star.eval_orbit(om, n0 + 1, n1 - 1))
    lhs = ps * (e.apply(p * u, n0) - cd.E0 * (p * u)[1:-1])
    return float(np.max(np.abs(lhs - reduced_apply(cd, u, n0))))


def reduced_apply(cd: CellData, u, n0: int = 0) -> np.ndarray:
    """D*(a~ Du) + c (D + D*)u on interior sites n0+1 .. n0+len(u)-2."""
    u = np.asarray(u, dtype=float)
    n1 = n0 + len(u) - 1
    a = np.real(cd.a_tilde.eval_orbit(cd.omega, n0, n1 - 1))
    flux = a * np.diff(u)
    return np.diff(flux) + cd.c_bar * (u[2:] - u[:-2])


# ------------------------------------------------------- parabolic problem
def gaussian(sigma: float = 1.0):
    def phi(z):
        return np.exp(-0.5 * (np.asarray(z) / sigma) ** 2)

    phi.sigma = sigma
    return phi


def heat_solution(values: np.ndarray, length: float, diffusivity: float, t: float) -> np.ndarray:
    """Exact solution of u_t = D u_zz at time t for periodic samples over a period ``length``."""
    n = len(values)
    k = 2 * np.pi * np.fft.rfftfreq(n, length / n)
    return np.fft.irfft(np.fft.rfft(values) * np.exp(-diffusivity * k * k * t), n)


def gaussian_heat(z, sigma: float, diffusivity: float, t: float, mass_factor: float = 1.0):
    """Closed form for Gaussian data on the line."""
    s2 = sigma * sigma + 2 * diffusivity * t
    return mass_factor * sigma / math.sqrt(s2) * np.exp(-0.5 * np.asarray(z) ** 2 / s2)


@dataclass
class ParabolicRun:
    eps: float
    T: float
    Z: float
    n0: int
    n1: int
    dt: float
    steps: int
    times: tuple
    snapshots: dict
    z: np.ndarray
    u0: dict
    error: float | None
    energies: np.ndarray
    max_energy_increase: float
    com_velocity: float | None
    mass_defect: float
    notes: dict = field(default_factory=dict)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n0, self.n1 + 1)

    def comoving_norm(self, t: float) -> float:
        """Windowed l2 norm (eps sum v^2)^(1/2) over z + l t / eps in [-Z/2, Z/2]."""
        v = self.snapshots[t]
        zc = self.eps * self.sites + self.notes["l"] * t / self.eps
        sel = np.abs(zc) <= self.Z / 2
        return float(math.sqrt(self.eps * np.sum(v[sel] ** 2)))


def _window(eps, T, l, Z):
    drift = l * T / eps
    n0 = math.floor((-Z - max(drift, 0.0)) / eps) - 1
    n1 = math.ceil((Z + max(-drift, 0.0)) / eps) + 1
    return n0, n1


def run_parabolic(cd: CellData, phi, eps: float, T: float, Z: float = 8.0, initial=None,
                  averaged: bool = True, heat_points: int = 1 << 14, sample: float | None = None) -> ParabolicRun:
    """Explicit Euler for the transformed lattice equation and the averaged heat equation.

    The lattice window covers [-Z, Z] plus the drift; errors are sampled on
    [-sample, sample] (default Z/2).  ``initial(z, n)`` overrides the default
    transformed data phi(z) / p(n).
    """
    sample = Z / 2 if sample is None else sample
    if cd.a_bar is None and averaged:
        raise ValueError("averaged coefficient not computed")
    om = cd.omega
    n0, n1 = _window(eps, T, cd.l, Z)
    sites = np.arange(n0, n1 + 1)
    z = eps * sites
    p = np.real(cd.P.eval_orbit(om, n0, n1))
    q = np.real(cd.Q.eval_orbit(om, n0, n1))
    a = np.real(cd.a_tilde.eval_orbit(om, n0 - 1, n1))
    v = (phi(z) / p) if initial is None else np.asarray(initial(z, sites), dtype=float)
    edge = np.max(np.abs(v[:3])) + np.max(np.abs(v[-3:]))
    scale = max(np.max(np.abs(v)), 1e-300)
    if edge > 1e-8 * scale:
        raise WindowError(f"initial data not decayed at the window edge ({edge / scale:.3g} relative)")
    dt0 = CFL * eps * eps * q.min() / a.max()
    half = T / 2
    n_half = max(1, math.ceil(half / dt0))
    dt = half / n_half
    r = dt / (eps * eps)
    coef = r / q
    if np.any(coef * (a[1:] + a[:-1]) > 1.0) or np.any(a[1:] + cd.c_bar < 0) or np.any(a[:-1] - cd.c_bar < 0):
        raise StabilityError("explicit step violates the positive-stencil condition")
    energies = np.empty(2 * n_half + 1)
    energies[0] = eps * np.sum(q * v * v)
    snaps = {0.0: v.copy()}
    u_mass0 = np.sum(p * v)
    z_com0 = np.sum(z * p * v) / u_mass0 if u_mass0 != 0 else None
    work = np.zeros(len(v) + 2)
    for k in range(1, 2 * n_half + 1):
        work[1:-1] = v
        flux = a * np.diff(work)
        v = v + coef * (np.diff(flux) + cd.c_bar * (work[2:] - work[:-2]))
        energies[k] = eps * np.sum(q * v * v)
        if k == n_half:
            snaps[half] = v.copy()
    snaps[T] = v.copy()
    inc = np.diff(energies)
    max_inc = float(max(0.0, (inc / np.maximum(energies[:-1], 1e-300)).max())) if len(inc) else 0.0
    com_velocity = None
    if z_com0 is not None:
        z_com1 = np.sum(z * p * v) / np.sum(p * v)
        com_velocity = float((z_com1 - z_com0) / T)
    # averaged problem on a periodic grid four times wider than the window
    L = 8 * Z
    heat_points = heat_points * max(1, round(Z / 8))
    zz = -L / 2 + L * np.arange(heat_points) / heat_points
    u0 = {}
    mass_defect = 0.0
    err = None
    if averaged:
        D = cd.a_bar / cd.Q_mean
        init = cd.c0 * phi(zz)
        mass0 = init.sum()
        sel = np.abs(zz) <= sample
        err = 0.0
        for t in (half, T):
            sol = heat_solution(init, L, D, t)
            mass_defect = max(mass_defect, abs(sol.sum() - mass0) * (L / heat_points))
            u0[t] = sol[sel]
            m = np.floor(zz[sel] / eps - cd.l * t / eps ** 2).astype(np.int64)
            err = max(err, float(np.max(np.abs(snaps[t][m - n0] - u0[t]))))
        zs = zz[sel]
    else:
        zs = np.empty(0)
    notes = {"l": cd.l, "c_bar": cd.c_bar}
    return ParabolicRun(eps, T, Z, n0, n1, dt, 2 * n_half, (half, T), snaps, zs, u0, err, energies, max_inc,
                        com_velocity, mass_defect, notes)


@dataclass
class ConvergenceTable:
    rows: list
    runs: list
    window_changes: list

    def ratios(self) -> list:
        errs = [r["error"] for r in self.rows]
        return [x / y for x, y in zip(errs, errs[1:])]

    def decreasing(self) -> bool:
        errs = [r["error"] for r in self.rows]
        return all(x > y for x, y in zip(errs, errs[1:]))


def _workers(n: int) -> int:
    cap = os.environ.get("APERION_THREADS")
    return max(1, min(n, int(cap) if cap else os.cpu_count() or 1))


def run_convergence(cd: CellData, phi, T: float, eps_list, Z: float = 8.0, window_check: bool = True) -> ConvergenceTable:
    """e(eps) = max over [-Z/2, Z/2] x {T/2, T} of |v_eps - u0| for each eps, with their ratios."""
    eps_list = [float(x) for x in eps_list]
    if any(x <= y for x, y in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be decreasing")
    jobs = [(eps, Z) for eps in eps_list]
    if window_check:
        jobs += [(eps, 2 * Z) for eps in eps_list]
    with ThreadPoolExecutor(_workers(len(jobs))) as pool:
        runs = list(pool.map(lambda j: run_parabolic(cd, phi, j[0], T, j[1], sample=Z / 2), jobs))
    base = runs[: len(eps_list)]
    changes = []
    if window_check:
        for r, big in zip(base, runs[len(eps_list):]):
            change = abs(big.error - r.error) / max(r.error, 1e-300)
            changes.append(change)
            if change > WINDOW_CHANGE:
                raise WindowError(f"doubling Z changes e({r.eps:g}) by {100 * change:.1f}%")
    rows = []
    for i, r in enumerate(base):
        ratio = base[i - 1].error / r.error if i else None
        rows.append({"eps": r.eps, "error": r.error, "ratio": ratio, "a_bar": cd.a_bar, "c_bar": cd.c_bar,
                     "l": cd.l, "c0": cd.c0})
    return ConvergenceTable(rows, base, changes)


@dataclass
class EnergyReport:
    monotone: bool
    max_relative_increase: float
    strictly_decreasing: bool
    oscillatory_norms: dict | None = None
    oscillatory_halving: bool | None = None


ENERGY_SLACK = 1e-13


def energy_decay_check(run: ParabolicRun) -> EnergyReport:
    """Stepwise monotonicity of sum Q v^2 along a run."""
    inc = np.diff(run.energies)
    strict = bool(np.all(inc < 0)) if len(inc) else True
    return EnergyReport(run.max_energy_increase <= ENERGY_SLACK, run.max_energy_increase, strict)


def oscillatory_profile(cd: CellData):
    """Phi = 1/P - 1/<Q>, which has <Q Phi> = 0."""
    return inverse(cd.P) - cd.c0


def oscillatory_decay(cd: CellData, phi, T: float, eps_list, Z: float = 8.0) -> EnergyReport:
    """Windowed norm of v_eps(T/2) for data phi(z) Phi(n w); checks its decay in eps."""
    Phi = oscillatory_profile(cd)
    norms = {}
    worst = 0.0
    mono = True
    for eps in eps_list:
        init = lambda z, n: phi(z) * np.real(Phi.eval_orbit(cd.omega, int(n[0]), int(n[-1])))  # noqa: E731
        run = run_parabolic(cd, phi, eps, T, Z, initial=init, averaged=False)
        norms[float(eps)] = run.comoving_norm(T / 2)
        worst = max(worst, run.max_energy_increase)
        mono = mono and run.max_energy_increase <= ENERGY_SLACK
    e_sorted = sorted(norms)
    halving = norms[e_sorted[0]] < 0.5 * norms[e_sorted[-1]]
    return EnergyReport(mono, worst, False, norms, bool(halving))
