"""Ground-state energy, positive quasi-periodic eigenfunctions and their diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.optimize as spo

from .cocycle import JacobiOp, eigen_split, search_interval
from .elliptic_bridge import EllipticOp, to_jacobi
from .errors import ConvergenceError, DegenerateError, DomainError, ResonanceError
from .reducibility import Conjugacy, DiagonalizedCocycle, diagonalize, reduce_full
from .torus_fourier import TorusFun, mat_exp

log = logging.getLogger(__name__)

G_TOL = 1e-12
MAX_FAILURES = 8
RESIDUAL_WINDOW = 10_000
ORBIT_CHECK = 100_000
QUAD_POINTS = 1024


def _normal_form(op: JacobiOp):
    """Unit-scale, mean-free-potential op with g > 0, plus (scale, mean, reflected)."""
    if op.g == 0:
        raise DegenerateError("g = 0: the cocycle is not hyperbolic at the ground state")
    c = float(np.real(op.V.average()))
    base = replace(op, scale=1.0, V=op.V - c)
    flipped = base.g < 0
    if flipped:
        base = base.reflected()
    return base, op.scale, c, flipped


class _ProbeFailed(Exception):
    pass


class _Found(Exception):
    pass


@dataclass
class Probe:
    E: float
    G: float | None
    ok: bool
    detail: str = ""


@dataclass
class RootSearch:
    E0: float
    G: float
    probes: list
    interval: tuple
    diag: DiagonalizedCocycle | None
    method: str = "reducibility"

    @property
    def path_is_real(self) -> bool:
        return all(isinstance(p.E, float) for p in self.probes)


def _G(d: DiagonalizedCocycle) -> float:
    return float(np.real(d.diagonal_constants()[0])) - 1.0


def _search(base: JacobiOp) -> RootSearch:
    """Root of G(E) = lambda(E) e^{<f1>} - 1 on the search interval (g > 0)."""
    lo, hi = search_interval(base.g)
    centre = 2 * math.cosh(base.g)
    probes = []
    done = {}

    def evaluate(E, warm=None):
        if E in done:
            return done[E]
        try:
            d = diagonalize(base, E, Y0=warm)
        except (ConvergenceError, DomainError) as exc:
            if isinstance(exc, ResonanceError):
                raise
            probes.append(Probe(float(E), None, False, str(exc)))
            return None
        val = _G(d)
        probes.append(Probe(float(E), val, True))
        done[E] = d
        return d

    def endpoint(E, sign):
        fails = 0
        while True:
            d = evaluate(E)
            if d is not None:
                return E, d
            fails += 1
            if fails >= MAX_FAILURES:
                raise ConvergenceError(f"diagonalization failed {fails} times approaching E = {E:.6g}",
                                       [p.G for p in probes])
            E = centre + 0.5 * (E - centre)

    a, da = endpoint(lo, 1)
    b, db = endpoint(hi, -1)
    Ga, Gb = _G(da), _G(db)
    if not (Ga > 0 and Gb < 0):
        raise DomainError(f"G has no sign change on [{a:.6g}, {b:.6g}]: G = ({Ga:.3g}, {Gb:.3g}); "
                          "the perturbation is likely too large")
    width0 = hi - lo
    state = {"a": a, "b": b, "best": da if abs(Ga) < abs(Gb) else db}
    state["bestE"] = a if state["best"] is da else b

    def f(E):
        d = evaluate(E, state["best"].Y)
        if d is None:
            raise _ProbeFailed(E)
        val = _G(d)
        if abs(val) < abs(_G(state["best"])):
            state["best"], state["bestE"] = d, E
        if val > 0:
            state["a"] = max(state["a"], E)
        else:
            state["b"] = min(state["b"], E)
        if abs(val) < G_TOL:
            raise _Found
        return val

    fails = 0
    fractions = (0.5, 0.25, 0.75, 0.375, 0.625, 0.125, 0.875)
    while abs(_G(state["best"])) >= G_TOL and state["b"] - state["a"] > width0 * 2.0 ** -60:
        try:
            spo.brentq(f, state["a"], state["b"], xtol=width0 * 2.0 ** -60, maxiter=200)
            break
        except _Found:
            break
        except _ProbeFailed:
            fails += 1
        # retry from other interior points of the current bracket
        while fails:
            if fails >= MAX_FAILURES:
                raise ConvergenceError(f"{fails} consecutive diagonalization failures in "
                                       f"[{state['a']:.6g}, {state['b']:.6g}]", [p.G for p in probes])
            t = fractions[(fails - 1) % len(fractions)]
            try:
                f(state["a"] + t * (state["b"] - state["a"]))
                fails = 0
            except _Found:
                fails = 0
                break
            except _ProbeFailed:
                fails += 1
    best, bestE = state["best"], state["bestE"]
    return RootSearch(float(bestE), _G(best), probes, (lo, hi), best)


def find_E0(op: JacobiOp, full_output: bool = False, method: str = "reducibility"):
    """Ground-state energy of ``op``.

    ``reducibility``: the energy where lambda(E) e^{<f1>(E)} = 1.
    ``riccati``: the energy where the positive Riccati section has <log sigma> = 0.
    ``auto``: reducibility, falling back to riccati outside its regime.
    """
    base, h, c, _ = _normal_form(op)
    res, _ef = _solve_base(base, method, want_eigen=False)
    E0 = h * (res.E0 + c)
    if full_output:
        return E0, res
    return E0


METHODS = ("reducibility", "riccati", "auto")
AUTO_SMALLNESS = 0.5


def _solve_base(base: JacobiOp, method: str, want_eigen: bool = True, K: int | None = None):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "auto" and base.perturbation_size() > AUTO_SMALLNESS * min(base.g ** 2, 1.0):
        log.info("perturbation %.3g is far outside the perturbative regime; using the Riccati route",
                 base.perturbation_size())
        method = "riccati"
    if method in ("reducibility", "auto"):
        try:
            res = _search(base)
            ef = _eigen_from_base(base, res.E0, res.diag, strict=False) if want_eigen else None
            return res, ef
        except (ConvergenceError, DomainError) as exc:
            if method == "reducibility" or isinstance(exc, ResonanceError):
                raise
            log.info("reducibility route failed (%s); using the Riccati route", exc)
    grid = _TorusGrid(base.omega, _riccati_grid(base.dim))
    E, sec, probes = _riccati_search(base, grid)
    res = RootSearch(E, sec.mean_log, probes, (probes[0].E, probes[1].E), None, "riccati")
    ef = None
    if want_eigen:
        P, min_div = _riccati_eigen(base, sec, grid, base.K if K is None else K)
        if min_div < 1e-13:
            raise ResonanceError("resonant divisor in the Riccati coboundary solve", divisor=min_div)
        margin = float(np.real(P.grid_values(_quad_grid(base.dim))).min())
        ef = Eigenfunction(P, None, math.nan, math.nan, False, margin, None, None,
                           "riccati" if margin > 0 else "positivity failed")
    return res, ef


# ------------------------------------------------------- Riccati route
RICCATI_TOL = 1e-15
RICCATI_MAX_ITER = 20_000


def _riccati_grid(dim: int):
    return (512,) if dim == 1 else (64,) * dim


class _TorusGrid:
    """Uniform torus grid with exact shift by w through the FFT."""

    def __init__(self, omega, shape):
        self.shape = tuple(shape)
        total = np.zeros((), dtype=np.longdouble)
        for n, w in zip(self.shape, omega.vector):
            k = np.fft.fftfreq(n, 1.0 / n).astype(np.longdouble)
            total = np.add.outer(total, k * np.longdouble(w))
        frac = (total - np.floor(total)).astype(float)
        self.phase = np.exp(2j * np.pi * frac)
        self.div = self.phase - 1.0

    def shift(self, v, times=1):
        ph = self.phase if times == 1 else self.phase ** times
        return np.real(np.fft.ifftn(np.fft.fftn(v) * ph))

    def solve_coboundary(self, f):
        """y with y(t + w) - y(t) = f - <f>, <y> = 0."""
        c = np.fft.fftn(f)
        div = self.div.copy()
        div.flat[0] = 1.0
        c = c / div
        c.flat[0] = 0.0
        return np.real(np.fft.ifftn(c)), float(np.min(np.abs(self.div.flat[1:])))


@dataclass
class RiccatiSection:
    E: float
    sigma: np.ndarray
    mean_log: float
    iterations: int


def riccati_section(base: JacobiOp, E: float, grid: _TorusGrid, sigma0=None) -> RiccatiSection | None:
    """Attracting positive solution of sigma = (E - V - a / sigma(. + w)) / b, with g > 0.

    ``sigma(n w) = u(n-1) / u(n)`` along the decaying solution of L u = E u.
    Returns None when the iteration leaves the positive cone or stalls.
    """
    a = np.real(base.forward.grid_values(grid.shape))
    b = np.real(base.backward.grid_values(grid.shape))
    v = np.real(base.V.grid_values(grid.shape))
    if sigma0 is None:
        disc = E * E - 4.0
        if disc < 0:
            return None
        sigma0 = (E + math.sqrt(disc)) / (2.0 * math.exp(base.g))
    sig = np.broadcast_to(np.asarray(sigma0, dtype=float), grid.shape).copy()
    for it in range(1, RICCATI_MAX_ITER + 1):
        if sig.min() <= 0:
            return None
        new = (E - v - a / grid.shift(sig)) / b
        step = float(np.max(np.abs(new - sig)))
        sig = new
        if step <= RICCATI_TOL * max(1.0, float(np.max(np.abs(sig)))):
            if sig.min() <= 0:
                return None
            return RiccatiSection(float(E), sig, float(np.mean(np.log(sig))), it)
    return None


def _riccati_search(base: JacobiOp, grid: _TorusGrid):
    """Energy where <log sigma_E> = 0 (bounded positive solution), by Brent."""
    centre = 2 * math.cosh(base.g)
    pert = base.perturbation_size()
    probes = []
    cache = {}

    def phi(E):
        if E in cache:
            return cache[E][0]
        warm = None
        if cache:
            near = min((k for k in cache if cache[k][1] is not None), key=lambda k: abs(k - E), default=None)
            warm = None if near is None else cache[near][1].sigma
        sec = riccati_section(base, E, grid, warm)
        if sec is None and warm is not None:
            sec = riccati_section(base, E, grid)
        val = -1.0 if sec is None else sec.mean_log
        probes.append(Probe(float(E), None if sec is None else sec.mean_log, sec is not None,
                            "" if sec is not None else "no positive section"))
        cache[E] = (val, sec)
        return val

    hi = centre + 2 * pert + 0.5
    while phi(hi) <= 0:
        hi += 2 * (hi - centre) + 1.0
        if hi > centre + 1e6:
            raise ConvergenceError("no positive Riccati section above the hull", [p.G for p in probes])
    lo = min(2.0, centre - 2 * pert) - 0.5
    if phi(lo) > 0:
        raise DomainError("<log sigma> stays positive: no bounded positive solution found")
    E = spo.brentq(lambda x: phi(x), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=300)
    val, sec = cache.get(E, (None, None))
    if sec is None:
        phi(E)
        val, sec = cache[E]
    if sec is None or abs(val) > 1e-10:
        raise ConvergenceError(f"Riccati root search ended at E = {E:.12g} without a bounded section",
                               [p.G for p in probes])
    return float(E), sec, probes


def _riccati_eigen(base: JacobiOp, sec: RiccatiSection, grid: _TorusGrid, K: int) -> tuple:
    """P > 0 with <P> = 1 from log P(t) - log P(t - w) = -log sigma(t)."""
    # l(t + w) - l(t) = -log sigma(t + w)
    rhs = -grid.shift(np.log(sec.sigma))
    ell, min_div = grid.solve_coboundary(rhs)
    Pg = np.exp(ell)
    Pg = Pg / Pg.mean()
    P = TorusFun.from_grid(Pg, K).real_part()
    P = P * (1.0 / float(np.real(P.average())))
    return P, min_div


# ---------------------------------------------------------- eigenfunction
@dataclass
class Eigenfunction:
    P: TorusFun
    conjugacy: Conjugacy
    gate: float
    Y_sup: float
    gate_ok: bool
    margin: float
    lower_bound: float | None
    orbit_min: float | None
    status: str


def _quad_grid(dim: int):
    return (QUAD_POINTS,) * dim if dim <= 2 else (64,) * dim


def _eigen_from_base(base: JacobiOp, E: float, diag: DiagonalizedCocycle | None, strict: bool) -> Eigenfunction:
    conj, D, diag = reduce_full(base, E, diag=diag, full_output=True)
    lam = diag.lam
    gate = conj.gate()
    ysup = conj.Y.sup_norm()
    ok = ysup <= gate
    if strict and not ok:
        raise DomainError(f"outside criterion hypothesis: ||Y||_0 = {ysup:.3g} exceeds {gate:.3g}")
    EY = mat_exp(conj.Y)
    B11 = (lam * EY.entry(0, 0) + diag.mu * EY.entry(1, 0)) * mat_exp(conj.y1)
    B11 = B11.real_part()
    avg = float(np.real(B11.average()))
    P = B11 * (1.0 / avg)
    vals = np.real(P.grid_values(_quad_grid(base.dim)))
    margin = float(vals.min())
    bound = None
    orbit_min = None
    status = "ok"
    if ok:
        ymin = float(np.real(conj.y1.grid_values(_quad_grid(base.dim))).min())
        bound = (lam / 2) * math.exp(ymin) / abs(avg)
        if margin < bound * (1 - 1e-9):
            status = "bound-violated"
    else:
        status = "positivity unverified"
        orbit_min = float(np.real(P.eval_orbit(base.omega, -ORBIT_CHECK, ORBIT_CHECK)).min())
    return Eigenfunction(P, conj, gate, ysup, ok, margin, bound, orbit_min, status)


def extract_eigenfunction(op: JacobiOp, E0: float, strict: bool = True, diag=None) -> Eigenfunction:
    """Positive eigenfunction P with <P> = 1 and (L u)(n) = E0 u(n) for u(n) = P(n w)."""
    base, h, c, flipped = _normal_form(op)
    ef = _eigen_from_base(base, E0 / h - c, diag, strict)
    if flipped:
        ef = replace(ef, P=ef.P.reflect())
    return ef


def eigen_residual(op: JacobiOp, E0: float, P: TorusFun, N: int = RESIDUAL_WINDOW) -> float:
    """max over |n| <= N of |(L u - E0 u)(n)| / ||u||_0 with u(n) = P(n w)."""
    u = np.real(P.eval_orbit(op.omega, -N - 1, N + 1))
    r = op.apply(u, -N - 1) - E0 * u[1:-1]
    return float(np.max(np.abs(r)) / P.sup_norm())


@dataclass
class GroundState:
    E0: float
    P: TorusFun
    P_star: TorusFun | None
    residual_forward: float
    residual_adjoint: float | None
    positivity_margin: float
    positivity_margin_adjoint: float | None
    E0_adjoint: float | None
    forward: Eigenfunction
    adjoint: Eigenfunction | None
    search: RootSearch
    notes: dict = field(default_factory=dict)

    @property
    def energy_gap(self):
        return None if self.E0_adjoint is None else abs(self.E0 - self.E0_adjoint)

    def to_json_dict(self) -> dict:
        out = {
            "E0": self.E0,
            "E0_adjoint": self.E0_adjoint,
            "residual_forward": self.residual_forward,
            "residual_adjoint": self.residual_adjoint,
            "positivity_margin": self.positivity_margin,
            "positivity_margin_adjoint": self.positivity_margin_adjoint,
            "status_forward": self.forward.status,
            "gate": {"Y_sup": _finite(self.forward.Y_sup), "bound": _finite(self.forward.gate),
                     "ok": self.forward.gate_ok},
            "P": self.P.to_json_dict(),
            "probes": len(self.search.probes),
            "G_at_root": self.search.G,
            "divisors": {"min_linearised": None if self.search.diag is None
                         else self.search.diag.notes.get("min_divisor")},
        }
        if self.P_star is not None:
            out["P_star"] = self.P_star.to_json_dict()
            out["status_adjoint"] = self.adjoint.status
        out.update(self.notes)
        return out


def _finite(x):
    return None if x is None or not math.isfinite(x) else x


def ground_state(op: JacobiOp, adjoint: bool = True, N: int = RESIDUAL_WINDOW,
                 method: str = "reducibility") -> GroundState:
    """E0 with forward (and adjoint) positive eigenfunctions and residual checks."""

    def solve(o):
        base, h, c, flipped = _normal_form(o)
        res, ef = _solve_base(base, method)
        if flipped:
            ef = replace(ef, P=ef.P.reflect())
        return h * (res.E0 + c), res, ef

    E0, res, fwd = solve(op)
    r_f = eigen_residual(op, E0, fwd.P, N)
    out = GroundState(E0, fwd.P, None, r_f, None, fwd.margin, None, None, fwd, None, res)
    out.notes["method"] = res.method
    if adjoint:
        adj_op = op.adjoint()
        E0a, ares, aef = solve(adj_op)
        out.P_star = aef.P
        out.adjoint = aef
        out.E0_adjoint = E0a
        out.residual_adjoint = eigen_residual(adj_op, E0a, aef.P, N)
        out.positivity_margin_adjoint = aef.margin
        out.notes["method_adjoint"] = ares.method
    return out


def ground_state_elliptic(e: EllipticOp, adjoint: bool = True, N: int = RESIDUAL_WINDOW,
                          method: str = "reducibility") -> GroundState:
    """Ground state of an elliptic operator via its Jacobi form (E0 scales by h)."""
    op, h = to_jacobi(e)
    gs = ground_state(op.rescaled(h), adjoint, N, method)
    gs.notes["h"] = h
    gs.notes["g"] = op.g
    return gs


# ------------------------------------------------------------- diagnostics
@dataclass
class SimplicityReport:
    defect: float
    forward_defect: float
    forward_steps: int
    growth_rate: float
    mu: float
    growth_relative_error: float


def check_simplicity(op: JacobiOp, E0: float, P: TorusFun, N: int = 2000, seed: int = 0,
                     conjugacy: Conjugacy | None = None) -> SimplicityReport:
    """Collinearity of recursion solutions with P, and growth of the second direction."""
    rng = np.random.default_rng(seed)
    e = E0 / op.scale
    a, b, v = op.coefficients_on_orbit(-N, N)
    p = np.real(P.eval_orbit(op.omega, -N, N + 1))
    # backward Riccati recursion r(n) = u(n)/u(n+1) from random data at n = N
    r = np.empty(2 * N + 1)
    r[-1] = rng.uniform(0.1, 10.0)
    for i in range(2 * N, 0, -1):
        r[i - 1] = (e - v[i] - a[i] / r[i]) / b[i]
    rho = p[:-1] / p[1:]
    burn = min(200, N)
    window = slice(0, 2 * N + 1 - burn)
    defect = float(np.max(np.abs(r[window] / rho[window] - 1.0)))

    base, h, c, flipped = _normal_form(op)
    const = eigen_split(e - c, base.g)
    mu = const.mu
    # forward recursion from the projected initial data: stable only while mu^n eps is small
    seed_err = max(1e-16, eigen_residual(op, E0, P, N=50))
    steps = max(1, min(N, int(math.log(1e-9 / seed_err) / math.log(mu)))) if mu > 1 else N
    amp = rng.uniform(0.5, 2.0)
    x = np.empty(steps + 2)
    x[0], x[1] = amp * p[N - 1], amp * p[N]
    for j in range(1, steps + 1):
        n = N + j - 1
        x[j + 1] = ((e - v[n]) * x[j] - b[n] * x[j - 1]) / a[n]
    fwd_defect = float(np.max(np.abs(x / (amp * p[N - 1:N + steps + 1]) - 1.0)))

    # second column of the conjugacy: forward growth rate, computed for the normal form
    if conjugacy is None:
        conjugacy, _ = reduce_full(base, e - c)
    theta0 = np.zeros(base.dim)
    col = np.real(conjugacy.matrix()(theta0)[:, 1])
    M = 2000
    ab, bb, vb = base.coefficients_on_orbit(0, M)
    y0, y1 = col[1], col[0]
    logsum = 0.0
    for n in range(M):
        y0, y1 = y1, ((e - c - vb[n]) * y1 - bb[n] * y0) / ab[n]
        nrm = math.hypot(y0, y1)
        y0, y1 = y0 / nrm, y1 / nrm
        logsum += math.log(nrm)
    rate = math.exp(logsum / M)
    return SimplicityReport(defect, fwd_defect, steps, rate, mu, abs(rate / mu - 1.0))


@dataclass
class LocationReport:
    shifts: list
    ratios: list
    constants: list
    decreasing: bool
    symbol_rightmost: float | None
    symbol_defect: float | None
    window: int


def symbol_rightmost(op: JacobiOp) -> float:
    """Rightmost point of the unperturbed symbol curve e^-g e^{it} + e^g e^{-it} + <V>."""
    return op.scale * (math.exp(-op.g) + math.exp(op.g) + float(np.real(op.V.average())))


def _is_unperturbed(op: JacobiOp) -> bool:
    Vc = op.V - op.V.average()
    return op.W1.norm() == 0 and op.W2.norm() == 0 and Vc.norm() == 0


def check_energy_location(op: JacobiOp, E0: float, P=None, P_star=None, shifts=(0.1, 0.5, 1.0),
                          window: int = 400, trials: int = 4, seed: int = 0) -> LocationReport:
    """Resolvent sizes ||(E - L)^-1 f|| / ||f|| on a Dirichlet window for E = E0 + shifts."""
    rng = np.random.default_rng(seed)
    a, b, v = op.coefficients_on_orbit(-window, window)
    n = len(a)
    ab = np.zeros((3, n))
    ratios, consts = [], []
    for s in shifts:
        E = E0 + s
        ab[0, 1:] = -op.scale * a[:-1]
        ab[1, :] = E - op.scale * v
        ab[2, :-1] = -op.scale * b[1:]
        worst = 0.0
        for _ in range(trials):
            f = rng.standard_normal(n)
            u = sla.solve_banded((1, 1), ab, f)
            worst = max(worst, np.linalg.norm(u) / np.linalg.norm(f))
        ratios.append(float(worst))
        consts.append(float(worst * s))
    decreasing = all(x > y for x, y in zip(ratios, ratios[1:]))
    sym, sdef = None, None
    if _is_unperturbed(op):
        sym = symbol_rightmost(op)
        sdef = abs(sym - E0)
    return LocationReport(list(shifts), ratios, consts, decreasing, sym, sdef, window)


@dataclass
class BirkhoffReport:
    identity: float
    defect: float
    diffusion_term: float
    drift_term: float
    growth_term: float
    criterion_applies: bool
    E0_positive: bool


def birkhoff_identity(e: EllipticOp, E0: float, P: TorusFun, grid: int = QUAD_POINTS) -> BirkhoffReport:
    """<A1 (P+ - P)^2 / (P P+)> + <A2 (1 - P-/P)> + <W>, compared with E0."""
    N = (grid,) * e.dim
    Pv = np.real(P.grid_values(N))
    Pp = np.real(P.shift(e.omega).grid_values(N))
    Pm = np.real(P.shift(e.omega, -1).grid_values(N))
    A1 = np.real(e.A1.grid_values(N))
    A2 = np.real(e.A2.grid_values(N))
    diffusion = float(np.mean(A1 * (Pp - Pv) ** 2 / (Pv * Pp)))
    drift = float(np.mean(A2 * (1.0 - Pm / Pv)))
    growth = float(np.real(e.W.average()))
    total = diffusion + drift + growth
    applies = growth >= 0 and e.W.norm() > 0 and (e.A2 - e.A2.average()).norm() == 0
    return BirkhoffReport(total, abs(total - E0), diffusion, drift, growth, bool(applies), bool(E0 > 0))


__all__ = [
    "BirkhoffReport",
    "Eigenfunction",
    "GroundState",
    "LocationReport",
    "RootSearch",
    "SimplicityReport",
    "birkhoff_identity",
    "check_energy_location",
    "check_simplicity",
    "eigen_residual",
    "extract_eigenfunction",
    "find_E0",
    "ground_state",
    "ground_state_elliptic",
    "symbol_rightmost",
]
