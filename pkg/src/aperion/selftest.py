"""Acceptance suite: each criterion measures values and compares them with fixed thresholds."""

from __future__ import annotations

import inspect
import math
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from .cocycle import JacobiOp, eigen_split, search_interval
from .elliptic_bridge import EllipticOp
from .frequency import GOLDEN, Frequency, certify_dc
from .groundstate import birkhoff_identity, find_E0, ground_state, ground_state_elliptic
from .homogenize import (assemble_cell_data, averaged_coefficient, energy_decay_check, gaussian,
                         oscillatory_decay, reduction_defect, run_convergence, run_parabolic, solve_cell_problem)
from .kpp_sim import KPPModel, LatticeField, steady_state
from .reducibility import (cohomology_defect, linearized_step, newton_cancel, perturb_to_reducible,
                           solve_cohomological)
from .torus_fourier import TorusFun, mat_exp


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    relation: str = "<="

    @property
    def passed(self) -> bool:
        v, t = self.value, self.threshold
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        return {"<=": v <= t, "<": v < t, ">": v > t, ">=": v >= t, "==": v == t}[self.relation]

    def to_json_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "relation": self.relation, "passed": self.passed}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.checks) and all(c.passed for c in self.checks)

    def first_failure(self) -> str | None:
        if self.error:
            return self.error.splitlines()[-1]
        for c in self.checks:
            if not c.passed:
                return f"{c.name}: {c.value!r} {c.relation} {c.threshold!r} fails"
        return None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = self.first_failure()
        tail = f" [{worst}]" if worst else ""
        return f"[{status}] criterion {self.number:2d}: {self.title} ({self.seconds:.1f} s){tail}"

    def to_json_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "seconds": self.seconds, "error": self.error,
                "checks": [c.to_json_dict() for c in self.checks]}


# ------------------------------------------------------------ desk cases
def desk_jacobi() -> JacobiOp:
    """g = 0.5, V = 0.01 cos(2 pi t), golden w."""
    return JacobiOp.build(0.5, GOLDEN, V=TorusFun.cos(1, 0.01, dim=1))


def desk_elliptic(w0: float = 0.0) -> EllipticOp:
    """A1 = 1 + 0.01 cos, A2 = 0.4, W = w0 + 0.01 cos, golden w."""
    c = TorusFun.cos(1, 0.01, dim=1)
    return EllipticOp.build(GOLDEN, 1.0 + c, 0.4, w0 + c)


def kpp_desk() -> EllipticOp:
    """a = 1, b = 0.3, c = 0.5 + 0.2 cos, golden w."""
    return EllipticOp.build(GOLDEN, 1.0, 0.3, 0.5 + TorusFun.cos(1, 0.2, dim=1))


def constant_drift(beta: float = 0.4) -> EllipticOp:
    return EllipticOp.build(GOLDEN, 1.0, beta, 0.0)


# ------------------------------------------------------------- criteria
def criterion_1(checks):
    for g in (0.25, math.log(2.0), 1.0):
        op = JacobiOp.build(g, GOLDEN)
        t = time.perf_counter()
        E0 = find_E0(op)
        dt = time.perf_counter() - t
        gs = ground_state(op, adjoint=False, N=100)
        checks.append(Check(f"g={g:.4f} |E0 - 2 cosh g|", abs(E0 - 2 * math.cosh(g)), 1e-10))
        checks.append(Check(f"g={g:.4f} ||P - 1||_0", (gs.P - 1.0).sup_norm(), 1e-12))
        checks.append(Check(f"g={g:.4f} runtime s", dt, 1.0, "<"))


def criterion_2(checks):
    op = desk_jacobi()
    t = time.perf_counter()
    gs = ground_state(op, adjoint=True, N=10_000, method="reducibility")
    dt = time.perf_counter() - t
    d = gs.search.diag
    eps = d.epsilon
    checks.append(Check("relative eigen-residual", gs.residual_forward, 1e-8))
    checks.append(Check("adjoint relative eigen-residual", gs.residual_adjoint, 1e-8))
    checks.append(Check("positivity margin", gs.positivity_margin, 0.0, ">"))
    checks.append(Check("|E0 - E0_adjoint|", gs.energy_gap, 1e-8))
    checks.append(Check("||Y||_0 / eps^(1/3)", d.Y.sup_norm() / eps ** (1 / 3), 1.0))
    checks.append(Check("max ||f_i||_0 / eps^(1/2)", max(d.f1.sup_norm(), d.f2.sup_norm()) / eps ** 0.5, 1.0))
    checks.append(Check("runtime s", dt, 30.0, "<"))


def _superlinear(history, floor=1e-13) -> bool:
    r = [x for x in history if x > floor]
    if len(history) < 2:
        return False
    q = [b / a for a, b in zip(r[:-1], r[1:])]
    tail = history[len(r)] if len(r) < len(history) else None
    if tail is not None and tail <= floor:
        return all(x < y for x, y in zip(q[1:], q[:-1])) and all(x < 0.1 for x in q)
    return len(q) >= 2 and all(x < y for x, y in zip(q[1:], q[:-1])) and q[-1] < 1e-3


def criterion_3(checks, seed: int = 0):
    om = Frequency(GOLDEN)
    rng = np.random.default_rng(seed)
    t = time.perf_counter()
    ok = 0
    for _ in range(10):
        g = rng.uniform(0.3, 1.0)
        lo, hi = search_interval(g)
        c = eigen_split(rng.uniform(lo, hi), g)
        ents = [[TorusFun.from_modes({(k,): complex(*rng.normal(size=2)) * 1e-3 for k in range(-3, 4)}, 1)
                 for _ in range(2)] for _ in range(2)]
        res = newton_cancel(np.diag([c.lam, c.mu]), TorusFun.from_entries(ents), om)
        ok += _superlinear(res.history)
    checks.append(Check("random inputs with superlinear decay", ok, 10, "=="))
    eps = 1e-3
    zero = TorusFun.zeros(1)
    F = TorusFun.from_entries([[zero, TorusFun.from_modes({(1,): eps, (-1,): eps}, 1)], [zero, zero]])
    A = np.diag([1.0, 4.0])
    Y1 = linearized_step(A, F, om)
    want = eps / (4 * np.exp(2j * np.pi * GOLDEN) - 1)
    checks.append(Check("first step Y12(1) relative error", abs(Y1.entry(0, 1).coefficient((1,)) - want) / abs(want),
                        1e-12))
    res = newton_cancel(A, F, om)
    N = (256,)
    Yp = res.Y.shift(om)
    Af = TorusFun.from_entries([[TorusFun.constant(1.0, 1), 0.0], [0.0, 4.0]])
    lhs = (mat_exp(-Yp) @ Af @ mat_exp(F) @ mat_exp(res.Y)).grid_values(N)
    off = max(np.max(np.abs(lhs[0, 1])), np.max(np.abs(lhs[1, 0])))
    checks.append(Check("single-mode off-diagonal residual / eps^2", off / eps ** 2, 10.0))
    checks.append(Check("runtime s", time.perf_counter() - t, 10.0, "<"))


def criterion_4(checks):
    w = (math.sqrt(2) - 1, math.sqrt(3) - 1)
    V = TorusFun.cos((1, 0), 0.005, K=16) + TorusFun.cos((0, 1), 0.005, K=16)
    op = JacobiOp.build(0.5, w, V=V, K=16)
    t = time.perf_counter()
    E = 2.3
    res = perturb_to_reducible(op, E, K=16, eps_target=1e-4, full_output=True)
    opn = JacobiOp(op.g, op.W1, op.W2, res.V, op.omega)
    err = res.conjugacy.reconstruction_error(opn, E, res.constants, grid=256)
    checks.append(Check("||V' - V||_0", res.distance, 1e-4))
    checks.append(Check("reconstruction residual (256^2 grid)", err, 1e-8))
    checks.append(Check("runtime s", time.perf_counter() - t, 60.0, "<"))


def criterion_5(checks):
    e = desk_elliptic()
    gs = ground_state_elliptic(e, adjoint=False, method="auto")
    rep = birkhoff_identity(e, gs.E0, gs.P)
    checks.append(Check("|E0 - torus-average identity|", rep.defect, 1e-6))
    worst = math.inf
    for w0 in (0.0, 0.005, 0.02, 0.05):
        ew = desk_elliptic(w0)
        E0 = ground_state_elliptic(ew, adjoint=False, method="auto").E0
        worst = min(worst, E0)
    checks.append(Check("min E0 over the <W> >= 0 family", worst, 0.0, ">"))


def _homogenization_data(e: EllipticOp):
    gs = ground_state_elliptic(e, adjoint=True, method="auto")
    cd = assemble_cell_data(e, gs)
    solve_cell_problem(cd)
    averaged_coefficient(cd)
    return gs, cd


def criterion_6(checks, seed: int = 0):
    e = desk_elliptic()
    _, cd = _homogenization_data(e)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        n0 = int(rng.integers(-500, 500))
        u = np.zeros(64)
        u[2:-2] = rng.standard_normal(60)
        worst = max(worst, reduction_defect(e, cd, u, n0))
    checks.append(Check("reduction identity defect (50 random u)", worst, 1e-10))
    checks.append(Check("c~ oscillation", cd.c_tilde_oscillation, 1e-8))


def _comparison_pairs(e: EllipticOp, pairs: int, steps: int, seed: int) -> int:
    rng = np.random.default_rng(seed)
    N = 32
    model = KPPModel(e, -N, N)
    ok = 0
    for _ in range(pairs):
        lo = rng.uniform(0.0, 1.0, 2 * N + 3)
        hi = lo + rng.uniform(0.0, 0.5, 2 * N + 3)
        u = LatticeField(-N, lo[1:-1], lo[0], lo[-1])
        v = LatticeField(-N, hi[1:-1], hi[0], hi[-1])
        dt = model.dt_max(v.sup())
        good = True
        for _ in range(steps):
            u = model.step(u, dt, sup_u=v.sup())
            v = model.step(v, dt, sup_u=v.sup())
            if np.any(u.values > v.values + 1e-15):
                good = False
                break
        ok += good
    return ok


def criterion_7(checks, seed: int = 0):
    t = time.perf_counter()
    for c in (1.0, 2.0):
        e = EllipticOp.build(GOLDEN, 1.0, 0.0, c)
        ss = steady_state(e, c, TorusFun.constant(1.0, 1), N=256)
        _, vals = ss.interior_values()
        checks.append(Check(f"c={c:g} max |u0 - {c:g}|", float(np.max(np.abs(vals - c))), 1e-8))
    e = kpp_desk()
    gs = ground_state_elliptic(e, adjoint=False, method="auto")
    ss = steady_state(e, gs.E0, gs.P, N=2048)
    checks.append(Check("sandwich gap", ss.gap, 1e-6))
    checks.append(Check("steady residual", ss.residual, 1e-8))
    checks.append(Check("window-doubling change", ss.window_defect, 1e-8))
    checks.append(Check("monotonicity violations", ss.monotone_violations, 0, "=="))
    checks.append(Check("ordered pairs preserved (of 100)", _comparison_pairs(e, 100, 100, seed), 100, "=="))
    checks.append(Check("runtime s", time.perf_counter() - t, 120.0, "<"))


def criterion_8(checks):
    t = time.perf_counter()
    e = constant_drift(0.4)
    _, cd = _homogenization_data(e)
    checks.append(Check("|c_bar - 0.2|", abs(cd.c_bar - 0.2), 1e-10))
    checks.append(Check("|l - 0.4|", abs(cd.l - 0.4), 1e-10))
    checks.append(Check("||N||_0", cd.N.sup_norm(), 1e-10))
    checks.append(Check("|a_bar - 0.8|", abs(cd.a_bar - 0.8), 1e-10))
    checks.append(Check("|c0 - 1|", abs(cd.c0 - 1.0), 1e-10))
    tab = run_convergence(cd, gaussian(1.0), 0.5, [1 / 16, 1 / 32, 1 / 64])
    checks.append(Check("e(eps) strictly decreasing", float(tab.decreasing()), 1.0, "=="))
    for i, r in enumerate(tab.ratios()):
        checks.append(Check(f"ratio {i + 1} >= 1.5", r, 1.5, ">="))
        checks.append(Check(f"ratio {i + 1} <= 3", r, 3.0, "<="))
    checks.append(Check("runtime s", time.perf_counter() - t, 180.0, "<"))


def criterion_9(checks):
    e = desk_elliptic()
    _, cd = _homogenization_data(e)
    checks.append(Check("|a_bar linear - a_bar quadratic|", cd.notes["a_bar_gap"], 1e-8))
    worst = 0.0
    for eps in (1 / 16, 1 / 32):
        run = run_parabolic(cd, gaussian(1.0), eps, 0.5)
        worst = max(worst, energy_decay_check(run).max_relative_increase)
    checks.append(Check("max relative energy increase per step", worst, 1e-13))
    rep = oscillatory_decay(cd, gaussian(1.0), 0.5, [1 / 16, 1 / 32, 1 / 64])
    n = rep.oscillatory_norms
    checks.append(Check("||v(T/2)|| at 1/64 over 1/16", n[1 / 64] / n[1 / 16], 0.5, "<"))


def criterion_10(checks, seed: int = 0):
    om = Frequency(GOLDEN)
    f = TorusFun.from_modes({(1,): 1.0}, 1)
    y = solve_cohomological(f, om)
    want = 1.0 / (np.exp(2j * np.pi * GOLDEN) - 1.0)
    checks.append(Check("single-mode relative error", abs(y.coefficient((1,)) - want) / abs(want), 1e-14))
    c = TorusFun.cos(1, 1.0, dim=1)
    y = solve_cohomological(c, om)
    Nn = 1000
    lhs = float(np.sum(np.real(c.eval_orbit(om, 0, Nn - 1))))
    yv = np.real(y.eval_orbit(om, 0, Nn))
    checks.append(Check("telescoping defect N=1000", abs(lhs - (yv[-1] - yv[0])), 1e-10))
    rng = np.random.default_rng(seed)
    violations = 0
    solves = 0
    worst_def = 0.0
    for vec, gamma, tau in ((GOLDEN, 0.1, 2.0), ((math.sqrt(2) - 1, math.sqrt(3) - 1), 0.01, 3.0)):
        w = Frequency(vec, "dc-infinity", gamma, tau)
        K = 16
        cert = certify_dc(w, gamma, tau, K)
        if not cert.certified:
            violations += 1
            continue
        for _ in range(5):
            modes = {}
            for _ in range(6):
                k = tuple(int(x) for x in rng.integers(-4, 5, w.dim))
                modes[k] = complex(*rng.normal(size=2))
            f = TorusFun.from_modes(modes, w.dim, K)
            y, rep = solve_cohomological(f, w, full_output=True)
            solves += 1
            if rep.dc_min_ratio is None or rep.dc_min_ratio < 1.0:
                violations += 1
            worst_def = max(worst_def, cohomology_defect(y, f, w) / max(f.sup_norm(), 1e-300))
    checks.append(Check("DC diagnostics produced", solves, 10, "=="))
    checks.append(Check("DC violations on certified frequencies", violations, 0, "=="))
    checks.append(Check("cohomology grid defect / |f|_0", worst_def, 1e-10))


CRITERIA = {
    1: ("unperturbed ground state", criterion_1),
    2: ("perturbed ground state", criterion_2),
    3: ("Newton quadratic decay", criterion_3),
    4: ("potential perturbation path (d=2)", criterion_4),
    5: ("torus-average energy identity", criterion_5),
    6: ("reduction identity", criterion_6),
    7: ("KPP sandwich", criterion_7),
    8: ("homogenization oracle", criterion_8),
    9: ("averaged-coefficient identity and energy decay", criterion_9),
    10: ("cohomological solver", criterion_10),
}
QUICK = (1, 3, 6, 10)


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    title, fn = CRITERIA[number]
    out = CriterionResult(number, title)
    t = time.perf_counter()
    kwargs = {"seed": seed} if "seed" in inspect.signature(fn).parameters else {}
    try:
        fn(out.checks, **kwargs)
    except Exception:  # noqa: BLE001 - reported as a failing criterion
        out.error = traceback.format_exc()
    out.seconds = time.perf_counter() - t
    return out


def run_suite(quick: bool = False, numbers=None, echo=None, seed: int = 0) -> list:
    numbers = list(numbers) if numbers else list(QUICK if quick else CRITERIA)
    results = []
    for n in numbers:
        r = run_criterion(n, seed)
        results.append(r)
        if echo:
            echo(r.line())
    return results
