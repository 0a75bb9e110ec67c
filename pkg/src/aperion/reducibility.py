"""Reduction of the hyperbolic Jacobi cocycle to constant diagonal form.

``newton_cancel`` removes the off-diagonal part of a perturbation of a
constant diagonal matrix; ``diagonalize`` applies it to the transfer matrix;
``reduce_full`` also removes the non-constant diagonal part by solving the
cohomological equation; ``perturb_to_reducible`` modifies the potential
so that the resulting cocycle is reducible through a trigonometric-polynomial
diagonal part.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .cocycle import ConstantPart, JacobiOp, eigen_split, nonresonance_threshold, transfer_matrix
from .errors import ConvergenceError, DomainError, ResonanceError, StructuralError
from .frequency import Frequency
from .torus_fourier import TorusFun, _geometry, inverse, mat_exp, mat_log

log = logging.getLogger(__name__)

RESONANCE_DIVISOR = 1e-13
MAX_NEWTON = 25
VERIFY_GRID = 256


# ------------------------------------------------------------------ helpers
def _const(M, like: TorusFun) -> TorusFun:
    return TorusFun.constant(np.asarray(M, dtype=complex), like.dim, like.K)


def _offdiag_mask(m=2):
    return ~np.eye(m, dtype=bool)


def _blocks(top_left: TorusFun, top_right: TorusFun, bottom_right: TorusFun) -> TorusFun:
    """4x4 function [[a, b], [0, c]] from 2x2 blocks."""
    c = np.zeros((4, 4) + top_left.coeffs.shape[2:], dtype=complex)
    c[:2, :2] = top_left.coeffs
    c[:2, 2:] = top_right.coeffs
    c[2:, 2:] = bottom_right.coeffs
    return TorusFun(c, top_left.K, (4, 4), prune=False)


def _block(f: TorusFun, rows, cols) -> TorusFun:
    return TorusFun(f.coeffs[rows, cols], f.K, (2, 2), prune=False)


class _OffDiagCoords:
    """Vector coordinates for the off-diagonal entries of a 2x2 matrix function."""

    def __init__(self, dim: int, K: int):
        self.dim, self.K = dim, K
        geom = _geometry(dim, K)
        self.mask = geom.mask
        self.n = int(geom.mask.sum())
        self.box = (2, 2) + geom.mask.shape

    def to_vec(self, Y: TorusFun) -> np.ndarray:
        c = Y.coeffs
        return np.concatenate([c[0, 1][self.mask], c[1, 0][self.mask]])

    def from_vec(self, v) -> TorusFun:
        c = np.zeros(self.box, dtype=complex)
        c[0, 1][self.mask] = v[: self.n]
        c[1, 0][self.mask] = v[self.n:]
        return TorusFun(c, self.K, (2, 2))


@dataclass
class CancelResult:
    Y: TorusFun
    F_re: TorusFun
    history: list
    iterations: int
    min_divisor: float
    gmres_iterations: list = field(default_factory=list)
    continuation_steps: int = 0

    def contraction_constant(self, floor: float = 1e-13):
        """Least-squares C in r_{n+1} = C r_n^2 over residuals above ``floor``."""
        r = [x for x in self.history if x > floor]
        if len(r) < 2:
            return None
        a = np.array(r[:-1])
        b = np.array(r[1:])
        return float(np.exp(np.mean(np.log(b) - 2 * np.log(a))))


def _divisor_table(A: np.ndarray, omega: Frequency, K: int):
    """Linearised divisors (rho e^{2 pi i <k,w>} - 1) for entries (1,2) and (2,1)."""
    e = omega.shift_phases(K)
    rho12 = A[1, 1] / A[0, 0]
    rho21 = A[0, 0] / A[1, 1]
    return rho12 * e - 1.0, rho21 * e - 1.0


def _check_divisors(d12, d21, mask, floor=RESONANCE_DIVISOR):
    half = tuple((n - 1) // 2 for n in mask.shape)
    worst = math.inf
    for d in (d12, d21):
        mag = np.where(mask, np.abs(d), np.inf)
        idx = np.unravel_index(np.argmin(mag), mag.shape)
        worst = min(worst, float(mag[idx]))
        if mag[idx] < floor:
            k = tuple(int(i - m) for i, m in zip(idx, half))
            raise ResonanceError(f"resonant divisor at k={k}: |divisor| = {mag[idx]:.3g}", k=k, divisor=float(mag[idx]))
    return worst


class _CancelProblem:
    """Residual Psi(Y) = offdiag log(exp(-A^-1 Y(.+w) A) exp(F) exp(Y)) and its Jacobian."""

    def __init__(self, A, F: TorusFun, omega: Frequency):
        self.A = np.asarray(A, dtype=complex)
        self.Ainv = np.linalg.inv(self.A)
        self.F = F
        self.omega = omega
        self.expF = mat_exp(F)
        self.coords = _OffDiagCoords(F.dim, F.K)
        self.d12, self.d21 = _divisor_table(self.A, omega, F.K)
        self.min_divisor = _check_divisors(self.d12, self.d21, self.coords.mask)
        self._A = _const(self.A, F)
        self._Ainv = _const(self.Ainv, F)
        self._A4 = _const(np.kron(np.eye(2), self.A), F)
        self._Ainv4 = _const(np.kron(np.eye(2), self.Ainv), F)
        self._expF4 = _blocks(self.expF, TorusFun.zeros(F.dim, F.K, (2, 2)), self.expF)

    def full_log(self, Y: TorusFun, check=True) -> TorusFun:
        Yp = Y.shift(self.omega)
        M = mat_exp(-(self._Ainv @ Yp @ self._A)) @ self.expF @ mat_exp(Y)
        return mat_log(M, check=check)

    def residual(self, Y: TorusFun) -> TorusFun:
        return self.full_log(Y).offdiag_part()

    def jvp(self, Y: TorusFun, dY: TorusFun) -> TorusFun:
        """Directional derivative of Psi at Y along dY, exact through block dual numbers."""
        nrm = dY.norm()
        if nrm == 0:
            return dY
        s = 0.05 / nrm
        Y4 = _blocks(Y, dY * s, Y)
        Yp4 = Y4.shift(self.omega)
        M = mat_exp(-(self._Ainv4 @ Yp4 @ self._A4)) @ self._expF4 @ mat_exp(Y4)
        L = mat_log(M, check=False)
        return _block(L, slice(0, 2), slice(2, 4)).offdiag_part() * (1.0 / s)

    def precondition(self, G: TorusFun) -> TorusFun:
        """Inverse of the linearisation at Y = 0: divide each mode by (1 - rho e_k)."""
        c = np.array(G.coeffs)
        c[0, 1] = c[0, 1] / (-self.d12)
        c[1, 0] = c[1, 0] / (-self.d21)
        c[0, 0] = 0
        c[1, 1] = 0
        return TorusFun(c, G.K, (2, 2))


def _newton(problem: _CancelProblem, Y0: TorusFun, tol: float, max_iter: int):
    coords = problem.coords
    Y = Y0
    G = problem.residual(Y)
    r = G.norm()
    history = [r]
    inner = []
    for _ in range(max_iter):
        if r <= tol:
            break
        Yc = Y

        def matvec(v, Yc=Yc):
            return coords.to_vec(problem.jvp(Yc, coords.from_vec(v)))

        def psolve(v):
            return coords.to_vec(problem.precondition(coords.from_vec(v)))

        n = 2 * coords.n
        J = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        M = spla.LinearOperator((n, n), matvec=psolve, dtype=complex)
        b = -coords.to_vec(G)
        count = [0]
        x0 = psolve(b)
        step, info = spla.gmres(
            J, b, x0=x0, rtol=min(1e-2, max(r, 1e-14)), atol=1e-17, M=M, restart=30, maxiter=4,
            callback=lambda _: count.__setitem__(0, count[0] + 1), callback_type="pr_norm",
        )
        inner.append(count[0])
        dY = coords.from_vec(step)
        alpha = 1.0
        accepted = False
        for _ in range(10):
            try:
                Yt = Y + dY * alpha
                Gt = problem.residual(Yt)
                rt = Gt.norm()
            except DomainError:
                alpha *= 0.5
                continue
            if rt < (1.0 - 1e-4 * alpha) * r or rt <= tol:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if r < 1e-12:
                break
            raise ConvergenceError(f"Newton step failed to reduce the residual {r:.3g}", history)
        Y, G, r = Yt, Gt, rt
        history.append(r)
    if r > tol and r >= 1e-12:
        raise ConvergenceError(f"Newton iteration stalled at residual {r:.3g}", history)
    return Y, history, inner


def newton_cancel(A, F: TorusFun, omega: Frequency, eta=None, Y0: TorusFun | None = None,
                  tol=None, max_iter: int = MAX_NEWTON, continuation: bool = True) -> CancelResult:
    """Off-diagonal Y and diagonal F_re with exp(-Y(.+w)) A exp(F) exp(Y) = A exp(F_re).

    A is a constant diagonal 2x2 matrix; the residual is the Fourier l1 norm
    of the off-diagonal part of log(exp(-A^-1 Y(.+w) A) exp(F) exp(Y)).
    """
    A = np.asarray(A, dtype=complex)
    if A.shape != (2, 2) or abs(A[0, 1]) > 0 or abs(A[1, 0]) > 0:
        raise StructuralError("newton_cancel needs a constant diagonal 2x2 matrix")
    if F.value_shape != (2, 2):
        raise StructuralError("F must be a 2x2 matrix function")
    if not isinstance(omega, Frequency):
        omega = Frequency(omega)
    eps = F.norm()
    tol = max(1e-12, 1e-4 * eps * eps) if tol is None else tol
    problem = _CancelProblem(A, F, omega)
    if eta is not None and problem.min_divisor < eta:
        warnings.warn(f"smallest divisor {problem.min_divisor:.3g} is below eta = {eta:.3g}", RuntimeWarning)
    zero = TorusFun.zeros(F.dim, F.K, (2, 2))
    if F.offdiag_part().norm() == 0 and (Y0 is None or Y0.norm() == 0):
        return CancelResult(zero, F.diag_part(), [0.0], 0, problem.min_divisor)
    start = zero if Y0 is None else Y0.with_budget(F.K).offdiag_part()
    try:
        Y, history, inner = _newton(problem, start, tol, max_iter)
        steps = 0
    except (ConvergenceError, DomainError) as exc:
        if not continuation or isinstance(exc, ResonanceError):
            raise
        log.info("direct Newton failed (%s); switching to amplitude continuation", exc)
        Y, history, inner, steps = _continuation(A, F, omega, start, tol, max_iter)
        problem = _CancelProblem(A, F, omega)
    L = problem.full_log(Y)
    return CancelResult(Y, L.diag_part(), history, len(history) - 1, problem.min_divisor, inner, steps)


def _continuation(A, F, omega, Y0, tol, max_iter):
    s, ds = 0.0, 0.25
    Y = Y0 * 0.0
    steps = 0
    history = []
    inner = []
    while s < 1.0:
        t = min(1.0, s + ds)
        prob = _CancelProblem(A, F * t, omega)
        try:
            Yn, history, inner = _newton(prob, Y, tol if t == 1.0 else max(tol, 1e-10), max_iter)
        except (ConvergenceError, DomainError) as exc:
            if isinstance(exc, ResonanceError):
                raise
            ds *= 0.5
            if ds < 1e-3:
                raise ConvergenceError(f"continuation stalled at amplitude {s:.4f}", history) from exc
            continue
        Y, s = Yn, t
        steps += 1
        ds = min(0.5, ds * 1.5)
    return Y, history, inner, steps


def linearized_step(A, F: TorusFun, omega: Frequency) -> TorusFun:
    """First Newton correction from Y = 0: Y12(k) = G12(k) / ((mu/lam) e_k - 1), likewise Y21."""
    if not isinstance(omega, Frequency):
        omega = Frequency(omega)
    problem = _CancelProblem(A, F, omega)
    zero = TorusFun.zeros(F.dim, F.K, (2, 2))
    return problem.precondition(-problem.residual(zero))


def nonres_cancel(A, F: TorusFun, omega: Frequency, eta=None, **kwargs):
    """(Y, F_re) from ``newton_cancel``."""
    res = newton_cancel(A, F, omega, eta, **kwargs)
    return res.Y, res.F_re


# ------------------------------------------------------------- diagonalize
@dataclass
class DiagonalizedCocycle:
    E: float
    const: ConstantPart
    f1: TorusFun
    f2: TorusFun
    Y: TorusFun
    residual: float
    history: list
    epsilon: float
    status: str = "ok"
    notes: dict = field(default_factory=dict)

    @property
    def lam(self):
        return self.const.lam

    @property
    def mu(self):
        return self.const.mu

    @property
    def P(self):
        return self.const.P

    def diagonal_constants(self):
        """(lambda e^{<f1>}, mu e^{<f2>})."""
        return (self.lam * np.exp(complex(self.f1.average())), self.mu * np.exp(complex(self.f2.average())))

    def reconstruction_error(self, op: JacobiOp, grid: int = VERIFY_GRID) -> float:
        """max |exp(-Y(t+w)) P^-1 S(t) P exp(Y(t)) - diag(lam e^f1, mu e^f2)| on a grid."""
        S = transfer_matrix(op, self.E)
        P = _const(self.P, S)
        Pinv = _const(np.linalg.inv(self.P), S)
        EY = mat_exp(self.Y)
        EYp = EY.shift(op.omega)
        N = (grid,) * op.dim
        left = _pointwise_inv(EYp.grid_values(N))
        mid = (Pinv @ S @ P).grid_values(N)
        right = EY.grid_values(N)
        got = np.einsum("ij...,jk...,kl...->il...", left, mid, right)
        want = np.zeros_like(got)
        want[0, 0] = self.lam * np.exp(self.f1.grid_values(N))
        want[1, 1] = self.mu * np.exp(self.f2.grid_values(N))
        return float(np.max(np.abs(got - want)))


def _pointwise_inv(vals):
    m = np.moveaxis(vals, (0, 1), (-2, -1))
    return np.moveaxis(np.linalg.inv(m), (-2, -1), (0, 1))


def smallness_bound(g: float, C0: float = 1.0) -> float:
    """C0 e^{-12|g|} g^6."""
    return C0 * math.exp(-12 * abs(g)) * g ** 6


def _coeff_size(op: JacobiOp) -> float:
    return op.W1.sup_norm() + op.W2.sup_norm() + op.V.sup_norm()


def diagonalize(op: JacobiOp, E: float, Y0: TorusFun | None = None, verify: bool = False,
                tol: float = 1e-12) -> DiagonalizedCocycle:
    """Conjugate S(E) to diag(lam e^f1, mu e^f2) by P exp(Y) with Y off-diagonal."""
    e = E / op.scale
    const = eigen_split(e, op.g)
    eps = _coeff_size(op)
    notes = {}
    if eps > smallness_bound(op.g):
        notes["smallness"] = f"perturbation {eps:.3g} exceeds the advisory bound {smallness_bound(op.g):.3g}"
    S = transfer_matrix(op, E)
    Ftil = _const(np.linalg.inv(const.A), S) @ S
    Fg = mat_log(Ftil)
    P = _const(const.P, S)
    Pinv = _const(np.linalg.inv(const.P), S)
    Fp = Pinv @ Fg @ P
    A = np.diag([const.lam, const.mu]).astype(complex)
    res = newton_cancel(A, Fp, op.omega, eta=nonresonance_threshold(op.g), Y0=Y0, tol=tol)
    f1, f2 = res.F_re.entry(0, 0), res.F_re.entry(1, 1)
    status = "ok"
    if eps > 0:
        ysup = res.Y.sup_norm()
        fsup = max(f1.sup_norm(), f2.sup_norm())
        if ysup > eps ** (1 / 3) or fsup > eps ** 0.5:
            status = "outside-regime"
            notes["bounds"] = f"||Y||_0 = {ysup:.3g}, max ||f_i||_0 = {fsup:.3g}, eps = {eps:.3g}"
    out = DiagonalizedCocycle(E, const, f1, f2, res.Y, res.history[-1], res.history, eps, status, notes)
    out.notes["gmres_iterations"] = res.gmres_iterations
    out.notes["continuation_steps"] = res.continuation_steps
    out.notes["min_divisor"] = res.min_divisor
    if verify:
        out.notes["reconstruction_error"] = out.reconstruction_error(op)
    return out


# ----------------------------------------------------------- cohomology
@dataclass(frozen=True)
class CohomologyReport:
    worst_divisor: float
    worst_k: tuple | None
    dc_min_ratio: float | None
    dc_worst_k: tuple | None
    active_modes: int


def solve_cohomological(f: TorusFun, omega: Frequency, full_output: bool = False):
    """y with y(t + w) - y(t) = f(t) - <f> and <y> = 0."""
    if not isinstance(omega, Frequency):
        omega = Frequency(omega)
    if f.dim != omega.dim:
        raise StructuralError(f"{f.dim}-torus function with a {omega.dim}-dimensional frequency")
    geom = _geometry(f.dim, f.K)
    div = omega.cohomology_divisors(f.K)
    nv = len(f.value_shape)
    mag_f = np.abs(f.coeffs).reshape((-1,) + geom.mask.shape).max(axis=0) if nv else np.abs(f.coeffs)
    active = (mag_f > 0) & (geom.weight > 0)
    c = np.zeros_like(f.coeffs)
    worst, worst_k = math.inf, None
    if active.any():
        mag = np.where(active, np.abs(div), np.inf)
        idx = np.unravel_index(np.argmin(mag), mag.shape)
        worst = float(mag[idx])
        worst_k = tuple(int(i - m) for i, m in zip(idx, geom.half))
        if worst < RESONANCE_DIVISOR:
            raise ResonanceError(f"resonant divisor at k={worst_k}: |e^(2 pi i <k,w>) - 1| = {worst:.3g}",
                                 k=worst_k, divisor=worst)
        safe = np.where(active, div, 1.0)
        c = np.where(active, f.coeffs / safe, 0)
    y = TorusFun(c, f.K, f.value_shape, f.radius)
    if not full_output:
        return y
    dc_ratio, dc_k = None, None
    if omega.regime == "dc-infinity" and active.any():
        grids = np.meshgrid(*geom.axes, indexing="ij")
        w = np.full(geom.weight.shape, float(omega.gamma))
        for j, gj in enumerate(grids):
            w = w / (1.0 + (np.abs(gj) * (j + 1)) ** omega.tau)
        ratio = np.where(active, omega.mode_dists(f.K) / w, np.inf)
        idx = np.unravel_index(np.argmin(ratio), ratio.shape)
        dc_ratio = float(ratio[idx])
        dc_k = tuple(int(i - m) for i, m in zip(idx, geom.half))
    return y, CohomologyReport(worst, worst_k, dc_ratio, dc_k, int(active.sum()))


def cohomology_defect(y: TorusFun, f: TorusFun, omega: Frequency, grid: int = 512) -> float:
    """max |y(t+w) - y(t) - (f(t) - <f>)| on a grid."""
    N = (grid,) * f.dim
    lhs = (y.shift(omega) - y).grid_values(N)
    rhs = (f - f.average()).grid_values(N)
    return float(np.max(np.abs(lhs - rhs)))


# ------------------------------------------------------------ conjugacy
@dataclass
class Conjugacy:
    """B(t) = P exp(Y(t)) diag(exp(y1(t)), exp(y2(t)))."""

    P: np.ndarray
    Y: TorusFun
    y1: TorusFun
    y2: TorusFun

    def gate(self) -> float:
        """lambda / (4 (lambda + mu)) read off P = [[lambda, mu], [1, 1]]."""
        lam, mu = abs(self.P[0, 0]), abs(self.P[0, 1])
        return lam / (4 * (lam + mu))

    def gate_ok(self) -> bool:
        return self.Y.sup_norm() <= self.gate()

    def expY(self) -> TorusFun:
        return mat_exp(self.Y)

    def matrix(self) -> TorusFun:
        D = TorusFun.from_entries([[mat_exp(self.y1), 0.0], [0.0, mat_exp(self.y2)]])
        return _const(self.P, self.Y) @ self.expY() @ D

    def grid_values(self, grid) -> np.ndarray:
        N = (grid,) * self.Y.dim if np.isscalar(grid) else tuple(grid)
        return self.matrix().grid_values(N)

    def min_abs_det(self, grid: int = VERIFY_GRID) -> float:
        vals = np.moveaxis(self.grid_values(grid), (0, 1), (-2, -1))
        return float(np.min(np.abs(np.linalg.det(vals))))

    def first_row_on_orbit(self, omega, n0: int, n1: int, B: TorusFun | None = None) -> np.ndarray:
        """B_11 and B_12 at n*w, n = n0..n1."""
        B = self.matrix() if B is None else B
        vals = B.eval_orbit(omega, n0, n1)
        return vals[:, 0, :]

    def reconstruction_error(self, op: JacobiOp, E: float, D, grid: int = VERIFY_GRID) -> float:
        """max |B(t+w)^-1 S(t) B(t) - D| on a grid."""
        B = self.matrix()
        S = transfer_matrix(op, E)
        N = (grid,) * op.dim
        left = _pointwise_inv(B.shift(op.omega).grid_values(N))
        got = np.einsum("ij...,jk...,kl...->il...", left, S.grid_values(N), B.grid_values(N))
        want = np.asarray(D, dtype=complex).reshape((2, 2) + (1,) * op.dim)
        return float(np.max(np.abs(got - want)))

    def to_json_dict(self) -> dict:
        return {
            "P": np.real(self.P).tolist(),
            "Y": self.Y.to_json_dict(),
            "y1": self.y1.to_json_dict(),
            "y2": self.y2.to_json_dict(),
            "gate": self.gate(),
            "gate_ok": self.gate_ok(),
        }


def reduce_full(op: JacobiOp, E: float, diag: DiagonalizedCocycle | None = None, full_output: bool = False):
    """Conjugacy B with B(t+w)^-1 S(t) B(t) = diag(lam e^<f1>, mu e^<f2>)."""
    diag = diagonalize(op, E) if diag is None else diag
    y1 = solve_cohomological(diag.f1, op.omega)
    y2 = solve_cohomological(diag.f2, op.omega)
    conj = Conjugacy(diag.P, diag.Y, y1, y2)
    c1, c2 = diag.diagonal_constants()
    D = np.diag([c1, c2])
    if full_output:
        return conj, D, diag
    return conj, D


# ----------------------------------------------------- potential change
@dataclass
class PerturbResult:
    V: TorusFun
    conjugacy: Conjugacy
    constants: np.ndarray
    distance: float
    within_target: bool
    history: list
    contraction: float | None
    truncated_mass: float
    diag: DiagonalizedCocycle


def perturb_to_reducible(op: JacobiOp, E: float, K: int | None = None, eps_target: float = 1e-4,
                         tol: float = 1e-15, max_iter: int = 30, full_output: bool = False):
    """Potential V' near V whose cocycle is reducible through a degree-K diagonal part.

    Returns (V', Conjugacy), or a ``PerturbResult`` with ``full_output``.
    """
    K = op.K if K is None else int(K)
    e = E / op.scale
    diag = diagonalize(op, E)
    omega = op.omega
    # truncate the traceless part only so the determinant stays that of S
    s = diag.f1 + diag.f2
    half = (diag.f1 - diag.f2) * 0.5
    tq = half.truncate(K, strict=True)
    cut = half.tail_mass(K - 1)
    g1 = s * 0.5 + tq
    g2 = s * 0.5 - tq
    one = TorusFun.constant(1.0, op.dim, op.K)
    # A_K = B'(t+w) diag(lam e^g1, mu e^g2) B'(t)^-1 with B' = P e^Y
    P = _const(diag.P, one)
    Bp = P @ mat_exp(diag.Y)
    Bp_inv = mat_exp(-diag.Y) @ _const(np.linalg.inv(diag.P), one)
    DK = TorusFun.from_entries([[mat_exp(g1) * diag.lam, 0.0], [0.0, mat_exp(g2) * diag.mu]])
    AK = Bp.shift(omega) @ DK @ Bp_inv

    a = op.forward
    inv_a = inverse(a)
    W = -(op.backward * inv_a)
    Vt = (e - op.V) * inv_a
    U = TorusFun.identity(2, op.dim, op.K)
    An = AK
    history = []
    for _ in range(max_iter):
        A0 = TorusFun.from_entries([[Vt, W], [1.0, 0.0]])
        X = mat_log(inverse(A0) @ An)
        r = X.norm()
        history.append(r)
        if r <= tol or (len(history) > 1 and r >= history[-2] and r < 1e-12):
            break
        if len(history) > 2 and r >= history[-2]:
            raise ConvergenceError(
                f"Jacobi-form iteration is not contracting (residual {r:.3g} after {history[-2]:.3g})", history)
        f1, f2, f3 = X.entry(0, 0), X.entry(0, 1), X.entry(1, 0)
        q = f1 * inverse(Vt)
        q_prev = q.shift(omega, -1)
        y2 = f2 - W * q
        y3 = -q_prev
        dV = f2.shift(omega) - W.shift(omega) * q.shift(omega) + Vt * f1 + W * f3 + W * q_prev
        y = TorusFun.from_entries([[0.0, y2], [y3, 0.0]])
        An = mat_exp(y.shift(omega)) @ An @ mat_exp(-y)
        U = mat_exp(y) @ U
        Vt = Vt + dV
    else:
        raise ConvergenceError("Jacobi-form iteration did not reach tolerance", history)

    V_new = (e - Vt * a).real_part()
    distance = (V_new - op.V).sup_norm()
    within = distance <= eps_target
    if not within:
        warnings.warn(f"||V' - V||_0 = {distance:.3g} exceeds the target {eps_target:.3g}", RuntimeWarning)
    Ynew = mat_log(_const(np.linalg.inv(diag.P), one) @ U @ P @ mat_exp(diag.Y))
    y1 = solve_cohomological(g1, omega)
    y2c = solve_cohomological(g2, omega)
    conj = Conjugacy(diag.P, Ynew, y1, y2c)
    D = np.diag([diag.lam * np.exp(complex(g1.average())), diag.mu * np.exp(complex(g2.average()))])
    r = [x for x in history if x > 1e-13]
    contraction = None
    if len(r) >= 2:
        contraction = float(max(b / a_ ** 2 for a_, b in zip(r[:-1], r[1:])))
    if not full_output:
        return V_new, conj
    return PerturbResult(V_new, conj, D, distance, within, history, contraction, cut, diag)


# --------------------------------------------------------- decay fitting
def decay_exponent(f: TorusFun):
    """Slope s of log max_{|k|_1 = n} |f_k| ~ -s log n (None if fewer than 3 shells)."""
    geom = _geometry(f.dim, f.K)
    nv = len(f.value_shape)
    mag = np.abs(f.coeffs)
    if nv:
        mag = mag.reshape((-1,) + geom.mask.shape).max(axis=0)
    xs, ys = [], []
    for n in range(1, f.K + 1):
        sel = geom.weight == n
        if sel.any():
            m = mag[sel].max()
            if m > 0:
                xs.append(math.log(n))
                ys.append(math.log(m))
    if len(xs) < 3:
        return None
    slope = np.polyfit(xs, ys, 1)[0]
    return float(-slope)
