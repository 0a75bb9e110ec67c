import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aperion.cocycle import JacobiOp, eigen_split, transfer_matrix
from aperion.errors import ResonanceError
from aperion.frequency import GOLDEN, Frequency
from aperion.groundstate import find_E0
from aperion.reducibility import (cohomology_defect, diagonalize, linearized_step, newton_cancel,
                                  perturb_to_reducible, reduce_full, solve_cohomological)
from aperion.torus_fourier import TorusFun, mat_exp

from conftest import SILVER_SQRT3, random_modes

OMEGA = Frequency((GOLDEN,))
A14 = np.diag([1.0, 4.0]).astype(complex)


def _matrix(rows):
    return TorusFun.from_entries(rows)


def _single_mode(eps, K=16):
    zero = TorusFun.zeros(1, K)
    return _matrix([[zero, TorusFun.cos(1, 2 * eps, dim=1, K=K)], [zero, zero]])


def _conjugation_defect(A, F, Y, F_re, omega, grid=256):
    """max |exp(-Y(t+w)) A exp(F) exp(Y) - A exp(F_re)| on a grid."""
    Ac = TorusFun.constant(A, 1, F.K)
    lhs = (mat_exp(-Y.shift(omega)) @ Ac @ mat_exp(F) @ mat_exp(Y)).grid_values(grid)
    rhs = (Ac @ mat_exp(F_re)).grid_values(grid)
    return float(np.max(np.abs(lhs - rhs)))


def test_zero_input_is_fixed_point():
    res = newton_cancel(A14, TorusFun.zeros(1, 16, (2, 2)), OMEGA)
    assert res.Y.norm() == 0.0 and res.F_re.norm() == 0.0


def test_diagonal_input_passes_through():
    d = TorusFun.cos(1, 0.01, dim=1, K=16)
    zero = TorusFun.zeros(1, 16)
    F = _matrix([[d, zero], [zero, d * 0.5]])
    res = newton_cancel(A14, F, OMEGA)
    assert res.Y.norm() == 0.0
    assert (res.F_re - F).norm() == 0.0


def test_single_mode_first_step_and_residual():
    # oracle: coefficientwise division for the first step, grid conjugation for the result
    eps = 1e-3
    F = _single_mode(eps)
    Y1 = linearized_step(A14, F, OMEGA)
    want = F.entry(0, 1).coefficient((1,)) / (4 * np.exp(2j * np.pi * GOLDEN) - 1)
    assert abs(Y1.entry(0, 1).coefficient((1,)) - want) < 1e-15
    res = newton_cancel(A14, F, OMEGA)
    assert res.history[-1] <= 10 * eps ** 2
    assert _conjugation_defect(A14, F, res.Y, res.F_re, OMEGA) <= 10 * eps ** 2


@pytest.mark.parametrize("seed", range(10))
def test_newton_superlinear(seed):
    rng = np.random.default_rng(seed)
    rows = [[random_modes(rng, 1, 3, 16, 1.0) for _ in range(2)] for _ in range(2)]
    F = _matrix(rows)
    F = F * (1e-3 / F.norm())
    r = newton_cancel(A14, F, OMEGA, tol=1e-15).history
    r = [x for x in r if x > 1e-15]
    ratios = [b / a for a, b in zip(r, r[1:])]
    assert len(r) >= 2
    assert all(y < x for x, y in zip(ratios, ratios[1:])) or ratios[-1] < 1e-3


@given(st.integers(0, 2**32 - 1))
def test_offdiagonal_split_is_projection_pair(seed):
    rng = np.random.default_rng(seed)
    X = _matrix([[random_modes(rng, 1, 3, 12) for _ in range(2)] for _ in range(2)])
    assert (X.diag_part() + X.offdiag_part() - X).norm() == 0.0
    assert X.diag_part().offdiag_part().norm() == 0.0
    assert X.offdiag_part().diag_part().norm() == 0.0


def test_diagonalize_unperturbed():
    d = diagonalize(JacobiOp.build(0.5, GOLDEN), 2.3)
    assert d.Y.norm() == 0.0
    assert d.f1.norm() < 1e-14 and d.f2.norm() < 1e-14
    assert d.residual < 1e-14


def test_diagonalize_desk_quadratic_residual(desk_jacobi):
    # oracle: grid reconstruction of diag(lam e^f1, mu e^f2)
    d = diagonalize(desk_jacobi, 2.3)
    assert d.reconstruction_error(desk_jacobi, 256) <= 10 * 0.01 ** 2
    assert d.status == "ok"
    assert d.Y.sup_norm() <= 0.01 ** (1 / 3)
    assert max(d.f1.sup_norm(), d.f2.sup_norm()) <= 0.01 ** 0.5


def test_forward_adjoint_constant_agree_at_root(desk_jacobi):
    # oracle: the forward and adjoint cocycles share the root constant
    E0 = find_E0(desk_jacobi)
    fwd = diagonalize(desk_jacobi, E0)
    adj = diagonalize(desk_jacobi.adjoint().reflected(), E0)
    a = fwd.const.lam * math.exp(float(np.real(fwd.f1.average())))
    b = adj.const.lam * math.exp(float(np.real(adj.f1.average())))
    assert abs(a - b) <= 1e-8


def test_rational_frequency_raises_resonance():
    op = JacobiOp.build(0.5, (0.5,), V=TorusFun.cos(1, 0.01, dim=1))
    with pytest.raises(ResonanceError) as info:
        reduce_full(op, 2.3)
    assert info.value.k is not None


def test_cohomological_single_mode():
    for k in (1, 3, -2):
        f = TorusFun.from_modes({(k,): 1.0}, 1, 16)
        y = solve_cohomological(f, OMEGA)
        want = 1.0 / (np.exp(2j * np.pi * k * GOLDEN) - 1)
        assert abs(y.coefficient((k,)) - want) < 1e-14


def test_cohomological_constant_gives_zero():
    assert solve_cohomological(TorusFun.constant(2.0, 1, 16), OMEGA).norm() == 0.0


def test_cohomological_cosine_telescoping():
    # oracle: sum_{n<N} (f(n w) - <f>) = y(N w) - y(0)
    f = TorusFun.cos(1, dim=1)
    y = solve_cohomological(f, OMEGA)
    assert abs(abs(y.coefficient((1,))) - 0.5 / (2 * math.sin(math.pi * GOLDEN))) < 1e-15
    N = 1000
    lhs = np.sum(np.real(f.eval_orbit(GOLDEN, 0, N - 1)))
    ys = np.real(y.eval_orbit(GOLDEN, 0, N))
    assert abs(lhs - (ys[-1] - ys[0])) < 1e-10


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_cohomological_grid_defect(seed, dim):
    rng = np.random.default_rng(seed)
    f = random_modes(rng, dim, 5, 8)
    om = Frequency((GOLDEN,)) if dim == 1 else Frequency(SILVER_SQRT3)
    y = solve_cohomological(f, om)
    assert y.average() == 0
    assert cohomology_defect(y, f, om, 512 if dim == 1 else 64) <= 1e-10 * f.sup_norm()


def test_reduce_full_unperturbed():
    E = 2.3
    conj, D = reduce_full(JacobiOp.build(0.5, GOLDEN), E)
    cp = eigen_split(E, 0.5)
    assert np.max(np.abs(np.real(conj.P) - cp.P)) < 1e-15
    assert conj.Y.norm() == 0.0
    assert np.allclose(np.diag(D), [cp.lam, cp.mu], rtol=1e-15)


def test_reduce_full_desk(desk_jacobi):
    E = find_E0(desk_jacobi)
    conj, D = reduce_full(desk_jacobi, E)
    assert conj.reconstruction_error(desk_jacobi, E, D) <= 1e-8
    assert conj.y1.average() == 0 and conj.y2.average() == 0
    assert conj.min_abs_det() > 0


def test_perturb_zero_potential():
    op = JacobiOp.build(0.5, GOLDEN)
    V2, conj = perturb_to_reducible(op, 2.3, K=16)
    assert V2.sup_norm() < 1e-14


def test_perturb_trigonometric_polynomial(desk_jacobi):
    res = perturb_to_reducible(desk_jacobi, 2.3, K=16, full_output=True)
    assert res.distance <= 1e-12
    assert res.within_target


def test_perturb_d2_path():
    w = Frequency(SILVER_SQRT3)
    V = TorusFun.cos((1, 0), 0.005, dim=2, K=16) + TorusFun.cos((0, 1), 0.005, dim=2, K=16)
    op = JacobiOp.build(0.5, w, V=V, K=16)
    res = perturb_to_reducible(op, 2.3, K=16, eps_target=1e-4, full_output=True)
    assert res.distance <= 1e-4
    op2 = JacobiOp(op.g, op.W1, op.W2, res.V, w)
    D = np.diag(res.constants) if np.ndim(res.constants) == 1 else res.constants
    assert res.conjugacy.reconstruction_error(op2, 2.3, D, grid=256) <= 1e-8


def test_transfer_matrix_consistent_with_reduction(desk_jacobi):
    E = 2.3
    conj, D = reduce_full(desk_jacobi, E)
    S = transfer_matrix(desk_jacobi, E)
    B = conj.matrix()
    lhs = (S @ B).grid_values(128)
    rhs = (B.shift(GOLDEN) @ TorusFun.constant(np.asarray(D, dtype=complex), 1, B.K)).grid_values(128)
    assert np.max(np.abs(lhs - rhs)) < 1e-8
