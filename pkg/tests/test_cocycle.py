import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aperion.cocycle import (JacobiOp, eigen_split, lyapunov_estimate, search_interval, transfer_matrix,
                             transfer_matrices_on_orbit)
from aperion.errors import DomainError
from aperion.frequency import GOLDEN
from aperion.torus_fourier import TorusFun

from conftest import random_modes


def test_unperturbed_transfer_matrix():
    S = transfer_matrix(JacobiOp.build(math.log(2), GOLDEN), 2.5)
    vals = S.grid_values(16)
    assert np.max(np.abs(vals - np.array([[5.0, -4.0], [1.0, 0.0]])[:, :, None])) < 1e-14


def test_potential_enters_top_left_entry():
    kappa = 0.03
    op = JacobiOp.build(0.5, GOLDEN, V=TorusFun.cos(1, 2 * kappa, dim=1))
    S = transfer_matrix(op, 0.0)
    th = np.arange(32) / 32
    want = -2 * kappa * math.exp(0.5) * np.cos(2 * np.pi * th)
    assert np.max(np.abs(S.grid_values(32)[0, 0] - want)) < 1e-14


def _random_op(rng):
    W1 = random_modes(rng, 1, 3, 32, 0.01)
    W2 = random_modes(rng, 1, 3, 32, 0.01)
    V = random_modes(rng, 1, 3, 32, 0.1)
    return JacobiOp(0.4, W1 - W1.average(), W2 - W2.average(), V, GOLDEN)


def test_transfer_products_reproduce_recursion(rng):
    # oracle: the iterated sequence solves (L u)(n) = E u(n) when applied directly
    op = _random_op(rng)
    E = 2.3
    S = transfer_matrices_on_orbit(op, E, 1, 50)
    u = np.empty(52)
    u[0], u[1] = rng.normal(size=2)
    for i, M in enumerate(S, start=1):
        u[i + 1] = M[0, 0] * u[i] + M[0, 1] * u[i - 1]
    Lu = op.apply(u, 0)
    scale = np.max(np.abs(u))
    assert np.max(np.abs(Lu - E * u[1:-1])) < 1e-10 * scale


def test_vanishing_hopping_is_a_domain_error():
    op = JacobiOp(0.5, TorusFun.cos(1, 2.0, dim=1), TorusFun.zeros(1), TorusFun.zeros(1), GOLDEN)
    with pytest.raises(DomainError, match="theta"):
        transfer_matrix(op, 2.3)


def test_eigen_split_closed_forms():
    cp = eigen_split(2.5, math.log(2))
    assert cp.lam == pytest.approx(1.0, abs=1e-15)
    assert cp.mu == pytest.approx(4.0, abs=1e-14)
    for g in (0.1, 0.7, 1.3):
        assert eigen_split(math.exp(g) + math.exp(-g), g).lam == pytest.approx(1.0, abs=1e-14)


def test_eigen_split_symmetric_functions():
    # oracle: lam * mu = e^2 and lam + mu = 3e
    cp = eigen_split(3.0, 1.0)
    assert cp.lam == pytest.approx(math.e * (3 - math.sqrt(5)) / 2, rel=1e-14)
    assert cp.lam * cp.mu == pytest.approx(math.e ** 2, rel=1e-12)
    assert cp.lam + cp.mu == pytest.approx(3 * math.e, rel=1e-12)


def test_eigen_split_below_two():
    with pytest.raises(DomainError):
        eigen_split(1.9, 0.5)


@given(st.floats(0.05, 2.0), st.floats(0.0, 1.0))
def test_constant_part_invariants(g, s):
    lo, hi = search_interval(g)
    assert lo < hi
    E = lo + s * (hi - lo)
    cp = eigen_split(E, g)
    assert cp.lam * cp.mu == pytest.approx(math.exp(2 * g), rel=1e-12)
    assert cp.lam + cp.mu == pytest.approx(E * math.exp(g), rel=1e-12)
    delta = min(g * g, 1.0) / 9
    assert cp.mu - cp.lam >= math.exp(g) * delta * (1 - 1e-12)
    assert cp.ratio_gap >= delta * (1 - 1e-12)
    assert cp.inverse_ratio_gap >= min(g * g, 1.0) / 27 * (1 - 1e-12)


def test_diagonaliser_100_energies(rng):
    g = 0.5
    lo, hi = search_interval(g)
    for E in rng.uniform(lo, hi, 100):
        cp = eigen_split(E, g)
        D = cp.Pinv @ cp.A @ cp.P
        assert np.max(np.abs(D - np.diag([cp.lam, cp.mu]))) < 1e-12 * cp.mu


def test_determinant_identity(rng):
    op = _random_op(rng)
    S = transfer_matrix(op, 2.4).grid_values(64)
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    want = op.backward.grid_values(64) / op.forward.grid_values(64)
    assert np.max(np.abs(det - want)) < 1e-12


def test_lyapunov_unperturbed():
    op = JacobiOp.build(math.log(2), GOLDEN)
    assert abs(lyapunov_estimate(op, 2.5, 10_000) - math.log(4)) < 1e-6
    g = 0.6
    op = JacobiOp.build(g, GOLDEN)
    assert abs(lyapunov_estimate(op, 2 * math.cosh(g), 10_000) - 2 * g) < 1e-6


def test_lyapunov_perturbed_within_ten_percent():
    op = JacobiOp.build(0.5, GOLDEN, V=TorusFun.cos(1, 0.05, dim=1))
    est = lyapunov_estimate(op, 2.4, 100_000)
    ref = math.log(eigen_split(2.4, 0.5).mu)
    assert est > 0
    assert abs(est / ref - 1) < 0.1


def test_adjoint_and_json_round_trip(desk_jacobi):
    back = JacobiOp.from_json_dict(desk_jacobi.to_json_dict())
    assert back.g == desk_jacobi.g
    assert (back.V - desk_jacobi.V).norm() == 0.0
    assert desk_jacobi.adjoint().g == -desk_jacobi.g
