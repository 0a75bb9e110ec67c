import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aperion.errors import DomainError, StructuralError
from aperion.frequency import GOLDEN
from aperion.torus_fourier import TorusFun, average, default_budget, mat_exp, mat_log, mul, weighted_length

from conftest import random_modes


def test_weighted_length_uses_axis_weights():
    assert weighted_length((1, 0, 0)) == 1
    assert weighted_length((0, -2, 1)) == 7
    assert weighted_length((0, 0)) == 0


def test_default_budget():
    assert default_budget(1) == 32
    assert default_budget(2) == 16


def test_mul_by_one_is_identity(rng):
    g = random_modes(rng, 2, 5, 16)
    one = TorusFun.constant(1.0, 2, 16)
    assert (mul(one, g) - g).norm() < 1e-14 * g.norm()


def test_mul_cosine_product_to_sum():
    c = TorusFun.cos(1, dim=1)
    want = TorusFun.constant(0.5, 1) + TorusFun.cos(2, 0.5, dim=1)
    assert (mul(c, c) - want).norm() < 1e-15


def test_mul_matches_grid_product_d2(rng):
    # oracle: pointwise product of grid evaluations
    f = random_modes(rng, 2, 5, 16)
    g = random_modes(rng, 2, 5, 16)
    got = mul(f, g).grid_values(64)
    want = f.grid_values(64) * g.grid_values(64)
    assert np.max(np.abs(got - want)) < 1e-12


def test_mul_dimension_mismatch():
    with pytest.raises(StructuralError):
        mul(TorusFun.cos(1, dim=1), TorusFun.cos((1, 0), dim=2))


def test_exp_zero_is_identity():
    Z = TorusFun.zeros(1, 8, (2, 2))
    assert (mat_exp(Z) - TorusFun.identity(2, 1, 8)).norm() == 0.0


def test_exp_nilpotent_closed_form():
    eps = 0.37
    N = TorusFun.constant(np.array([[0.0, eps], [0.0, 0.0]]), 1, 8)
    want = TorusFun.constant(np.array([[1.0, eps], [0.0, 1.0]]), 1, 8)
    assert (mat_exp(N) - want).norm() < 1e-15


def test_log_exp_round_trip(rng):
    # oracle: log inverts exp for small X
    entries = [[random_modes(rng, 1, 3, 16) for _ in range(2)] for _ in range(2)]
    X = TorusFun.from_entries(entries)
    X = X * (0.1 / X.sup_norm())
    assert abs(X.sup_norm() - 0.1) < 1e-12
    assert (mat_log(mat_exp(X)) - X).sup_norm() < 1e-10


def test_log_outside_domain():
    F = TorusFun.constant(np.diag([3.0, 1.0]), 1, 8)
    with pytest.raises(DomainError):
        mat_log(F)


@pytest.mark.parametrize("f, want", [
    (TorusFun.cos(1, dim=1), 0.0),
    (TorusFun.constant(3.5, 1), 3.5),
    (2 + TorusFun.cos((1, 0), dim=2) + TorusFun.cos((0, 1), 0.3, dim=2), 2.0),
])
def test_average(f, want):
    assert average(f) == want


def test_eval_points():
    assert TorusFun.constant(1.0, 1)(0.123) == pytest.approx(1.0, abs=1e-15)
    assert abs(TorusFun.cos(1, dim=1)(0.25)) < 1e-15


def test_eval_orbit_matches_direct_cosine():
    got = TorusFun.cos(1, dim=1).eval_orbit(GOLDEN, 0, 3)
    want = [math.cos(2 * math.pi * n * GOLDEN) for n in range(4)]
    assert np.max(np.abs(got - np.array(want))) < 1e-14


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_parseval_round_trip(seed, dim):
    f = random_modes(np.random.default_rng(seed), dim, 6, 8)
    g = TorusFun.from_grid(f.grid_values(32), 8)
    assert np.max(np.abs(g.coeffs - f.coeffs)) < 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.floats(0.0, 1.0))
def test_truncation_never_increases_weighted_norm(seed, degree, r):
    f = random_modes(np.random.default_rng(seed), 2, 8, 16)
    assert f.truncate(degree).norm(r) <= f.norm(r) + 1e-15


@given(st.integers(0, 2**32 - 1))
def test_operations_preserve_reality(seed):
    rng = np.random.default_rng(seed)
    f = random_modes(rng, 2, 4, 12, 0.2)
    g = random_modes(rng, 2, 4, 12, 0.2)
    for h in (f + g, mul(f, g), f.shift(GOLDEN * np.ones(2), 3), mat_exp(f)):
        assert h.reality_defect() < 1e-13


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5))
def test_submultiplicative_weighted_norm(seed, r):
    rng = np.random.default_rng(seed)
    f = random_modes(rng, 1, 4, 32)
    g = random_modes(rng, 1, 4, 32)
    assert mul(f, g).norm(r) <= f.norm(r) * g.norm(r) * (1 + 1e-12)


@given(st.integers(0, 2**32 - 1))
def test_sup_norm_below_coefficient_sum(seed):
    f = random_modes(np.random.default_rng(seed), 2, 6, 12)
    assert f.sup_norm() <= f.norm(0) * (1 + 1e-12)


def test_json_round_trip(rng):
    f = random_modes(rng, 2, 5, 12)
    g = TorusFun.from_json_dict(f.to_json_dict())
    assert (f - g).norm() == 0.0
