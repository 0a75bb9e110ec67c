import math

import numpy as np
import pytest

from aperion.frequency import GOLDEN, Frequency
from aperion.groundstate import ground_state_elliptic
from aperion.homogenize import (CellData, assemble_cell_data, averaged_coefficient, cell_residual, energy_decay_check,
                                gaussian, homogenize, oscillatory_decay, reduced_apply, reduction_defect,
                                run_convergence, run_parabolic, solve_cell_problem)
from aperion.selftest import constant_drift, desk_elliptic
from aperion.torus_fourier import TorusFun


def _cell(e):
    return homogenize(e, ground_state_elliptic(e, adjoint=True, method="auto"))


@pytest.fixture(scope="module")
def constant_cell():
    e = constant_drift(0.4)
    return e, _cell(e)


@pytest.fixture(scope="module")
def desk_cell():
    e = desk_elliptic()
    return e, _cell(e)


def test_constant_drift_closed_values(constant_cell):
    _, cd = constant_cell
    assert (cd.Q - 1.0).sup_norm() <= 1e-12
    assert (cd.a_tilde - 0.8).sup_norm() <= 1e-12
    assert cd.c_bar == pytest.approx(0.2, abs=1e-10)
    assert cd.l == pytest.approx(0.4, abs=1e-10)
    assert cd.N.sup_norm() <= 1e-10
    assert cd.a_bar == pytest.approx(0.8, abs=1e-10)
    assert cd.c0 == pytest.approx(1.0, abs=1e-10)


def test_constant_drift_reduced_form_expansion(constant_cell, rng):
    # oracle: hand expansion 0.8 (u+ - 2u + u-) + 0.2 (u+ - u-) = u+ - 1.6 u + 0.6 u-
    e, cd = constant_cell
    u = rng.normal(size=80)
    want = u[2:] - 1.6 * u[1:-1] + 0.6 * u[:-2]
    assert np.max(np.abs(reduced_apply(cd, u) - want)) <= 1e-12
    assert np.max(np.abs(e.apply(u, 0) - want)) <= 1e-12


def test_zero_drift_two_division_route():
    # oracle: for c_bar = 0 the flux a~(1 + DN) is constant and a_bar is the harmonic mean
    om = Frequency((GOLDEN,))
    one = TorusFun.constant(1.0, 1)
    a = 1.0 + TorusFun.cos(1, 0.1, dim=1)
    cd = CellData(one, a, 0.0, 0.0, 1.0, 0.0, one, one, om, 0.0)
    N, info = solve_cell_problem(cd, full_output=True)
    assert info["route"] == "two-division"
    assert cell_residual(cd, N) <= 1e-8
    flux = np.real((a * (1.0 + N.shift(om, 1) - N)).grid_values(512))
    assert flux.max() - flux.min() <= 1e-10
    a_bar, _ = averaged_coefficient(cd)
    assert a_bar == pytest.approx(math.sqrt(0.99), abs=1e-10)


def test_desk_cell_problem(desk_cell):
    e, cd = desk_cell
    assert cd.notes["inf_a_tilde"] > abs(cd.c_bar)
    assert cd.notes["cell_residual"] <= 1e-8
    assert cd.notes["a_bar_gap"] <= 1e-8
    assert cd.c_tilde_oscillation <= 1e-8


def test_desk_reduction_identity(desk_cell, rng):
    # oracle: direct evaluation of p*(L - E0)(p u) on the orbit
    e, cd = desk_cell
    worst = 0.0
    for _ in range(50):
        u = np.zeros(64)
        u[2:-2] = rng.standard_normal(60)
        worst = max(worst, reduction_defect(e, cd, u, int(rng.integers(-500, 500))))
    assert worst <= 1e-10


def test_convergence_table(constant_cell):
    _, cd = constant_cell
    tab = run_convergence(cd, gaussian(1.0), 0.5, [1 / 16, 1 / 32, 1 / 64])
    assert tab.decreasing()
    assert all(1.5 <= r <= 3.0 for r in tab.ratios())
    assert all(c <= 0.1 for c in tab.window_changes)


def test_constant_potential_gauge():
    base = _cell(desk_elliptic())
    shifted = _cell(desk_elliptic(0.3))
    assert shifted.E0 == pytest.approx(base.E0 + 0.3, abs=1e-10)
    r1 = run_parabolic(base, gaussian(1.0), 1 / 16, 0.5)
    r2 = run_parabolic(shifted, gaussian(1.0), 1 / 16, 0.5)
    assert np.max(np.abs(r1.snapshots[0.5] - r2.snapshots[0.5])) <= 1e-10


def test_zero_data_stays_zero(desk_cell):
    _, cd = desk_cell
    run = run_parabolic(cd, lambda z: 0.0 * z, 1 / 16, 0.5)
    assert np.all(run.snapshots[0.5] == 0.0)
    assert run.error == 0.0


def test_energy_is_monotone(desk_cell):
    _, cd = desk_cell
    for eps in (1 / 16, 1 / 32):
        rep = energy_decay_check(run_parabolic(cd, gaussian(1.0), eps, 0.5))
        assert rep.monotone
        assert rep.max_relative_increase <= 1e-13


def test_oscillatory_data_decays(desk_cell):
    _, cd = desk_cell
    rep = oscillatory_decay(cd, gaussian(1.0), 0.5, [1 / 16, 1 / 32, 1 / 64])
    n = rep.oscillatory_norms
    assert n[1 / 64] / n[1 / 16] < 0.5
    assert rep.oscillatory_halving


def test_centre_of_mass_drift(desk_cell):
    _, cd = desk_cell
    eps = 1 / 64
    run = run_parabolic(cd, gaussian(1.0), eps, 0.5)
    want = -cd.l / eps
    assert abs(run.com_velocity / want - 1) <= 0.05


def test_heat_mass_conserved(constant_cell):
    _, cd = constant_cell
    assert run_parabolic(cd, gaussian(1.0), 1 / 16, 0.5).mass_defect <= 1e-10


def test_adjoint_required():
    e = constant_drift(0.4)
    with pytest.raises(ValueError):
        assemble_cell_data(e, ground_state_elliptic(e, adjoint=False))
