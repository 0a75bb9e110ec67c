import math

import numpy as np
import pytest

from aperion.cocycle import JacobiOp, eigen_split
from aperion.elliptic_bridge import EllipticOp
from aperion.errors import DegenerateError
from aperion.frequency import GOLDEN
from aperion.groundstate import (birkhoff_identity, check_energy_location, check_simplicity, eigen_residual,
                                 extract_eigenfunction, find_E0, ground_state, ground_state_elliptic,
                                 symbol_rightmost)
from aperion.torus_fourier import TorusFun


@pytest.fixture(scope="module")
def desk_state(desk_jacobi):
    return ground_state(desk_jacobi, adjoint=True)


@pytest.mark.parametrize("g", [0.25, math.log(2), 1.0])
def test_unperturbed_energy(g):
    op = JacobiOp.build(g, GOLDEN)
    assert abs(find_E0(op) - (math.exp(g) + math.exp(-g))) <= 1e-10


def test_unperturbed_closed_values():
    assert find_E0(JacobiOp.build(math.log(2), GOLDEN)) == pytest.approx(2.5, abs=1e-10)
    assert find_E0(JacobiOp.build(1.0, GOLDEN)) == pytest.approx(3.0861612696, abs=1e-10)


def test_unperturbed_eigenfunction_is_one():
    op = JacobiOp.build(0.5, GOLDEN)
    ef = extract_eigenfunction(op, find_E0(op))
    assert (ef.P - 1.0).norm() <= 1e-12


def test_desk_energy_and_residual(desk_jacobi, desk_state):
    # oracle: three-term residual on the orbit
    assert abs(desk_state.E0 - 2 * math.cosh(0.5)) < 0.05
    assert desk_state.residual_forward <= 1e-8
    assert eigen_residual(desk_jacobi, desk_state.E0, desk_state.P, 10_000) <= 1e-8
    assert desk_state.positivity_margin > 0


def test_adjoint_ground_state(desk_state):
    assert desk_state.P_star is not None
    assert desk_state.positivity_margin_adjoint > 0
    assert desk_state.residual_adjoint <= 1e-8
    assert desk_state.energy_gap <= 1e-8
    assert desk_state.P.average() == pytest.approx(1.0, abs=1e-14)
    assert desk_state.P_star.average() == pytest.approx(1.0, abs=1e-14)


def test_root_path_is_real(desk_jacobi):
    _, search = find_E0(desk_jacobi, full_output=True)
    assert search.path_is_real


def test_riccati_route_agrees_with_reducibility(desk_jacobi, desk_state):
    # dual route: transfer-operator fixed point versus KAM reduction
    alt = ground_state(desk_jacobi, adjoint=False, method="riccati")
    assert abs(alt.E0 - desk_state.E0) <= 1e-10
    assert (alt.P - desk_state.P).sup_norm() <= 1e-10


def test_spectral_shift_covariance(desk_jacobi, desk_state):
    shifted = ground_state(desk_jacobi.shifted(0.7), adjoint=False)
    assert abs(shifted.E0 - (desk_state.E0 + 0.7)) <= 1e-10
    assert (shifted.P - desk_state.P).sup_norm() <= 1e-10


def test_scaling_covariance(desk_jacobi, desk_state):
    scaled = ground_state(desk_jacobi.rescaled(1.7), adjoint=False)
    assert abs(scaled.E0 - 1.7 * desk_state.E0) <= 1e-10
    assert (scaled.P - desk_state.P).sup_norm() <= 1e-10


def test_negative_g_by_reflection(desk_jacobi, desk_state):
    flipped = ground_state(desk_jacobi.reflected(), adjoint=False)
    assert abs(flipped.E0 - desk_state.E0) <= 1e-10
    assert flipped.residual_forward <= 1e-8


def test_zero_g_is_degenerate():
    with pytest.raises(DegenerateError):
        ground_state(JacobiOp.build(0.0, GOLDEN))


def test_simplicity_unperturbed():
    op = JacobiOp.build(0.5, GOLDEN)
    E0 = find_E0(op)
    rep = check_simplicity(op, E0, TorusFun.constant(1.0, 1))
    assert rep.defect < 1e-12


def test_simplicity_desk(desk_jacobi, desk_state):
    # oracle: orbit projection onto the bounded direction; second direction grows like mu
    rep = check_simplicity(desk_jacobi, desk_state.E0, desk_state.P)
    assert rep.defect <= 1e-8
    assert rep.growth_relative_error <= 0.01


def test_symbol_rightmost_unperturbed():
    op = JacobiOp.build(math.log(2), GOLDEN)
    assert symbol_rightmost(op) == pytest.approx(2.5, abs=1e-15)
    rep = check_energy_location(op, find_E0(op))
    assert rep.symbol_defect <= 1e-10


def test_resolvent_constants_decrease(desk_jacobi, desk_state):
    rep = check_energy_location(desk_jacobi, desk_state.E0, desk_state.P, desk_state.P_star)
    assert rep.decreasing


def test_birkhoff_constant_coefficients():
    e = EllipticOp.build(GOLDEN, 1.0, 0.4, 0.0)
    gs = ground_state_elliptic(e, adjoint=False)
    assert abs(gs.E0) < 1e-14
    assert (gs.P - 1.0).norm() < 1e-12
    assert birkhoff_identity(e, gs.E0, gs.P).identity == pytest.approx(0.0, abs=1e-14)


def test_birkhoff_constant_shift():
    w0 = 0.3
    e = EllipticOp.build(GOLDEN, 1.0, 0.4, w0)
    gs = ground_state_elliptic(e, adjoint=False)
    assert gs.E0 == pytest.approx(w0, abs=1e-12)
    assert birkhoff_identity(e, gs.E0, gs.P).identity == pytest.approx(w0, abs=1e-12)


def test_birkhoff_desk(desk_elliptic):
    # oracle: torus quadrature of the averaged identity
    gs = ground_state_elliptic(desk_elliptic, adjoint=False)
    rep = birkhoff_identity(desk_elliptic, gs.E0, gs.P)
    assert rep.defect <= 1e-6
    assert rep.criterion_applies and rep.E0_positive


def test_auto_method_on_large_perturbation():
    e = EllipticOp.build(GOLDEN, 1.0, 0.3, 0.5 + TorusFun.cos(1, 0.2, dim=1))
    gs = ground_state_elliptic(e, adjoint=True, method="auto")
    assert gs.notes["method"] == "riccati"
    assert gs.residual_forward <= 1e-8 and gs.residual_adjoint <= 1e-8
    assert gs.positivity_margin > 0 and gs.positivity_margin_adjoint > 0
    assert gs.energy_gap <= 1e-8


def test_report_json_is_finite(desk_state):
    d = desk_state.to_json_dict()
    assert d["E0"] == desk_state.E0
    assert d["P"]["dim"] == 1


def test_constant_part_consistent_with_root(desk_state):
    cp = eigen_split(desk_state.E0, 0.5)
    assert cp.lam < 1.0 < cp.mu
    assert np.isfinite(desk_state.search.G)
