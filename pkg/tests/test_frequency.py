import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aperion.errors import ResonanceError
from aperion.frequency import (GOLDEN, SILVER, ContinuedFraction, Frequency, Rational, certify_dc,
                               certify_independent, continued_fraction, divisor_weight, parse_omega,
                               parse_regime)


def test_golden_continued_fraction():
    cf = continued_fraction((math.sqrt(5) - 1) / 2, 12)
    assert isinstance(cf, ContinuedFraction)
    assert cf.partial_quotients[:8] == (0, 1, 1, 1, 1, 1, 1, 1)
    assert cf.q[:8] == (1, 1, 2, 3, 5, 8, 13, 21)


def test_silver_continued_fraction():
    cf = continued_fraction(math.sqrt(2) - 1, 10)
    assert cf.partial_quotients[:6] == (0, 2, 2, 2, 2, 2)
    assert cf.q[:5] == (1, 2, 5, 12, 29)


def test_rational_detected():
    r = continued_fraction(0.75, 10)
    assert r == Rational(3, 4)
    assert str(r) == "Rational(3/4)"


def test_denominator_recurrence_and_error_bound():
    cf = continued_fraction(SILVER, 15)
    a, q = cf.partial_quotients, cf.q
    for n in range(2, len(q)):
        assert q[n] == a[n] * q[n - 1] + q[n - 2]
    assert all(x < y for x, y in zip(q[1:], q[2:]))
    for n in range(1, len(q) - 1):
        assert abs(SILVER - cf.p[n] / q[n]) < 1 / (q[n] * q[n + 1])


def test_zeta_estimates_bounded_for_golden():
    z = continued_fraction(GOLDEN, 30).zeta_estimates()
    assert all(math.isfinite(x) for x in z)
    assert max(z[5:]) < 2.0


def test_divisor_distance_simple():
    assert divisor_weight((1,), Frequency((1.5,))).dist == pytest.approx(0.5, abs=1e-15)


def test_divisor_rational_dependence_flags_resonance():
    rep = divisor_weight((1, -1), Frequency((1.2, 1.2)))
    assert rep.dist == 0.0
    assert rep.resonant


def test_convergent_distance_against_continued_fraction_bound():
    # oracle: 1/(2 q_{n+1}) < ||q_n w|| < 1/q_{n+1}
    cf = continued_fraction(GOLDEN, 25)
    om = Frequency((GOLDEN,))
    for n in range(2, 20):
        qn, pn, qn1 = cf.q[n], cf.p[n], cf.q[n + 1]
        d = divisor_weight((qn,), om).dist
        assert d == pytest.approx(abs(qn * GOLDEN - pn), rel=1e-9)
        assert 0.5 <= d * qn1 <= 1.0


def test_best_approximation_brute_force():
    dist = lambda k: abs(k * GOLDEN - round(k * GOLDEN))  # noqa: E731
    q = [x for x in continued_fraction(GOLDEN, 20).q if x <= 100]
    for n in range(2, len(q)):
        for k in range(1, q[n]):
            if k % q[n - 1]:
                assert dist(k) >= dist(q[n - 1]) - 1e-15


@given(st.lists(st.integers(-6, 6), min_size=2, max_size=2).filter(any), st.floats(0.01, 1.0), st.floats(1.0, 4.0))
def test_weight_symmetric(k, gamma, tau):
    om = Frequency((math.sqrt(2) - 1, math.sqrt(3) - 1), "dc-infinity", gamma, tau)
    a = divisor_weight(k, om)
    b = divisor_weight([-x for x in k], om)
    assert a.weight == b.weight
    assert a.dist == pytest.approx(b.dist, abs=1e-15)


def test_certify_independent_rejects_rational():
    with pytest.raises(ResonanceError) as info:
        certify_independent(Frequency((0.5,)), 8)
    assert info.value.k is not None


def test_certify_dc_golden():
    assert certify_dc(Frequency((GOLDEN,)), 0.1, 2.0, 16).certified


@pytest.mark.parametrize("text, want", [
    ("golden", (GOLDEN,)), ("silver", (SILVER,)), ("0.25", (0.25,)),
    ("sqrt:2", (math.sqrt(2) - 1,)), ("[0.1, 0.2]", (0.1, 0.2)),
])
def test_parse_omega(text, want):
    assert parse_omega(text) == pytest.approx(want)


def test_parse_regime():
    assert parse_regime("dc-infinity:0.1,2")["tau"] == 2.0


def test_frequency_json_round_trip():
    om = Frequency((GOLDEN,), "dc-infinity", 0.1, 2.0)
    back = Frequency.from_json_dict(om.to_json_dict())
    assert back == om
    assert np.allclose(back.vector, om.vector)
