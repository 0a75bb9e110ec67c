"""One test per acceptance criterion; each prints a PASS/FAIL line with its measured values."""

import pytest

from aperion.selftest import CRITERIA, run_criterion

LINES = []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    r = run_criterion(number)
    line = r.line()
    LINES.append(line)
    print(line)
    for c in r.checks:
        print(f"    {c.name}: {c.value!r} {c.relation} {c.threshold!r} {'ok' if c.passed else 'FAIL'}")
    assert r.error is None, r.error
    assert r.passed, r.first_failure()
