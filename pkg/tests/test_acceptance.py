"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import pytest

from metastable_rates.acceptance import CRITERIA, STATISTICAL

from .conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    fn = CRITERIA[number]
    res = fn(jobs=1) if number in STATISTICAL or number == 12 else fn()
    line = res.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, line
