"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import pytest

from conftest import ACCEPTANCE_LINES
from timebin_qss.validation import CHECKS, CheckResult

TITLES = {
    1: "coincidence_rates",
    2: "eve_intercept_resend",
    3: "detection_probabilities",
    4: "closed_forms",
    5: "threshold_table",
    6: "honest_operation",
    7: "dishonest_recipient",
    8: "beam_splitting",
    9: "key_secrecy",
}


@pytest.mark.parametrize("number", sorted(CHECKS), ids=lambda n: f"criterion_{n}_{TITLES[n]}")
def test_criterion(number):
    res: CheckResult = CHECKS[number](0, 1.0)
    line = res.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.passed, res.details
