"""Acceptance suite: one test per criterion, run at the full tier.

Each test prints a ``PASS``/``FAIL criterion N`` line with its details; the
lines are also repeated in the pytest terminal summary.  Run standalone with
``python3 tests/test_acceptance.py`` to get just the ten lines.
"""
import json
import sys

import pytest

from bbelab import acceptance

TIER = "full"
RESULTS = []


def _run(check):
    r = check(TIER)
    RESULTS.append(r)
    print(r.line())
    print("    " + json.dumps(r.details, default=str))
    return r


@pytest.mark.parametrize("check", acceptance.ALL_CHECKS,
                         ids=[f"criterion_{i + 1:02d}_{c.__name__[6:]}"
                              for i, c in enumerate(acceptance.ALL_CHECKS)])
def test_criterion(check):
    r = _run(check)
    assert r.passed, r.details


if __name__ == "__main__":
    tier = sys.argv[1] if len(sys.argv) > 1 else TIER
    res = acceptance.run_all(tier)
    for r in res:
        print(r.line())
    sys.exit(0 if all(r.passed for r in res) else 1)
