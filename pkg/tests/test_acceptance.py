"""Acceptance criteria 1-11 at their stated tolerances.

Each criterion runs once per session; its PASS/FAIL line is printed and
repeated in the terminal summary.
"""

import os

import pytest

from conftest import ACCEPTANCE_LINES
from metlab.harness import CHECKS

THREADS = max(1, int(os.environ.get("METLAB_THREADS", os.cpu_count() or 1)))


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number):
    kw = {"threads": THREADS} if number in (2, 3) else {}
    r = CHECKS[number](**kw)
    line = f"criterion {number}: {r.line()} ({r.runtime:.1f}s)"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert r.passed, r.detail
