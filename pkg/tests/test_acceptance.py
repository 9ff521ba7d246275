"""Acceptance gate: every criterion at its stated tolerance and runtime budget."""

import pytest

from nonlocal_kit.acceptance import ALL_CHECKS

RESULTS = []


@pytest.mark.slow
@pytest.mark.parametrize("check", ALL_CHECKS, ids=[fn.__name__.removeprefix("check_") for fn in ALL_CHECKS])
def test_criterion(check):
    c = check()
    RESULTS.append(c)
    print(c.line())
    if c.gating:
        assert c.passed, c.line()
