"""Acceptance criteria, one test per item, each printing a pass/fail line."""

import json

import pytest

from sublinear_lab.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", [n for n, _, _ in CRITERIA], ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print("\n" + result.line(True))
    assert result.passed, json.dumps(result.details, indent=1, default=str)
