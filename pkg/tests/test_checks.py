from __future__ import annotations

from math import pi

import pytest

from correlated_rabi.checks import (
    CheckResult,
    check_dataset_round_trip,
    check_derivative,
    check_determinism,
    check_fisher_at_peak,
    check_full_drive,
    check_lineshape_round_trip,
    check_parity_conservation,
    check_protocol_ratio,
    check_subspace_invariance,
    check_unitarity,
    default_checks,
    run_checks,
)
from correlated_rabi.ms_model import MsDriveParams

TWO_PI = 2 * pi


@pytest.mark.parametrize(
    "check",
    [
        check_unitarity,
        check_parity_conservation,
        check_subspace_invariance,
        check_lineshape_round_trip,
        check_derivative,
        check_fisher_at_peak,
        check_protocol_ratio,
        check_determinism,
        check_dataset_round_trip,
    ],
    ids=lambda check: check.__name__,
)
def test_fast_checks_pass(check) -> None:
    result = check()

    assert result.passed, result.detail


def test_full_drive_check_runs_through_the_located_flip() -> None:
    result = check_full_drive()

    assert result.name == "full_drive"
    assert result.passed, result.detail
    flip_us = float(result.detail.split()[1])
    assert flip_us == pytest.approx(1960.0, rel=0.05)


def test_full_drive_check_fails_without_a_full_flip() -> None:
    # detuned by twice the coupling, the even pair never flips completely
    result = check_full_drive(MsDriveParams(delta=2 * TWO_PI * 255.0))

    assert not result.passed
    assert result.detail.startswith("IntegrationError")


def test_full_drive_check_is_optional() -> None:
    assert check_full_drive in default_checks()
    assert check_full_drive not in default_checks(include_full_ms=False)


def test_run_checks_turns_exceptions_into_failures() -> None:
    def check_broken() -> CheckResult:
        raise ValueError("no data")

    results = run_checks(checks=[check_fisher_at_peak, check_broken])

    assert [r.name for r in results] == ["fisher_at_peak", "broken"]
    assert results[0].passed
    assert results[1].to_dict() == {"name": "broken", "passed": False, "detail": "ValueError: no data"}
