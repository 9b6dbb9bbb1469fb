"""Invariant suite behind the ``verify`` command."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from math import pi, sqrt
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import Callable

import numpy as np

from .dataset_io import read_dataset, write_dataset
from .estimation import (
    LineshapeParams,
    fisher_per_shot,
    lineshape,
    lineshape_derivative,
    map_hamiltonian_to_lineshape,
    protocol_comparison,
)
from .hamiltonians import IsingParams, commutator, ising_two_spin, parity_operator
from .ms_model import (
    IntegrationError,
    IntegrationWarning,
    MsDriveParams,
    effective_params,
    locate_pi_time,
    ms_hamiltonian,
    propagate_time_dependent,
    trajectory,
)
from .operators import Operator, StateVector, basis_state, populations, propagate_static
from .scan import ScanAxis, ScanConfig, run_scan

TWO_PI = 2.0 * pi
COUPLING = TWO_PI * 1.0e3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict[str, object]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _check(name: str, value: float, limit: float, label: str) -> CheckResult:
    return CheckResult(name, bool(value <= limit), f"{label} {value:.3g} (limit {limit:.1g})")


def check_unitarity() -> CheckResult:
    rng = np.random.default_rng(7)
    raw = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = Operator((raw + raw.conj().T) * COUPLING, hermitian=True)
    psi = StateVector.normalized(rng.normal(size=4) + 1j * rng.normal(size=4), (2, 2))
    drift = max(
        abs(float(np.linalg.norm(propagate_static(H, psi, t).amplitudes)) - 1.0)
        for t in np.linspace(0.0, 10e-3, 11)
    )
    return _check("unitarity", drift, 1e-10, "norm drift")


def check_parity_conservation() -> CheckResult:
    H = ising_two_spin(IsingParams(COUPLING, 0.3 * COUPLING, -0.7 * COUPLING))
    defect = float(np.max(np.abs(commutator(H, parity_operator(2)).matrix))) / COUPLING
    return _check("parity_conservation", defect, 1e-12, "relative commutator")


def _delta_scan(parameter: str, initial: str, **fixed: float):
    axis = ScanAxis(parameter, -3.0 * COUPLING, 3.0 * COUPLING, 41)
    return run_scan(ScanConfig(axis1=axis, initial_state=initial, coupling=COUPLING, **fixed))


def check_subspace_invariance() -> CheckResult:
    worst = 0.0
    for parameter, initial, other in (
        ("delta2", "dd", "delta1"),
        ("delta1", "ud", "delta2"),
    ):
        ds = _delta_scan(parameter, initial, **{other: 0.4 * COUPLING})
        assert ds.populations is not None
        worst = max(worst, float(np.max(np.ptp(ds.populations, axis=0))))
    return _check("subspace_invariance", worst, 1e-12, "max population change")


def _round_trip_residual(cfg: ScanConfig, target: str, subspace: str, n_spins: int = 2) -> float:
    ds = run_scan(cfg)
    omega_line, alpha = map_hamiltonian_to_lineshape(cfg.coupling / 2.0, subspace, n_spins=n_spins)
    p = LineshapeParams(1.0, omega_line, cfg.resolved_pulse_time(), alpha)
    predicted = lineshape(p, ds.axis_values())
    return float(np.max(np.abs(ds.probabilities(target) - predicted)))


def check_lineshape_round_trip() -> CheckResult:
    axis = ScanAxis("delta1", -4.0 * COUPLING, 4.0 * COUPLING, 41)
    cases = [
        (ScanConfig(axis1=axis, coupling=COUPLING), "uu", "even", 2),
        (ScanConfig(axis1=axis, model="single_spin", initial_state="d", coupling=COUPLING), "u", "single", 1),
        (
            ScanConfig(axis1=replace(axis, parameter="delta2"), initial_state="ud", coupling=COUPLING),
            "du",
            "odd",
            2,
        ),
        (
            ScanConfig(axis1=axis, model="n_spin", n_spins=3, initial_state="ddd", coupling=COUPLING),
            "uuu",
            "even",
            3,
        ),
    ]
    worst = max(_round_trip_residual(cfg, target, sub, n) for cfg, target, sub, n in cases)
    return _check("lineshape_round_trip", worst, 1e-9, "max residual")


def check_derivative() -> CheckResult:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        omega = COUPLING * rng.uniform(0.5, 2.0)
        p = LineshapeParams(
            rng.uniform(0.5, 1.0), omega, rng.uniform(0.5, 1.0) * pi / omega,
            rng.uniform(0.5, 4.0), rng.uniform(-1.0, 1.0) * omega,
        )
        delta = p.delta0 + rng.uniform(0.1, 3.0) * omega / p.alpha
        step = 1e-5 * omega / p.alpha
        numeric = (lineshape(p, delta + step) - lineshape(p, delta - step)) / (2.0 * step)
        analytic = lineshape_derivative(p, delta)
        scale = max(abs(analytic), 1e-3 * p.alpha / omega)
        worst = max(worst, abs(numeric - analytic) / scale)
    return _check("lineshape_derivative", worst, 1e-6, "relative error")


def check_protocol_ratio() -> CheckResult:
    report = protocol_comparison(10_000)
    error = max(
        abs(report.correlated_over_pair - 1.0 / sqrt(2.0)) / (1.0 / sqrt(2.0)),
        abs(report.correlated_over_single - 0.5) / 0.5,
    )
    return _check("protocol_ratio", error, 0.02, "relative deviation")


def check_fisher_at_peak() -> CheckResult:
    value = fisher_per_shot(LineshapeParams.pi_pulse(COUPLING), 0.0)
    return _check("fisher_at_peak", abs(value), 0.0, "information")


def check_determinism() -> CheckResult:
    axis = ScanAxis("delta1", -2.0 * COUPLING, 2.0 * COUPLING, 21)
    cfg = ScanConfig(axis1=axis, coupling=COUPLING, shots=200, seed=5)
    serial = run_scan(cfg, threads=1)
    parallel = run_scan(cfg, threads=4)
    assert serial.counts is not None and parallel.counts is not None
    mismatch = float(np.count_nonzero(serial.counts != parallel.counts))
    return _check("thread_determinism", mismatch, 0.0, "differing counts")


def check_dataset_round_trip() -> CheckResult:
    axis = ScanAxis("delta1", -COUPLING, COUPLING, 3)
    exact = run_scan(ScanConfig(axis1=axis, coupling=COUPLING))
    sampled = run_scan(ScanConfig(axis1=axis, coupling=COUPLING, shots=50, seed=1))
    with TemporaryDirectory() as tmpdir:
        worst = 0.0
        for name, ds in (("exact", exact), ("sampled", sampled)):
            back = read_dataset(write_dataset(ds, Path(tmpdir) / f"{name}.tsv"))
            if ds.exact:
                assert ds.populations is not None and back.populations is not None
                worst = max(worst, float(np.max(np.abs(ds.populations - back.populations))))
            else:
                assert ds.counts is not None and back.counts is not None
                worst = max(worst, float(np.max(np.abs(ds.counts - back.counts))))
    return _check("dataset_round_trip", worst, 1e-12, "max difference")


def check_full_drive(drive: MsDriveParams | None = None, samples: int = 41) -> CheckResult:
    """Full drive over one located flip time.

    Fails on integrator warnings (norm drift, tolerance sensitivity), a peak
    below 0.95, odd-subspace leakage of 0.05 or more, or a deviation from the
    effective model of 0.05 or more.
    """

    drive = drive if drive is not None else MsDriveParams()
    generator = ms_hamiltonian(drive)
    psi0 = drive.initial_state("dd")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        try:
            report = locate_pi_time(drive)
        except IntegrationError as exc:
            return CheckResult("full_drive", False, f"IntegrationError: {exc}")
        times = np.linspace(0.0, report.located, samples)
        full = trajectory(generator, psi0, times).populations()
        propagate_time_dependent(generator, psi0, report.located, verify_convergence=True)
    warned = [str(w.message) for w in caught if issubclass(w.category, IntegrationWarning)]
    if warned:
        return CheckResult("full_drive", False, f"integrator did not converge: {warned[0]}")

    H = ising_two_spin(effective_params(drive))
    effective = np.array([populations(propagate_static(H, basis_state("dd"), t)) for t in times])
    leakage = float(np.max(full[:, 1] + full[:, 2]))
    deviation = float(np.max(np.abs(full - effective)))
    passed = report.peak_population >= 0.95 and leakage < 0.05 and deviation < 0.05
    detail = (
        f"flip {report.located * 1e6:.0f} us, peak {report.peak_population:.4f}, "
        f"leakage {leakage:.3g}, effective-model deviation {deviation:.3g}"
    )
    return CheckResult("full_drive", bool(passed), detail)


def default_checks(include_full_ms: bool = True) -> list[Callable[[], CheckResult]]:
    checks = [
        check_unitarity,
        check_parity_conservation,
        check_subspace_invariance,
        check_lineshape_round_trip,
        check_derivative,
        check_fisher_at_peak,
        check_protocol_ratio,
        check_determinism,
        check_dataset_round_trip,
    ]
    if include_full_ms:
        checks.append(check_full_drive)
    return checks


def run_checks(
    include_full_ms: bool = True,
    checks: list[Callable[[], CheckResult]] | None = None,
) -> list[CheckResult]:
    """Run every check, turning an exception into a failed result."""

    results = []
    for check in checks if checks is not None else default_checks(include_full_ms):
        try:
            results.append(check())
        except Exception as exc:  # noqa: BLE001 - one broken check must not hide the others
            name = getattr(check, "__name__", "check").removeprefix("check_")
            results.append(CheckResult(name, False, f"{exc.__class__.__name__}: {exc}"))
    return results
