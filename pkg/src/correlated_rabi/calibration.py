from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from math import pi, sqrt
from typing import Any, Literal, Sequence

import numpy as np
from scipy.stats import linregress

from .estimation import FitError, FitResult, LineshapeParams, fit_lineshape, initial_guess
from .ms_model import RegimeWarning
from .scan import NoiseModel, ScanAxis, ScanConfig, SpectrumDataset, run_scan

TWO_PI = 2.0 * pi
VALIDITY_RATIO = 10.0
TEXTBOOK_PREFACTOR = 0.25
DEFAULT_SPAN = 2.5
BRANCHES = (1, 2)


class CalibrationError(RuntimeError):
    """Raised when a calibration step cannot produce a frequency estimate."""


@dataclass(frozen=True)
class LightShiftParams:
    """Off-resonant addressing beam on one ion.

    ``omega_ls`` and ``delta_ls`` are in rad/s. ``power_scale`` maps beam power
    to ``omega_ls**2``; ``prefactor`` multiplies ``omega_ls**2 / delta_ls``
    (1 by default, 1/4 for the two-level AC Stark convention).
    """

    omega_ls: float
    delta_ls: float
    power_scale: float = 1.0
    prefactor: float = 1.0

    def __post_init__(self) -> None:
        if self.delta_ls == 0:
            raise CalibrationError("Light-shift beam detuning must be non-zero")
        if self.omega_ls < 0:
            raise CalibrationError("omega_ls must be non-negative")
        if self.power_scale <= 0:
            raise CalibrationError("power_scale must be positive")

    @classmethod
    def from_reference(
        cls,
        omega_ls: float,
        delta_ls: float,
        *,
        reference_power: float = 1.0,
        prefactor: float = 1.0,
    ) -> "LightShiftParams":
        """Beam whose Rabi frequency is ``omega_ls`` at ``reference_power``."""

        if reference_power <= 0:
            raise CalibrationError("reference_power must be positive")
        return cls(
            omega_ls,
            delta_ls,
            power_scale=omega_ls**2 / reference_power if omega_ls else 1.0,
            prefactor=prefactor,
        )

    def at_power(self, power: float) -> "LightShiftParams":
        if power < 0:
            raise CalibrationError(f"Beam power must be non-negative, got {power}")
        return replace(self, omega_ls=sqrt(self.power_scale * power))


def light_shift(p: LightShiftParams) -> float:
    """Transition shift ``prefactor * omega_ls**2 / delta_ls`` in rad/s.

    Warns with :class:`RegimeWarning` when ``|delta_ls| < 10 * omega_ls``.
    """

    if abs(p.delta_ls) < VALIDITY_RATIO * p.omega_ls:
        warnings.warn(
            f"Light-shift beam detuning {abs(p.delta_ls) / TWO_PI:.4g} Hz is less than "
            f"{VALIDITY_RATIO:g}x its Rabi frequency {p.omega_ls / TWO_PI:.4g} Hz",
            RegimeWarning,
            stacklevel=2,
        )
    return p.prefactor * p.omega_ls**2 / p.delta_ls


@dataclass(frozen=True)
class FrequencyEstimate:
    """Per-ion resonance positions from two single-ion scans, rad/s."""

    f1: float
    f2: float
    sigma1: float
    sigma2: float
    fits: tuple[FitResult, FitResult] = field(repr=False, compare=False)

    @property
    def f_mean(self) -> float:
        return 0.5 * (self.f1 + self.f2)

    @property
    def f_diff(self) -> float:
        return self.f1 - self.f2

    @property
    def sigma_mean(self) -> float:
        return 0.5 * sqrt(self.sigma1**2 + self.sigma2**2)

    @property
    def sigma_diff(self) -> float:
        return sqrt(self.sigma1**2 + self.sigma2**2)

    def to_dict(self) -> dict[str, float]:
        return {
            "f1_hz": self.f1 / TWO_PI,
            "f2_hz": self.f2 / TWO_PI,
            "f_mean_hz": self.f_mean / TWO_PI,
            "f_diff_hz": self.f_diff / TWO_PI,
            "sigma_mean_hz": self.sigma_mean / TWO_PI,
            "sigma_diff_hz": self.sigma_diff / TWO_PI,
        }


def _resonance(spec: SpectrumDataset, target: str, init: LineshapeParams | None) -> FitResult:
    start = init if init is not None else initial_guess(spec, target)
    start = replace(start, alpha=1.0)
    try:
        return fit_lineshape(
            spec, target, start, fixed=("tau", "alpha"), n_spins=1, require_convergence=True
        )
    except FitError as exc:
        raise CalibrationError(f"Single-ion resonance fit failed: {exc}") from exc


def extract_frequencies(
    spec1: SpectrumDataset,
    spec2: SpectrumDataset,
    *,
    target: str = "u",
    init: LineshapeParams | None = None,
) -> FrequencyEstimate:
    """Resonance positions of ion 1 and ion 2 from their delta1 scans.

    Each spectrum is fitted with the narrowing factor fixed at 1; the fitted
    centres are the ion transition frequencies relative to the reference.
    """

    fit1 = _resonance(spec1, target, init)
    fit2 = _resonance(spec2, target, init)
    return FrequencyEstimate(
        f1=fit1.params.delta0,
        f2=fit2.params.delta0,
        sigma1=fit1.std_errors.get("delta0", 0.0),
        sigma2=fit2.std_errors.get("delta0", 0.0),
        fits=(fit1, fit2),
    )


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    slope_error: float
    intercept_error: float
    r_squared: float
    residuals: tuple[float, ...] = ()

    def to_dict(self, *, unit_scale: float = TWO_PI) -> dict[str, Any]:
        return {
            "slope_hz": self.slope / unit_scale,
            "intercept_hz": self.intercept / unit_scale,
            "slope_error_hz": self.slope_error / unit_scale,
            "intercept_error_hz": self.intercept_error / unit_scale,
            "r_squared": self.r_squared,
            "residuals_hz": [r / unit_scale for r in self.residuals],
        }


def _linear_fit(x: np.ndarray, y: np.ndarray) -> LinearFit:
    if np.unique(x).size < 2:
        raise CalibrationError("A linear calibration needs at least two distinct powers")
    fit = linregress(x, y)
    residuals = y - (fit.intercept + fit.slope * x)
    # linregress reports NaN correlation for a perfectly flat response.
    r_squared = float(fit.rvalue**2) if np.isfinite(fit.rvalue) else 1.0
    return LinearFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_error=float(fit.stderr),
        intercept_error=float(fit.intercept_stderr),
        r_squared=r_squared,
        residuals=tuple(float(r) for r in residuals),
    )


@dataclass(frozen=True)
class CalibrationPoint:
    power: float
    which_ion: int
    applied_shift: float
    estimate: FrequencyEstimate

    @property
    def f_mean(self) -> float:
        return self.estimate.f_mean

    @property
    def f_diff(self) -> float:
        return self.estimate.f_diff

    def to_dict(self) -> dict[str, Any]:
        return {
            "power": self.power,
            "which_ion": self.which_ion,
            "applied_shift_hz": self.applied_shift / TWO_PI,
            **self.estimate.to_dict(),
        }


@dataclass(frozen=True)
class CalibrationCurve:
    """Mean and difference frequency against beam power, per shifted ion.

    ``linear_fit`` holds the f_diff line of each branch, ``mean_fit`` the
    f_mean line. ``baseline_diff`` is the zero-power frequency difference from
    a joint fit with a shared intercept across branches.
    """

    points: tuple[CalibrationPoint, ...]
    linear_fit: dict[int, LinearFit]
    mean_fit: dict[int, LinearFit]
    baseline_diff: float
    baseline_diff_error: float
    light: LightShiftParams

    def branch(self, which_ion: int) -> tuple[CalibrationPoint, ...]:
        return tuple(p for p in self.points if p.which_ion == which_ion)

    def calibrated_mean_shift(self, which_ion: int, power: float) -> tuple[float, float]:
        """Mean-frequency shift at ``power`` relative to zero power, with its error."""

        line = self.mean_fit[which_ion]
        for point in self.branch(which_ion):
            if np.isclose(point.power, power):
                return point.f_mean - line.intercept, sqrt(
                    point.estimate.sigma_mean**2 + line.intercept_error**2
                )
        return line.slope * power, abs(power) * line.slope_error

    def to_dict(self) -> dict[str, Any]:
        return {
            "points": [p.to_dict() for p in self.points],
            "linear_fit": {str(k): v.to_dict() for k, v in self.linear_fit.items()},
            "mean_fit": {str(k): v.to_dict() for k, v in self.mean_fit.items()},
            "baseline_diff_hz": self.baseline_diff / TWO_PI,
            "baseline_diff_error_hz": self.baseline_diff_error / TWO_PI,
            "light_shift": {
                "delta_ls_hz": self.light.delta_ls / TWO_PI,
                "power_scale_hz2": self.light.power_scale / TWO_PI**2,
                "prefactor": self.light.prefactor,
            },
        }


def _branches(which_ion: int | str) -> tuple[int, ...]:
    if which_ion in ("both", 0):
        return BRANCHES
    try:
        ion = int(which_ion)
    except (TypeError, ValueError):
        ion = -1
    if ion not in BRANCHES:
        raise CalibrationError(f"which_ion must be 1, 2 or 'both', got {which_ion!r}")
    return (ion,)


def _scan_seed(seed: int, *indices: int) -> int:
    state = np.random.SeedSequence([seed, *indices]).generate_state(1)
    return int(state[0])


def ion_shift_pair(shift: float, which_ion: int) -> tuple[float, float]:
    """Per-ion transition shifts with ``shift`` applied to ``which_ion``."""

    return (shift, 0.0) if which_ion == 1 else (0.0, shift)


def build_calibration(
    power_grid: Sequence[float],
    which_ion: int | Literal["both"],
    shots: int,
    seed: int,
    *,
    light: LightShiftParams | None = None,
    coupling: float = TWO_PI * 1.0e3,
    pulse_time: float | None = None,
    baseline_diff: float = 0.0,
    points: int = 41,
    span: float = DEFAULT_SPAN,
    noise: NoiseModel | None = None,
    threads: int = 1,
) -> CalibrationCurve:
    """Simulate the light-shift calibration and fit it.

    At each power the shifted ion's transition moves by :func:`light_shift`;
    both ions are scanned individually along delta1 around their expected
    resonances and fitted with :func:`extract_frequencies`. Every scan draws
    from its own seed derived from ``(seed, branch, power index, ion)``.
    """

    powers = np.asarray(power_grid, dtype=float).reshape(-1)
    if powers.size == 0:
        raise CalibrationError("power_grid must not be empty")
    if points < 5:
        raise CalibrationError("Each calibration scan needs at least five points")
    branches = _branches(which_ion)
    beam = light or LightShiftParams.from_reference(TWO_PI * 40e3, TWO_PI * 3.5e6)
    time = pulse_time if pulse_time is not None else pi / coupling

    jobs: list[tuple[int, int, float, float]] = []
    for branch in branches:
        for k, power in enumerate(powers):
            shift = light_shift(beam.at_power(power))
            jobs.append((branch, k, float(power), shift))

    def measure(job: tuple[int, int, float, float]) -> CalibrationPoint:
        branch, k, power, shift = job
        spectra = []
        for ion in BRANCHES:
            sign = 1.0 if ion == 1 else -1.0
            expected = (shift if ion == branch else 0.0) + sign * baseline_diff / 2.0
            axis = ScanAxis("delta1", expected - span * coupling, expected + span * coupling, points)
            cfg = ScanConfig(
                axis1=axis,
                model="single_spin",
                initial_state="d",
                ion=ion,
                pulse_time=time,
                coupling=coupling,
                ion_shifts=ion_shift_pair(shift, branch),
                baseline_diff=baseline_diff,
                shots=shots,
                noise=noise,
                seed=_scan_seed(seed, branch, k, ion),
            )
            spectra.append(run_scan(cfg, threads=1))
        estimate = extract_frequencies(spectra[0], spectra[1])
        return CalibrationPoint(power, branch, shift, estimate)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            calibration_points = list(pool.map(measure, jobs))
    else:
        calibration_points = [measure(job) for job in jobs]

    diff_fits: dict[int, LinearFit] = {}
    mean_fits: dict[int, LinearFit] = {}
    for branch in branches:
        rows = [p for p in calibration_points if p.which_ion == branch]
        x = np.array([p.power for p in rows])
        diff_fits[branch] = _linear_fit(x, np.array([p.f_diff for p in rows]))
        mean_fits[branch] = _linear_fit(x, np.array([p.f_mean for p in rows]))

    baseline, baseline_error = _shared_intercept(calibration_points, branches)
    return CalibrationCurve(
        points=tuple(calibration_points),
        linear_fit=diff_fits,
        mean_fit=mean_fits,
        baseline_diff=baseline,
        baseline_diff_error=baseline_error,
        light=beam,
    )


def _shared_intercept(
    points: Sequence[CalibrationPoint], branches: Sequence[int]
) -> tuple[float, float]:
    """Intercept of f_diff against power with one slope per branch."""

    design = np.zeros((len(points), 1 + len(branches)))
    design[:, 0] = 1.0
    y = np.empty(len(points))
    for row, point in enumerate(points):
        design[row, 1 + branches.index(point.which_ion)] = point.power
        y[row] = point.f_diff
    coefficients, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise CalibrationError("Calibration powers do not determine the shared intercept")
    residuals = y - design @ coefficients
    dof = max(len(points) - design.shape[1], 1)
    sigma2 = float(residuals @ residuals) / dof
    covariance = np.linalg.pinv(design.T @ design) * sigma2
    return float(coefficients[0]), float(sqrt(max(covariance[0, 0], 0.0)))


@dataclass(frozen=True)
class ShiftComparison:
    """Correlated even-subspace resonance shift against the calibrated mean shift."""

    power: float
    correlated_shift: float
    correlated_error: float
    calibrated_shift: float
    calibrated_error: float

    @property
    def residual(self) -> float:
        return self.correlated_shift - self.calibrated_shift

    @property
    def combined_error(self) -> float:
        return sqrt(self.correlated_error**2 + self.calibrated_error**2)

    def consistent(self, *, sigmas: float = 3.0, floor: float = 0.0) -> bool:
        return abs(self.residual) <= sigmas * self.combined_error + floor

    def to_dict(self) -> dict[str, float]:
        return {
            "power": self.power,
            "correlated_shift_hz": self.correlated_shift / TWO_PI,
            "correlated_error_hz": self.correlated_error / TWO_PI,
            "calibrated_shift_hz": self.calibrated_shift / TWO_PI,
            "calibrated_error_hz": self.calibrated_error / TWO_PI,
            "residual_hz": self.residual / TWO_PI,
        }


def compare_correlated_shift(
    curve: CalibrationCurve,
    which_ion: int,
    *,
    shots: int = 0,
    seed: int = 0,
    coupling: float = TWO_PI * 1.0e3,
    pulse_time: float | None = None,
    points: int = 41,
    span: float = DEFAULT_SPAN,
    noise: NoiseModel | None = None,
) -> list[ShiftComparison]:
    """Measure the correlated resonance shift at each calibrated power.

    A two-ion delta1 scan from ``dd`` probes the even subspace, whose
    resonance follows the mean transition frequency. Its fitted centre is
    compared with the calibration's mean shift relative to zero power.
    """

    if which_ion not in curve.linear_fit:
        raise CalibrationError(f"Calibration has no branch for ion {which_ion}")
    time = pulse_time if pulse_time is not None else pi / coupling
    comparisons = []
    for k, point in enumerate(curve.branch(which_ion)):
        expected = point.applied_shift / 2.0
        axis = ScanAxis(
            "delta1",
            expected - span * coupling / 2.0,
            expected + span * coupling / 2.0,
            points,
        )
        cfg = ScanConfig(
            axis1=axis,
            model="effective_ising",
            initial_state="dd",
            pulse_time=time,
            coupling=coupling,
            ion_shifts=ion_shift_pair(point.applied_shift, which_ion),
            shots=shots,
            noise=noise,
            seed=_scan_seed(seed, which_ion, k, 0),
        )
        spectrum = run_scan(cfg, threads=1)
        start = replace(initial_guess(spectrum, "uu"), alpha=2.0)
        try:
            fit = fit_lineshape(
                spectrum, "uu", start, fixed=("tau", "alpha"), require_convergence=True
            )
        except FitError as exc:
            raise CalibrationError(f"Correlated resonance fit failed: {exc}") from exc
        calibrated, calibrated_error = curve.calibrated_mean_shift(which_ion, point.power)
        comparisons.append(
            ShiftComparison(
                power=point.power,
                correlated_shift=fit.params.delta0,
                correlated_error=fit.std_errors.get("delta0", 0.0),
                calibrated_shift=calibrated,
                calibrated_error=calibrated_error,
            )
        )
    return comparisons
