from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import pi, sqrt
from typing import Any, Collection, Literal, Sequence

import numpy as np
from scipy.optimize import brentq, least_squares, minimize, minimize_scalar

from .scan import SpectrumDataset

TWO_PI = 2.0 * pi
PARAMETER_NAMES = ("A", "omega_line", "tau", "alpha", "delta0")
DEFAULT_FIXED = frozenset({"tau"})
MIN_POINTS = 5
MIN_STARTS = 8
_TIE_TOLERANCE = 1e-9


class FitError(RuntimeError):
    def __init__(self, message: str, *, result: "FitResult | None" = None) -> None:
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class LineshapeParams:
    """Rabi lineshape ``A sin^2((omega tau / 2) sqrt(s)) / s``.

    ``s = 1 + (alpha (delta - delta0) / omega_line)^2``; frequencies in rad/s,
    ``tau`` in seconds.
    """

    A: float
    omega_line: float
    tau: float
    alpha: float = 1.0
    delta0: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.A <= 1.0:
            raise ValueError(f"Contrast A must lie in [0, 1], got {self.A}")
        if self.omega_line <= 0:
            raise ValueError(f"omega_line must be positive, got {self.omega_line}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")

    @classmethod
    def pi_pulse(
        cls, omega_line: float, alpha: float = 1.0, *, A: float = 1.0, delta0: float = 0.0
    ) -> "LineshapeParams":
        return cls(A, omega_line, pi / omega_line, alpha, delta0)

    def as_vector(self) -> np.ndarray:
        return np.array([self.A, self.omega_line, self.tau, self.alpha, self.delta0])

    def to_dict(self) -> dict[str, float]:
        return {
            "A": self.A,
            "omega_line_hz": self.omega_line / TWO_PI,
            "tau_s": self.tau,
            "alpha": self.alpha,
            "delta0_hz": self.delta0 / TWO_PI,
        }


def _shape_terms(p: LineshapeParams, delta: np.ndarray | float):
    u = p.alpha * (np.asarray(delta, dtype=float) - p.delta0) / p.omega_line
    s = 1.0 + u**2
    phase = 0.5 * p.omega_line * p.tau * np.sqrt(s)
    return u, s, phase


def lineshape(p: LineshapeParams, delta: np.ndarray | float) -> np.ndarray | float:
    _, s, phase = _shape_terms(p, delta)
    value = p.A * np.sin(phase) ** 2 / s
    return float(value) if np.ndim(value) == 0 else value


def lineshape_derivative(p: LineshapeParams, delta: np.ndarray | float) -> np.ndarray | float:
    """Analytic dP/d(delta)."""

    u, s, phase = _shape_terms(p, delta)
    half_area = 0.5 * p.omega_line * p.tau
    d_du = p.A * (
        np.sin(2.0 * phase) * half_area * u / s**1.5 - 2.0 * u * np.sin(phase) ** 2 / s**2
    )
    value = d_du * p.alpha / p.omega_line
    return float(value) if np.ndim(value) == 0 else value


def map_hamiltonian_to_lineshape(
    generator_omega: float,
    subspace: Literal["even", "odd", "single"],
    *,
    n_spins: int = 2,
) -> tuple[float, float]:
    """Lineshape parameters implied by a generator coupling coefficient.

    Two-spin blocks (and the N-spin all-up/all-down block) have a dressed gap
    of twice the coupling coefficient and narrow by the number of spins whose
    detunings add; the single spin uses the same gap convention with alpha 1.
    """

    if subspace == "single":
        return 2.0 * generator_omega, 1.0
    if subspace == "even":
        return 2.0 * generator_omega, float(n_spins)
    if subspace == "odd":
        return 2.0 * generator_omega, 2.0
    raise ValueError(f"Unknown subspace {subspace!r}")


@dataclass(frozen=True)
class FitResult:
    params: LineshapeParams
    std_errors: dict[str, float]
    log_likelihood: float
    converged: bool
    n_points: int
    free: tuple[str, ...] = ()
    method: str = ""

    def to_dict(self) -> dict[str, Any]:
        errors: dict[str, float] = {}
        for name, value in self.std_errors.items():
            if name in ("omega_line", "delta0"):
                errors[f"{name}_hz"] = value / TWO_PI
            elif name == "tau":
                errors["tau_s"] = value
            else:
                errors[name] = value
        return {
            "params": self.params.to_dict(),
            "std_errors": errors,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "n_points": self.n_points,
            "free": list(self.free),
            "method": self.method,
        }


@dataclass(frozen=True)
class _Problem:
    """Fit problem in units normalized by the initial lineshape frequency."""

    x: np.ndarray
    y: np.ndarray | None
    counts: np.ndarray | None
    shots: np.ndarray | None
    scale: float
    base: np.ndarray
    free_index: tuple[int, ...]

    def full(self, free_values: np.ndarray) -> np.ndarray:
        vector = self.base.copy()
        vector[list(self.free_index)] = free_values
        return vector

    def model(self, free_values: np.ndarray) -> np.ndarray:
        A, w, tau, alpha, d0 = self.full(free_values)
        u = alpha * (self.x - d0) / w
        s = 1.0 + u**2
        return A * np.sin(0.5 * w * tau * np.sqrt(s)) ** 2 / s

    def residuals(self, free_values: np.ndarray) -> np.ndarray:
        assert self.y is not None
        return self.model(free_values) - self.y

    def nll(self, free_values: np.ndarray) -> float:
        assert self.counts is not None and self.shots is not None
        floor = 1.0 / (2.0 * self.shots)
        p = np.clip(self.model(free_values), floor, 1.0 - floor)
        k, n = self.counts, self.shots
        return float(-np.sum(k * np.log(p) + (n - k) * np.log1p(-p)))

    def to_physical(self, normalized: np.ndarray) -> LineshapeParams:
        A, w, tau, alpha, d0 = normalized
        return LineshapeParams(
            float(np.clip(A, 0.0, 1.0)),
            float(w * self.scale),
            float(tau / self.scale),
            float(alpha),
            float(d0 * self.scale),
        )


# Parameter bounds in normalized units.
_LOWER = np.array([0.0, 1e-6, 1e-9, 1e-3, -np.inf])
_UPPER = np.array([1.0, np.inf, np.inf, np.inf, np.inf])
_UNIT_SCALE = np.array([1.0, 1.0, -1.0, 0.0, 1.0])  # power of the frequency scale


def negative_log_likelihood(
    p: LineshapeParams,
    delta: np.ndarray,
    counts: np.ndarray,
    shots: np.ndarray | int,
) -> float:
    """Binomial NLL with the model clamped to [1/(2n), 1 - 1/(2n)]."""

    n = np.broadcast_to(np.asarray(shots, dtype=float), np.shape(counts))
    floor = 1.0 / (2.0 * n)
    model = np.clip(lineshape(p, np.asarray(delta, dtype=float)), floor, 1.0 - floor)
    k = np.asarray(counts, dtype=float)
    return float(-np.sum(k * np.log(model) + (n - k) * np.log1p(-model)))


def fit_lineshape(
    data: SpectrumDataset,
    target_state: str,
    init: LineshapeParams | None = None,
    fixed: Collection[str] | None = None,
    *,
    axis: str | None = None,
    n_spins: int | None = None,
    require_convergence: bool = False,
) -> FitResult:
    """Fit the Rabi lineshape to one population of a one-axis spectrum.

    Sampled datasets maximize the binomial likelihood; exact datasets use
    least squares. Local searches start from a deterministic grid of at
    least eight narrowing factors spanning [0.5, 2.5 N].

    Raises:
        FitError: For fewer than five points, all-zero data, or (with
            ``require_convergence``) when no start converged.
    """

    if axis is None:
        if len(data.axis_names) != 1:
            raise FitError("fit_lineshape() needs a one-axis spectrum or an explicit axis")
        axis = data.axis_names[0]
    if axis == "pulse_time":
        raise FitError("A lineshape fit needs a detuning axis, not pulse_time")
    if data.n_points < MIN_POINTS:
        raise FitError(f"Need at least {MIN_POINTS} points, got {data.n_points}")

    fixed_names = set(DEFAULT_FIXED if fixed is None else fixed)
    unknown = fixed_names - set(PARAMETER_NAMES)
    if unknown:
        raise FitError(f"Unknown parameter names in fixed mask: {sorted(unknown)}")
    free_names = tuple(name for name in PARAMETER_NAMES if name not in fixed_names)
    if not free_names:
        raise FitError("All lineshape parameters are fixed")

    x = data.axis_values(axis)
    index = data.label_index(target_state)
    if data.exact:
        assert data.populations is not None
        y = data.populations[:, index]
        if not np.any(y > 0):
            raise FitError("Degenerate data: the target population is zero everywhere")
        counts = shots = None
    else:
        assert data.counts is not None and data.shots is not None
        counts = data.counts[:, index].astype(float)
        shots = data.shots.astype(float)
        if not np.any(counts > 0):
            raise FitError("Degenerate data: all counts are zero")
        y = None

    start = init if init is not None else initial_guess(data, target_state, axis=axis)
    scale = start.omega_line
    base = start.as_vector() / scale**_UNIT_SCALE
    free_index = tuple(PARAMETER_NAMES.index(name) for name in free_names)
    problem = _Problem(x / scale, y, counts, shots, scale, base, free_index)

    spins = n_spins or int(data.metadata.get("n_spins", 2)) or 1
    starts = _start_points(problem, free_names, spins, data, index)
    candidates = [_local_fit(problem, s) for s in starts]
    best = _select(candidates, free_names)

    params = problem.to_physical(problem.full(best.values))
    errors = (
        _physical_errors(best.errors, free_names, scale) if best.converged else {}
    )
    result = FitResult(
        params=params,
        std_errors=errors,
        log_likelihood=best.log_likelihood,
        converged=best.converged,
        n_points=data.n_points,
        free=free_names,
        method="least_squares" if data.exact else "binomial_mle",
    )
    if require_convergence and not result.converged:
        raise FitError("Lineshape fit did not converge", result=result)
    return result


def initial_guess(
    data: SpectrumDataset, target_state: str, *, axis: str | None = None
) -> LineshapeParams:
    """Starting point built from the dataset's coupling, pulse time and peak."""

    coupling_hz = data.metadata.get("coupling_hz")
    if coupling_hz is None:
        raise FitError("Dataset metadata lacks coupling_hz; pass an explicit init")
    omega = TWO_PI * float(coupling_hz)
    tau = float(data.metadata.get("pulse_time_s", pi / omega))
    probs = data.probabilities(target_state)
    x = data.axis_values(axis)
    peak = int(np.argmax(probs))
    contrast = float(np.clip(probs[peak], 1e-3, 1.0))
    return LineshapeParams(contrast, omega, tau, 1.0, float(x[peak]))


@dataclass(frozen=True)
class _Candidate:
    values: np.ndarray
    objective: float
    log_likelihood: float
    converged: bool
    errors: np.ndarray = field(repr=False)
    alpha: float = 0.0


def _start_points(
    problem: _Problem,
    free_names: Sequence[str],
    spins: int,
    data: SpectrumDataset,
    index: int,
) -> list[np.ndarray]:
    base_free = problem.base[list(problem.free_index)]
    alpha_pos = free_names.index("alpha") if "alpha" in free_names else None
    alphas = np.linspace(0.5, 2.5 * spins, max(MIN_STARTS, 2 * spins + 4))

    centers = [None]
    if "delta0" in free_names:
        probs = data.probabilities(data.labels[index])
        centers = [problem.base[4], problem.x[int(np.argmax(probs))]]
        if np.isclose(centers[0], centers[1]):
            centers = centers[:1]

    starts = []
    for center in centers:
        seed = base_free.copy()
        if center is not None:
            seed[free_names.index("delta0")] = center
        if alpha_pos is None:
            starts.append(seed)
            continue
        for alpha in alphas:
            point = seed.copy()
            point[alpha_pos] = alpha
            starts.append(point)
    return starts


def _free_bounds(problem: _Problem) -> tuple[np.ndarray, np.ndarray]:
    idx = list(problem.free_index)
    return _LOWER[idx], _UPPER[idx]


def _local_fit(problem: _Problem, start: np.ndarray) -> _Candidate:
    lower, upper = _free_bounds(problem)
    start = np.clip(start, lower, upper)
    if problem.y is not None:
        return _least_squares_fit(problem, start, lower, upper)
    return _likelihood_fit(problem, start, lower, upper)


def _least_squares_fit(
    problem: _Problem, start: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> _Candidate:
    result = least_squares(
        problem.residuals,
        start,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=4000,
    )
    m, k = result.fun.size, result.x.size
    sse = float(result.fun @ result.fun)
    sigma2 = sse / max(m - k, 1)
    jtj = result.jac.T @ result.jac
    cov = np.linalg.pinv(jtj) * sigma2
    errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return _Candidate(
        values=result.x,
        objective=0.5 * sse,
        log_likelihood=-0.5 * sse,
        converged=bool(result.success),
        errors=errors,
        alpha=_alpha_of(problem, result.x),
    )


def _likelihood_fit(
    problem: _Problem, start: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> _Candidate:
    bounds = [
        (None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
        for lo, hi in zip(lower, upper)
    ]
    result = minimize(
        problem.nll,
        start,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-9},
    )
    hessian = _numeric_hessian(problem.nll, result.x, lower, upper)
    try:
        cov = np.linalg.inv(hessian)
        diag = np.diag(cov)
        positive = bool(np.all(diag > 0) and np.all(np.isfinite(diag)))
    except np.linalg.LinAlgError:
        diag, positive = np.full(result.x.size, np.nan), False
    errors = np.sqrt(np.clip(diag, 0.0, None)) if positive else np.full(result.x.size, np.nan)
    return _Candidate(
        values=result.x,
        objective=float(result.fun),
        log_likelihood=-float(result.fun),
        converged=bool(result.success) and positive,
        errors=errors,
        alpha=_alpha_of(problem, result.x),
    )


def _numeric_hessian(
    fun, x: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> np.ndarray:
    """Central-difference Hessian, stepping inward at active bounds."""

    n = x.size
    steps = 1e-4 * np.maximum(np.abs(x), 1e-2)
    center = np.clip(x, lower + 2.0 * steps, upper - 2.0 * steps)
    hessian = np.empty((n, n))
    f0 = fun(center)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = steps[i]
        hessian[i, i] = (fun(center + ei) - 2.0 * f0 + fun(center - ei)) / steps[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = steps[j]
            value = (
                fun(center + ei + ej)
                - fun(center + ei - ej)
                - fun(center - ei + ej)
                + fun(center - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
            hessian[i, j] = hessian[j, i] = value
    return hessian


def _alpha_of(problem: _Problem, free_values: np.ndarray) -> float:
    return float(problem.full(free_values)[3])


def _select(candidates: Sequence[_Candidate], free_names: Sequence[str]) -> _Candidate:
    """Lowest objective; near-ties go to the smallest narrowing factor."""

    pool = [c for c in candidates if c.converged] or list(candidates)
    best_value = min(c.objective for c in pool)
    tolerance = _TIE_TOLERANCE * max(1.0, abs(best_value))
    tied = [c for c in pool if c.objective <= best_value + tolerance]
    return min(tied, key=lambda c: (c.alpha, c.objective))


def _physical_errors(
    errors: np.ndarray, free_names: Sequence[str], scale: float
) -> dict[str, float]:
    result = {name: 0.0 for name in PARAMETER_NAMES}
    for name, value in zip(free_names, errors):
        power = _UNIT_SCALE[PARAMETER_NAMES.index(name)]
        result[name] = float(value * scale**power)
    return result


def fisher_per_shot(p: LineshapeParams, delta: np.ndarray | float) -> np.ndarray | float:
    """Single-shot Fisher information about the resonance position.

    Zero where the excitation probability is exactly 0 or 1.
    """

    prob = np.asarray(lineshape(p, delta), dtype=float)
    slope = np.asarray(lineshape_derivative(p, delta), dtype=float)
    variance = prob * (1.0 - prob)
    with np.errstate(divide="ignore", invalid="ignore"):
        info = np.where(variance > 0, slope**2 / np.where(variance > 0, variance, 1.0), 0.0)
    return float(info) if info.ndim == 0 else info


def product_fisher_per_shot(p: LineshapeParams, delta: np.ndarray | float) -> np.ndarray | float:
    """Fisher information of the both-excited outcome of two uncorrelated ions."""

    prob = np.asarray(lineshape(p, delta), dtype=float)
    slope = np.asarray(lineshape_derivative(p, delta), dtype=float)
    joint = prob**2
    variance = joint * (1.0 - joint)
    with np.errstate(divide="ignore", invalid="ignore"):
        info = np.where(
            variance > 0, (2.0 * prob * slope) ** 2 / np.where(variance > 0, variance, 1.0), 0.0
        )
    return float(info) if info.ndim == 0 else info


def optimal_working_point(
    information, p: LineshapeParams, grid: np.ndarray | None = None
) -> tuple[float, float]:
    """Detuning maximizing ``information(p, delta)`` on one side of the peak."""

    if grid is None:
        grid = p.delta0 + np.linspace(0.0, 4.0 * p.omega_line / p.alpha, 4001)[1:]
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(information(p, grid))
    best = int(np.argmax(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    if hi <= lo:
        return float(grid[best]), float(values[best])
    refined = minimize_scalar(
        lambda d: -float(information(p, d)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 * max(1.0, abs(hi))},
    )
    if -refined.fun >= values[best]:
        return float(refined.x), float(-refined.fun)
    return float(grid[best]), float(values[best])


def frequency_uncertainty(information: float, shots: float) -> float:
    """Cramer-Rao bound 1 / sqrt(shots * F)."""

    if information <= 0 or shots <= 0:
        return float("inf")
    return 1.0 / sqrt(shots * information)


@dataclass(frozen=True)
class ProtocolReport:
    """Optimal-point frequency uncertainties at a fixed number of repetitions.

    Fisher values are per repetition; ``sigma_*`` are in rad/s.
    """

    shots_per_point: int
    single_fisher: float
    pair_fisher: float
    product_fisher: float
    correlated_fisher: float
    single_delta: float
    product_delta: float
    correlated_delta: float
    product_width_ratio: float

    @property
    def sigma_single(self) -> float:
        return frequency_uncertainty(self.single_fisher, self.shots_per_point)

    @property
    def sigma_pair(self) -> float:
        return frequency_uncertainty(self.pair_fisher, self.shots_per_point)

    @property
    def sigma_product(self) -> float:
        return frequency_uncertainty(self.product_fisher, self.shots_per_point)

    @property
    def sigma_correlated(self) -> float:
        return frequency_uncertainty(self.correlated_fisher, self.shots_per_point)

    @property
    def correlated_over_pair(self) -> float:
        return self.sigma_correlated / self.sigma_pair

    @property
    def correlated_over_single(self) -> float:
        return self.sigma_correlated / self.sigma_single

    @property
    def product_over_single(self) -> float:
        return self.sigma_product / self.sigma_single

    def to_dict(self) -> dict[str, Any]:
        return {
            "shots_per_point": self.shots_per_point,
            "fisher_per_repetition": {
                "single": self.single_fisher * TWO_PI**2,
                "uncorrelated_pair": self.pair_fisher * TWO_PI**2,
                "product": self.product_fisher * TWO_PI**2,
                "correlated": self.correlated_fisher * TWO_PI**2,
                "unit": "1/Hz^2",
            },
            "working_point_hz": {
                "single": self.single_delta / TWO_PI,
                "product": self.product_delta / TWO_PI,
                "correlated": self.correlated_delta / TWO_PI,
            },
            "sigma_hz": {
                "single": self.sigma_single / TWO_PI,
                "uncorrelated_pair": self.sigma_pair / TWO_PI,
                "product": self.sigma_product / TWO_PI,
                "correlated": self.sigma_correlated / TWO_PI,
            },
            "ratios": {
                "correlated_over_pair": self.correlated_over_pair,
                "correlated_over_single": self.correlated_over_single,
                "product_over_single": self.product_over_single,
            },
            "product_width_ratio": self.product_width_ratio,
        }


def product_spectrum_width_ratio(p: LineshapeParams) -> float:
    """FWHM of the both-excited spectrum P^2 relative to the single spectrum P.

    Requires an on-resonance pulse area of at most pi, where the main lobe
    falls monotonically from its peak.
    """

    peak = float(lineshape(p, p.delta0))
    if peak <= 0:
        raise ValueError("Lineshape has no peak to measure")
    # First zero of the main lobe for a pi-pulse sits at u = sqrt(3).
    u_edge = sqrt(max((2.0 * pi / (p.omega_line * p.tau)) ** 2 - 1.0, 1e-12))
    half_width = u_edge * p.omega_line / p.alpha
    edge = p.delta0 + half_width

    def crossing(level: float) -> float:
        return brentq(
            lambda d: float(lineshape(p, d)) - level, p.delta0, edge, xtol=1e-13 * half_width
        )

    half_single = crossing(peak / 2.0) - p.delta0
    half_product = crossing(peak / sqrt(2.0)) - p.delta0
    return half_product / half_single


def protocol_comparison(
    shots_per_point: int,
    grid: np.ndarray | None = None,
    *,
    omega_line: float = TWO_PI * 1.0e3,
    contrast: float = 1.0,
) -> ProtocolReport:
    """Compare single-ion, uncorrelated-pair, product and correlated spectroscopy.

    Every protocol uses a pi pulse at the same lineshape frequency; the pair
    measures both ions independently every repetition (twice the single-ion
    information), the product protocol records only the both-excited outcome,
    and the correlated rotation narrows by a factor of two.
    """

    if shots_per_point <= 0:
        raise ValueError("shots_per_point must be positive")
    single = LineshapeParams.pi_pulse(omega_line, 1.0, A=contrast)
    correlated = LineshapeParams.pi_pulse(omega_line, 2.0, A=contrast)

    single_delta, single_info = optimal_working_point(fisher_per_shot, single, grid)
    product_delta, product_info = optimal_working_point(product_fisher_per_shot, single, grid)
    corr_delta, corr_info = optimal_working_point(fisher_per_shot, correlated, grid)
    return ProtocolReport(
        shots_per_point=shots_per_point,
        single_fisher=single_info,
        pair_fisher=2.0 * single_info,
        product_fisher=product_info,
        correlated_fisher=corr_info,
        single_delta=single_delta,
        product_delta=product_delta,
        correlated_delta=corr_delta,
        product_width_ratio=product_spectrum_width_ratio(single),
    )


@dataclass(frozen=True)
class MonteCarloReport:
    replicas: int
    shots_per_point: int
    sigma_single: float
    sigma_pair: float
    sigma_product: float
    sigma_correlated: float

    @property
    def correlated_over_pair(self) -> float:
        return self.sigma_correlated / self.sigma_pair

    @property
    def correlated_over_single(self) -> float:
        return self.sigma_correlated / self.sigma_single

    def to_dict(self) -> dict[str, Any]:
        return {
            "replicas": self.replicas,
            "shots_per_point": self.shots_per_point,
            "sigma_hz": {
                "single": self.sigma_single / TWO_PI,
                "uncorrelated_pair": self.sigma_pair / TWO_PI,
                "product": self.sigma_product / TWO_PI,
                "correlated": self.sigma_correlated / TWO_PI,
            },
            "ratios": {
                "correlated_over_pair": self.correlated_over_pair,
                "correlated_over_single": self.correlated_over_single,
            },
        }


def _two_point_spread(
    probability,
    slope: float,
    working_point: float,
    shots: int,
    replicas: int,
    rng: np.random.Generator,
    measurements: int = 1,
) -> float:
    """Spread of the slope estimator from counts at +/- the working point."""

    p_plus = probability(working_point)
    p_minus = probability(-working_point)
    n = shots * measurements
    k_plus = rng.binomial(n, p_plus, size=replicas)
    k_minus = rng.binomial(n, p_minus, size=replicas)
    estimates = (k_minus / n - k_plus / n) / (2.0 * slope)
    return float(np.std(estimates, ddof=1))


def monte_carlo_uncertainty(
    shots_per_point: int,
    replicas: int,
    seed: int,
    *,
    omega_line: float = TWO_PI * 1.0e3,
    contrast: float = 1.0,
    threads: int = 1,
) -> MonteCarloReport:
    """Empirical estimator spreads confirming the Fisher-information ratios.

    Each replica measures at both working points and estimates the resonance
    shift from the population imbalance. Each protocol draws from its own
    seeded stream, so the result does not depend on ``threads``.
    """

    if replicas < 2:
        raise ValueError("Need at least two replicas")
    report = protocol_comparison(shots_per_point, omega_line=omega_line, contrast=contrast)
    single = LineshapeParams.pi_pulse(omega_line, 1.0, A=contrast)
    correlated = LineshapeParams.pi_pulse(omega_line, 2.0, A=contrast)

    def single_prob(d: float) -> float:
        return float(lineshape(single, d))

    def product_prob(d: float) -> float:
        return float(lineshape(single, d)) ** 2

    def correlated_prob(d: float) -> float:
        return float(lineshape(correlated, d))

    single_slope = -float(lineshape_derivative(single, report.single_delta))
    product_slope = -2.0 * single_prob(report.product_delta) * float(
        lineshape_derivative(single, report.product_delta)
    )
    corr_slope = -float(lineshape_derivative(correlated, report.correlated_delta))

    jobs = [
        (single_prob, single_slope, report.single_delta, 1),
        (single_prob, single_slope, report.single_delta, 2),
        (product_prob, product_slope, report.product_delta, 1),
        (correlated_prob, corr_slope, report.correlated_delta, 1),
    ]

    def run(job_index: int) -> float:
        prob, slope, point, measurements = jobs[job_index]
        rng = np.random.default_rng(np.random.SeedSequence([seed, job_index]))
        return _two_point_spread(prob, slope, point, shots_per_point, replicas, rng, measurements)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            spreads = list(pool.map(run, range(len(jobs))))
    else:
        spreads = [run(i) for i in range(len(jobs))]

    return MonteCarloReport(
        replicas=replicas,
        shots_per_point=shots_per_point,
        sigma_single=spreads[0],
        sigma_pair=spreads[1],
        sigma_product=spreads[2],
        sigma_correlated=spreads[3],
    )


def fitted_curve(result: FitResult, grid: np.ndarray) -> np.ndarray:
    return np.asarray(lineshape(result.params, grid))