from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import pi
from typing import Any, Sequence

import numpy as np
from scipy.integrate import OdeSolution, solve_ivp
from scipy.optimize import curve_fit

from .hamiltonians import IsingParams
from .operators import (
    Operator,
    StateVector,
    basis_state,
    destroy,
    identity,
    population_labels,
    populations,
    raising,
    tensor,
)

TWO_PI = 2.0 * pi
DEFAULT_TOLERANCE = 1e-8
# Local error target of the solver relative to the requested final accuracy.
SOLVER_TOLERANCE_SCALE = 1e-3
MIN_SOLVER_TOLERANCE = 1e-13
TRUNCATION_LIMIT = 1e-4
FULL_FLIP_POPULATION = 0.95
FOCK_HEADROOM = 4
REGIME_RATIO = 5.0
# Experimentally quoted flip time for the reference drive parameters.
REPORTED_PI_TIME_S = 1.3e-3


class RegimeWarning(UserWarning):
    """A model is being used outside the regime where it is accurate."""


class IntegrationWarning(RuntimeWarning):
    """The integrator result needed correction or failed a convergence check."""


class DriveParameterError(ValueError):
    """Raised for invalid bichromatic drive parameters."""


class IntegrationError(RuntimeError):
    """Raised when the time-dependent integration cannot complete."""


class TruncationError(IntegrationError):
    def __init__(self, message: str, *, edge_population: float) -> None:
        super().__init__(message)
        self.edge_population = edge_population


@dataclass(frozen=True)
class MsDriveParams:
    """Bichromatic drive on two spins sharing one motional mode.

    Frequencies are angular (rad/s). The tones sit at
    ``w0 +/- (nu + epsilon) - delta``; ``carrier_offsets`` holds each ion's
    transition offset from the mean transition frequency.
    """

    nu: float = TWO_PI * 1.0e6
    epsilon: float = TWO_PI * 25.5e3
    delta: float = 0.0
    eta: float = 0.05
    omega_carrier: float = TWO_PI * 51.0e3
    carrier_offsets: tuple[float, float] = (0.0, 0.0)
    n_max: int = 6
    n_init: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "carrier_offsets", tuple(float(x) for x in self.carrier_offsets)
        )
        if len(self.carrier_offsets) != 2:
            raise DriveParameterError("carrier_offsets needs one entry per ion")
        if not 0 < self.eta <= 0.3:
            raise DriveParameterError(f"eta must lie in (0, 0.3], got {self.eta}")
        if self.epsilon <= 0:
            raise DriveParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.nu <= 0:
            raise DriveParameterError(f"nu must be positive, got {self.nu}")
        if self.omega_carrier < 0:
            raise DriveParameterError("omega_carrier must be non-negative")
        if self.n_init < 0 or self.n_max < 1:
            raise DriveParameterError("Fock levels must be non-negative")

    @property
    def levels(self) -> int:
        return self.n_max + 1

    @property
    def sideband_rabi(self) -> float:
        return self.eta * self.omega_carrier

    def initial_state(self, spins: str = "dd") -> StateVector:
        return basis_state(spins).tensor_with_fock(self.n_init, self.levels)


@dataclass(frozen=True)
class TimeDependentGenerator:
    """H(t) = sum_k amplitude_k * exp(-i frequency_k t) * operator_k.

    Hermitian conjugate terms are stored explicitly, so H(t) is Hermitian at
    every t when the term list is closed under conjugation.
    """

    operators: np.ndarray
    amplitudes: np.ndarray
    frequencies: np.ndarray
    dims: tuple[int, ...]
    n_spins: int

    def __post_init__(self) -> None:
        ops = np.array(self.operators, dtype=complex)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        freqs = np.array(self.frequencies, dtype=float).reshape(-1)
        if ops.ndim != 3 or not (ops.shape[0] == amps.size == freqs.size):
            raise DriveParameterError("Generator terms have inconsistent shapes")
        for array in (ops, amps, freqs):
            array.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "frequencies", freqs)

    @classmethod
    def constant(cls, op: Operator, dims: Sequence[int], n_spins: int) -> "TimeDependentGenerator":
        if not op.hermitian:
            raise DriveParameterError("A constant generator must be hermitian")
        return cls(op.matrix[None, :, :], np.ones(1), np.zeros(1), tuple(dims), n_spins)

    @property
    def dim(self) -> int:
        return self.operators.shape[1]

    def coefficients(self, t: float) -> np.ndarray:
        return self.amplitudes * np.exp(-1j * self.frequencies * t)

    def matrix(self, t: float) -> np.ndarray:
        return np.tensordot(self.coefficients(t), self.operators, axes=1)

    def __call__(self, t: float) -> Operator:
        return Operator(self.matrix(t), hermitian=True)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return -1j * (self.coefficients(t) @ (self.operators @ y))

    @property
    def fastest_period(self) -> float:
        """Period of the fastest oscillating term, ``inf`` for a static generator."""

        rates = np.abs(self.frequencies[np.abs(self.amplitudes) > 0])
        fastest = float(rates.max()) if rates.size else 0.0
        return TWO_PI / fastest if fastest > 0 else np.inf


def ms_hamiltonian(p: MsDriveParams) -> TimeDependentGenerator:
    """Interaction-picture generator on (2 spins) x (Fock space of n_max + 1).

    Each ion j sees both tones s = +/- with detuning
    ``mu_js = s * (nu + epsilon) - delta - carrier_offsets[j]``; every tone
    drives the carrier and, to first order in eta, both motional sidebands.
    """

    if p.n_max < p.n_init + FOCK_HEADROOM:
        raise DriveParameterError(
            f"n_max={p.n_max} leaves less than {FOCK_HEADROOM} levels of headroom "
            f"above n_init={p.n_init}"
        )

    levels = p.levels
    spin_id, mode_id = identity(2), identity(levels)
    a = tensor([spin_id, spin_id, destroy(levels)])
    a_dag = a.dagger()
    raise_ops = (
        tensor([raising(), spin_id, mode_id]),
        tensor([spin_id, raising(), mode_id]),
    )

    half = p.omega_carrier / 2.0
    sideband = 1j * p.eta * half
    ops: list[np.ndarray] = []
    amps: list[complex] = []
    freqs: list[float] = []

    def add(op: Operator, amplitude: complex, frequency: float) -> None:
        ops.extend([op.matrix, op.matrix.conj().T])
        amps.extend([amplitude, np.conj(amplitude)])
        freqs.extend([frequency, -frequency])

    for ion, sigma_plus in enumerate(raise_ops):
        for sign in (1.0, -1.0):
            mu = sign * (p.nu + p.epsilon) - p.delta - p.carrier_offsets[ion]
            add(sigma_plus, half, mu)
            add(sigma_plus @ a, sideband, mu + p.nu)
            add(sigma_plus @ a_dag, sideband, mu - p.nu)

    return TimeDependentGenerator(
        np.stack(ops), np.array(amps), np.array(freqs), (2, 2, levels), 2
    )


def _edge_population(amplitudes: np.ndarray, dims: tuple[int, ...], n_spins: int) -> float:
    if len(dims) == n_spins:
        return 0.0
    probs = np.abs(amplitudes.reshape(-1, *dims)) ** 2
    return float(np.max(probs[..., -1].reshape(probs.shape[0], -1).sum(axis=1)))


@dataclass(frozen=True)
class Trajectory:
    """States sampled along one integration, plus the dense interpolant."""

    times: np.ndarray
    amplitudes: np.ndarray
    dims: tuple[int, ...]
    n_spins: int
    solution: OdeSolution | None = field(default=None, repr=False)

    def state(self, index: int) -> StateVector:
        return StateVector.normalized(self.amplitudes[index], self.dims, self.n_spins)

    def state_at(self, t: float) -> StateVector:
        if self.solution is None:
            raise IntegrationError("Trajectory was integrated without dense output")
        return StateVector.normalized(self.solution(t), self.dims, self.n_spins)

    def populations(self) -> np.ndarray:
        return np.array([populations(self.state(i)) for i in range(self.times.size)])


def _integrate(
    generator: TimeDependentGenerator,
    psi0: StateVector,
    t_final: float,
    tol: float,
    *,
    t_eval: np.ndarray | None = None,
    dense_output: bool = False,
) -> Any:
    if tol <= 0:
        raise IntegrationError(f"Tolerance must be positive, got {tol}")
    if generator.dim != psi0.dim:
        raise IntegrationError(
            f"Generator dimension {generator.dim} does not match state {psi0.dim}"
        )
    solver_tol = max(tol * SOLVER_TOLERANCE_SCALE, MIN_SOLVER_TOLERANCE)
    result = solve_ivp(
        generator.rhs,
        (0.0, t_final),
        np.asarray(psi0.amplitudes, dtype=complex),
        method="DOP853",
        rtol=solver_tol,
        atol=solver_tol,
        max_step=generator.fastest_period,
        t_eval=t_eval,
        dense_output=dense_output,
    )
    if result.status < 0:
        raise IntegrationError(f"Integration failed: {result.message}")

    edge = _edge_population(result.y.T, psi0.dims, psi0.n_spins)
    if edge > TRUNCATION_LIMIT:
        raise TruncationError(
            f"Population {edge:.3g} reached the top Fock level; raise n_max",
            edge_population=edge,
        )
    return result


def _renormalized(amplitudes: np.ndarray, tol: float) -> np.ndarray:
    norm = float(np.linalg.norm(amplitudes))
    if abs(norm - 1.0) > 10 * tol:
        warnings.warn(
            f"State norm drifted to {norm:.12f} during integration; renormalizing",
            IntegrationWarning,
            stacklevel=3,
        )
    return amplitudes / norm


def propagate_time_dependent(
    generator: TimeDependentGenerator,
    psi0: StateVector,
    t_final: float,
    tol: float = DEFAULT_TOLERANCE,
    *,
    verify_convergence: bool = False,
) -> StateVector:
    """Solve i dpsi/dt = H(t) psi with an adaptive 8th-order Runge-Kutta scheme.

    Args:
        generator: The time-dependent Hermitian generator.
        psi0: Initial state, matching the generator's dimension.
        t_final: Evolution time in seconds.
        tol: Target accuracy of the final state. The norm may drift by at
            most ``10 * tol`` before a warning; the solver itself runs at
            ``tol * SOLVER_TOLERANCE_SCALE``.
        verify_convergence: Re-integrate at ``tol / 2`` and warn if the final
            populations move by more than ``tol``.

    Returns:
        The normalized final state.

    Raises:
        IntegrationError: If the solver fails, e.g. on step-size underflow.
        TruncationError: If the top Fock level is populated above 1e-4.
    """

    if t_final < 0:
        raise IntegrationError(f"Evolution time must be non-negative, got {t_final}")
    if t_final == 0:
        return psi0

    result = _integrate(generator, psi0, t_final, tol)
    final = StateVector(
        _renormalized(result.y[:, -1], tol), psi0.dims, psi0.n_spins
    )

    if verify_convergence:
        refined = propagate_time_dependent(generator, psi0, t_final, tol / 2.0)
        change = float(np.max(np.abs(populations(refined) - populations(final))))
        if change > tol:
            warnings.warn(
                f"Halving the tolerance changed populations by {change:.3g}",
                IntegrationWarning,
                stacklevel=2,
            )
    return final


def trajectory(
    generator: TimeDependentGenerator,
    psi0: StateVector,
    times: Sequence[float] | np.ndarray,
    tol: float = DEFAULT_TOLERANCE,
    *,
    dense_output: bool = False,
) -> Trajectory:
    """Integrate once and sample the state at every entry of ``times``."""

    samples = np.asarray(times, dtype=float)
    if samples.ndim != 1 or samples.size == 0 or np.any(np.diff(samples) < 0):
        raise IntegrationError("times must be a non-empty, non-decreasing sequence")
    if samples[0] < 0:
        raise IntegrationError("times must be non-negative")

    t_final = float(samples[-1])
    if t_final == 0:
        amps = np.tile(psi0.amplitudes, (samples.size, 1))
        return Trajectory(samples, amps, psi0.dims, psi0.n_spins)

    result = _integrate(
        generator, psi0, t_final, tol, t_eval=samples, dense_output=dense_output
    )
    amps = result.y.T
    _renormalized(amps[-1], tol)
    amps = amps / np.linalg.norm(amps, axis=1, keepdims=True)
    return Trajectory(samples, amps, psi0.dims, psi0.n_spins, result.sol)


def lab_detunings(p: MsDriveParams) -> tuple[float, float]:
    """Laser detuning from the mean transition and half the ion difference."""

    offsets = p.carrier_offsets
    delta1 = -p.delta - (offsets[0] + offsets[1]) / 2.0
    delta2 = (offsets[0] - offsets[1]) / 2.0
    return delta1, delta2


def two_spin_coupling(p: MsDriveParams) -> float:
    """Two-spin coupling eta^2 * omega_carrier^2 / epsilon, in rad/s."""

    return p.sideband_rabi**2 / p.epsilon


def check_regime(p: MsDriveParams) -> None:
    if p.epsilon < REGIME_RATIO * p.sideband_rabi:
        warnings.warn(
            f"epsilon/(eta*omega_carrier) = {p.epsilon / p.sideband_rabi:.2f} is below "
            f"{REGIME_RATIO:g}; the effective Ising model is inaccurate",
            RegimeWarning,
            stacklevel=3,
        )


def effective_params(p: MsDriveParams) -> IsingParams:
    """Ising generator obtained by adiabatically eliminating the motion.

    The returned ``omega`` is the sigma_y sigma_y coefficient, half the
    two-spin coupling :func:`two_spin_coupling`. Only the squares of the
    detunings affect populations.
    """

    check_regime(p)
    delta1, delta2 = lab_detunings(p)
    return IsingParams.from_spectroscopic(two_spin_coupling(p), delta1, delta2)


def pi_time(omega_eff: float) -> float:
    if omega_eff <= 0:
        raise DriveParameterError(f"omega_eff must be positive, got {omega_eff}")
    return pi / (2.0 * omega_eff)


@dataclass(frozen=True)
class PiTimeReport:
    located: float
    peak_population: float
    effective_prediction: float
    coupling_formula: float
    reported: float = REPORTED_PI_TIME_S

    @property
    def prefactor(self) -> float:
        """Located flip time in units of pi / (2 * coupling)."""

        return self.located / self.coupling_formula

    def to_dict(self) -> dict[str, float]:
        return {
            "located_s": self.located,
            "peak_population": self.peak_population,
            "effective_prediction_s": self.effective_prediction,
            "coupling_formula_s": self.coupling_formula,
            "reported_s": self.reported,
            "prefactor": self.prefactor,
            "located_over_reported": self.located / self.reported,
        }


def locate_pi_time(
    p: MsDriveParams,
    *,
    tol: float = DEFAULT_TOLERANCE,
    samples: int = 600,
    window: float = 1.6,
    target: str = "uu",
    initial: str = "dd",
) -> PiTimeReport:
    """Find the full-drive flip time of ``target`` starting from ``initial``.

    The sampled population is fitted with ``A sin^2(pi t / (2 T))`` so the
    fast off-resonant ripple averages out, and ``T`` is reported as the flip
    time. The peak population is the largest value of the integrated curve
    within one ``2 pi / epsilon`` ripple period of ``T``.

    Raises:
        IntegrationError: If the fit fails or the peak population stays
            below 0.95.
    """

    if window < 1.2:
        raise DriveParameterError(f"window must exceed 1.2 predicted pi-times, got {window:g}")
    if samples < 20:
        raise DriveParameterError(f"samples must be at least 20, got {samples}")

    effective = effective_params(p)
    predicted = pi_time(effective.omega)
    psi0 = p.initial_state(initial)
    times = np.linspace(0.0, window * predicted, samples)
    path = trajectory(ms_hamiltonian(p), psi0, times, tol, dense_output=True)

    index = _target_index(target)
    flip = _fit_flip_time(times, path.populations()[:, index], predicted)
    ripple = TWO_PI / p.epsilon
    grid = np.linspace(max(flip - ripple, 0.0), min(flip + ripple, float(times[-1])), 101)
    peak = max(float(populations(path.state_at(t))[index]) for t in grid)
    if peak < FULL_FLIP_POPULATION:
        raise IntegrationError(
            f"{target!r} only reaches {peak:.3f} near t = {flip * 1e6:.1f} us; "
            f"no full flip within {window:g} predicted pi-times"
        )
    return PiTimeReport(
        located=flip,
        peak_population=peak,
        effective_prediction=predicted,
        coupling_formula=pi_time(two_spin_coupling(p)),
    )


def _target_index(label: str) -> int:
    labels = population_labels(len(label))
    if label not in labels:
        raise DriveParameterError(f"Unknown basis label {label!r}")
    return labels.index(label)


def _flip_curve(t: np.ndarray, amplitude: float, flip: float) -> np.ndarray:
    return amplitude * np.sin(0.5 * pi * t / flip) ** 2


def _fit_flip_time(times: np.ndarray, curve: np.ndarray, predicted: float) -> float:
    try:
        (_, flip), _ = curve_fit(
            _flip_curve,
            times,
            curve,
            p0=(0.99, predicted),
            bounds=([0.0, 0.5 * predicted], [1.0, 1.5 * predicted]),
        )
    except (RuntimeError, ValueError) as exc:
        raise IntegrationError(f"Could not fit the first flip: {exc}") from exc
    return float(flip)
