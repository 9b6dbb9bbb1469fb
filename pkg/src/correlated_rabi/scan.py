from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from math import pi
from typing import Any, Callable, Literal, Sequence

import numpy as np

from ._version import __version__
from .dataset_io import AXIS_PARAMETERS, DatasetError, axis_column
from .hamiltonians import (
    NSpinParams,
    correlated_n_spin,
    ising_generators,
    n_spin_generators,
)
from .ms_model import (
    MsDriveParams,
    check_regime,
    ms_hamiltonian,
    pi_time,
    propagate_time_dependent,
    trajectory,
    two_spin_coupling,
)
from .operators import (
    basis_state,
    batch_populations,
    pauli,
    population_labels,
    populations,
    propagate_batch,
)

TWO_PI = 2.0 * pi
MODELS = ("effective_ising", "full_ms", "single_spin", "n_spin")
_PROBABILITY_SLACK = 1e-12
_SIMPLEX_TOLERANCE = 1e-9


class ScanError(ValueError):
    """Raised for invalid scan configurations."""


@dataclass(frozen=True)
class ScanAxis:
    """Linear grid over one scan parameter.

    Frequency parameters are in rad/s, ``pulse_time`` in seconds.
    """

    parameter: str
    start: float
    stop: float
    points: int

    def __post_init__(self) -> None:
        if self.parameter not in AXIS_PARAMETERS:
            raise ScanError(
                f"Unknown scan parameter {self.parameter!r}; "
                f"expected one of {', '.join(AXIS_PARAMETERS)}"
            )
        if self.points < 2:
            raise ScanError(f"Axis {self.parameter} needs at least 2 points")
        if self.parameter == "pulse_time" and min(self.start, self.stop) < 0:
            raise ScanError("Pulse times must be non-negative")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)

    @property
    def is_time(self) -> bool:
        return self.parameter == "pulse_time"

    @property
    def column(self) -> str:
        return axis_column(self.parameter)

    def to_dict(self) -> dict[str, Any]:
        scale = 1.0 if self.is_time else 1.0 / TWO_PI
        return {
            "parameter": self.parameter,
            "start": self.start * scale,
            "stop": self.stop * scale,
            "points": self.points,
            "unit": "s" if self.is_time else "Hz",
        }


@dataclass(frozen=True)
class NoiseModel:
    """Quasi-static parameter noise, redrawn for every shot."""

    sigma_common: float = 0.0
    sigma_diff: float = 0.0
    sigma_rabi_rel: float = 0.0

    def __post_init__(self) -> None:
        if min(self.sigma_common, self.sigma_diff, self.sigma_rabi_rel) < 0:
            raise ScanError("Noise standard deviations must be non-negative")

    @property
    def active(self) -> bool:
        return bool(self.sigma_common or self.sigma_diff or self.sigma_rabi_rel)

    def to_dict(self) -> dict[str, float]:
        return {
            "sigma_common_hz": self.sigma_common / TWO_PI,
            "sigma_diff_hz": self.sigma_diff / TWO_PI,
            "sigma_rabi_rel": self.sigma_rabi_rel,
        }


@dataclass(frozen=True, kw_only=True)
class ScanConfig:
    """One spectrum measurement.

    ``coupling`` is the spectroscopic Rabi frequency (the resonant flip takes
    ``pi / coupling``); the full drive model derives it from ``drive`` instead.
    ``light_shift`` is signed: positive values raise ion 1's transition,
    negative values raise ion 2's. ``ion_shifts`` adds fixed per-ion
    transition shifts on top.
    """

    axis1: ScanAxis
    axis2: ScanAxis | None = None
    model: str = "effective_ising"
    initial_state: str = "dd"
    pulse_time: float | None = None
    shots: int = 0
    noise: NoiseModel | None = None
    seed: int = 0
    coupling: float = TWO_PI * 1.0e3
    delta1: float = 0.0
    delta2: float = 0.0
    light_shift: float = 0.0
    ion_shifts: tuple[float, float] = (0.0, 0.0)
    baseline_diff: float = 0.0
    n_spins: int = 2
    ion: int = 1
    coupling_axis: Literal["x", "y"] = "x"
    max_spins: int = 10
    drive: MsDriveParams = field(default_factory=MsDriveParams)
    tol: float = 1e-8
    noise_samples: int = 64
    threads: int = 1

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ScanError(
                f"Unknown model {self.model!r}; expected one of {', '.join(MODELS)}"
            )
        if self.shots < 0:
            raise ScanError(f"shots must be >= 0, got {self.shots}")
        if self.seed < 0:
            raise ScanError(f"seed must be >= 0, got {self.seed}")
        if self.threads < 1:
            raise ScanError(f"threads must be >= 1, got {self.threads}")
        if self.noise_samples < 1:
            raise ScanError("noise_samples must be >= 1")
        if self.ion not in (1, 2):
            raise ScanError(f"ion must be 1 or 2, got {self.ion}")
        if self.pulse_time is not None and self.pulse_time < 0:
            raise ScanError("pulse_time must be non-negative")
        if self.model != "full_ms" and self.coupling <= 0:
            raise ScanError("coupling must be positive")
        if len(self.initial_state) != self.spin_count or set(
            self.initial_state
        ) - {"u", "d"}:
            raise ScanError(
                f"Initial state {self.initial_state!r} does not describe "
                f"{self.spin_count} spin(s)"
            )
        if self.model == "full_ms" and self.noise is not None and self.noise.active:
            raise ScanError("Parameter noise is not supported by the full drive model")
        if self.model == "n_spin":
            uses_difference = any(
                axis is not None and axis.parameter in ("delta2", "light_shift")
                for axis in (self.axis1, self.axis2)
            )
            if (
                uses_difference
                or self.delta2
                or self.light_shift
                or any(self.ion_shifts)
                or self.baseline_diff
                or (self.noise is not None and self.noise.sigma_diff)
            ):
                raise ScanError("The N-spin model only supports a common detuning")
            if self.n_spins < 2:
                raise ScanError("The N-spin model needs n_spins >= 2")

    @property
    def spin_count(self) -> int:
        if self.model == "single_spin":
            return 1
        if self.model == "n_spin":
            return self.n_spins
        return 2

    @property
    def labels(self) -> tuple[str, ...]:
        return population_labels(self.spin_count)

    @property
    def axes(self) -> tuple[ScanAxis, ...]:
        return (self.axis1,) if self.axis2 is None else (self.axis1, self.axis2)

    def effective_coupling(self) -> float:
        if self.model == "full_ms":
            return two_spin_coupling(self.drive)
        return self.coupling

    def resolved_pulse_time(self) -> float:
        if self.pulse_time is not None:
            return self.pulse_time
        return pi_time(self.effective_coupling() / 2.0)

    def to_dict(self) -> dict[str, Any]:
        """Provenance summary with frequencies in Hz."""

        drive = self.drive
        return {
            "model": self.model,
            "initial_state": self.initial_state,
            "axes": [axis.to_dict() for axis in self.axes],
            "pulse_time_s": self.resolved_pulse_time(),
            "shots": self.shots,
            "seed": self.seed,
            "coupling_hz": self.effective_coupling() / TWO_PI,
            "delta1_hz": self.delta1 / TWO_PI,
            "delta2_hz": self.delta2 / TWO_PI,
            "light_shift_hz": self.light_shift / TWO_PI,
            "ion_shifts_hz": [s / TWO_PI for s in self.ion_shifts],
            "baseline_diff_hz": self.baseline_diff / TWO_PI,
            "n_spins": self.spin_count,
            "ion": self.ion,
            "noise": None if self.noise is None else self.noise.to_dict(),
            "noise_samples": self.noise_samples,
            "drive": {
                "nu_hz": drive.nu / TWO_PI,
                "epsilon_hz": drive.epsilon / TWO_PI,
                "eta": drive.eta,
                "omega_carrier_hz": drive.omega_carrier / TWO_PI,
                "n_max": drive.n_max,
                "n_init": drive.n_init,
                "tol": self.tol,
            }
            if self.model == "full_ms"
            else None,
        }


@dataclass(frozen=True)
class SpectrumPoint:
    coordinates: dict[str, float]
    values: dict[str, float]
    shots: int


@dataclass(frozen=True)
class SpectrumDataset:
    """Scan results, one row per grid point in row-major order (axis 1 outer).

    Coordinates are rad/s (or s for ``pulse_time``). Exactly one of
    ``populations`` and ``counts`` is set; ``shots`` accompanies counts.
    """

    axis_names: tuple[str, ...]
    coordinates: np.ndarray
    labels: tuple[str, ...]
    populations: np.ndarray | None = None
    counts: np.ndarray | None = None
    shots: np.ndarray | None = None
    grid_shape: tuple[int, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        coords = np.asarray(self.coordinates, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        n_points = coords.shape[0]
        if coords.shape[1] != len(self.axis_names):
            raise DatasetError("Coordinate columns do not match the axis names")
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "axis_names", tuple(self.axis_names))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.grid_shape:
            object.__setattr__(self, "grid_shape", (n_points,))
        if int(np.prod(self.grid_shape)) != n_points:
            raise DatasetError(f"Grid shape {self.grid_shape} does not hold {n_points} points")

        if (self.populations is None) == (self.counts is None):
            raise DatasetError("Provide exactly one of populations or counts")
        if self.populations is not None:
            probs = np.asarray(self.populations, dtype=float)
            self._check_columns(probs, n_points)
            if np.any(probs < -_PROBABILITY_SLACK) or np.any(probs > 1 + _PROBABILITY_SLACK):
                raise DatasetError("Populations must lie in [0, 1]")
            if np.any(np.abs(probs.sum(axis=1) - 1.0) > _SIMPLEX_TOLERANCE):
                raise DatasetError("Populations do not sum to 1 at every point")
            object.__setattr__(self, "populations", probs)
        else:
            counts = np.asarray(self.counts)
            self._check_columns(counts, n_points)
            if self.shots is None:
                raise DatasetError("Counts require a shots column")
            shots = np.asarray(self.shots)
            if shots.shape != (n_points,):
                raise DatasetError("shots must have one entry per point")
            if not (_is_integral(counts) and _is_integral(shots)):
                raise DatasetError("Counts and shots must be integers")
            counts, shots = counts.astype(np.int64), shots.astype(np.int64)
            if np.any(counts < 0) or np.any(counts.sum(axis=1) != shots):
                raise DatasetError("Counts must be non-negative and sum to shots")
            object.__setattr__(self, "counts", counts)
            object.__setattr__(self, "shots", shots)

    def _check_columns(self, values: np.ndarray, n_points: int) -> None:
        if values.shape != (n_points, len(self.labels)):
            raise DatasetError(
                f"Expected values of shape {(n_points, len(self.labels))}, got {values.shape}"
            )

    @property
    def exact(self) -> bool:
        return self.populations is not None

    @property
    def n_points(self) -> int:
        return self.coordinates.shape[0]

    def axis_values(self, name: str | None = None) -> np.ndarray:
        index = 0 if name is None else self._axis_index(name)
        return self.coordinates[:, index]

    def _axis_index(self, name: str) -> int:
        if name not in self.axis_names:
            raise DatasetError(f"Dataset has no axis {name!r}")
        return self.axis_names.index(name)

    def label_index(self, label: str) -> int:
        if label not in self.labels:
            raise DatasetError(f"Dataset has no state {label!r}; labels are {self.labels}")
        return self.labels.index(label)

    def probabilities(self, label: str) -> np.ndarray:
        """Exact populations, or observed frequencies k / shots."""

        index = self.label_index(label)
        if self.populations is not None:
            return self.populations[:, index]
        assert self.counts is not None and self.shots is not None
        return self.counts[:, index] / np.maximum(self.shots, 1)

    def grid(self, label: str) -> np.ndarray:
        return self.probabilities(label).reshape(self.grid_shape)

    @property
    def points(self) -> list[SpectrumPoint]:
        values = self.populations if self.populations is not None else self.counts
        assert values is not None
        records = []
        for i in range(self.n_points):
            records.append(
                SpectrumPoint(
                    coordinates=dict(zip(self.axis_names, self.coordinates[i].tolist())),
                    values=dict(zip(self.labels, values[i].tolist())),
                    shots=0 if self.shots is None else int(self.shots[i]),
                )
            )
        return records

    def with_metadata(self, **extra: Any) -> "SpectrumDataset":
        return replace(self, metadata={**self.metadata, **extra})


def _is_integral(values: np.ndarray) -> bool:
    if np.issubdtype(values.dtype, np.integer):
        return True
    return bool(np.all(np.isfinite(values)) and np.all(values == np.round(values)))


def sample_counts(p: float, shots: int, rng: np.random.Generator) -> int:
    """Binomial projection-noise draw of ``shots`` measurements."""

    if shots < 0:
        raise ScanError(f"shots must be >= 0, got {shots}")
    if not -_PROBABILITY_SLACK <= p <= 1 + _PROBABILITY_SLACK:
        raise ScanError(f"Probability {p} outside [0, 1]")
    return int(rng.binomial(shots, min(max(p, 0.0), 1.0)))


def sample_outcomes(
    probs: np.ndarray, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Multinomial counts over all outcomes as a chain of binomial draws."""

    counts = np.zeros(len(probs), dtype=np.int64)
    remaining, mass = shots, 1.0
    for i, p in enumerate(probs[:-1]):
        if remaining == 0 or mass <= 0:
            break
        conditional = min(max(p / mass, 0.0), 1.0)
        counts[i] = sample_counts(conditional, remaining, rng)
        remaining -= counts[i]
        mass -= p
    counts[-1] += remaining
    return counts


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass(frozen=True)
class _PointParameters:
    coupling: float
    delta1: float
    delta2: float
    time: float


def resolve_point(cfg: ScanConfig, coords: dict[str, float]) -> _PointParameters:
    """Map scan coordinates to the common and differential detunings.

    A transition shift on one ion moves the mean transition by half the shift
    (lowering delta1) and the half-difference delta2 by half the shift.
    """

    values = {
        "delta1": cfg.delta1,
        "delta2": cfg.delta2,
        "light_shift": cfg.light_shift,
        "pulse_time": cfg.resolved_pulse_time(),
    }
    values.update(coords)
    shift = values["light_shift"]
    shift1 = cfg.ion_shifts[0] + max(shift, 0.0)
    shift2 = cfg.ion_shifts[1] + max(-shift, 0.0)
    delta2 = values["delta2"] + cfg.baseline_diff / 2.0 + (shift1 - shift2) / 2.0
    delta1 = values["delta1"] - (shift1 + shift2) / 2.0
    return _PointParameters(cfg.effective_coupling(), delta1, delta2, values["pulse_time"])


def ion_detuning(delta1: np.ndarray | float, delta2: np.ndarray | float, ion: int):
    """Laser detuning seen by one ion: ion 1 sits at +delta2, ion 2 at -delta2."""

    sign = 1.0 if ion == 1 else -1.0
    return delta1 - sign * delta2


def generator_stack(
    cfg: ScanConfig,
    coupling: np.ndarray,
    delta1: np.ndarray,
    delta2: np.ndarray,
) -> np.ndarray:
    """Batch of effective-model generators from spectroscopic parameters."""

    c = np.abs(coupling)[:, None, None] / 2.0
    d1 = np.asarray(delta1)[:, None, None] / 2.0
    d2 = np.asarray(delta2)[:, None, None] / 2.0
    if cfg.model == "effective_ising":
        yy, common, differential = ising_generators()
        return c * yy + d1 * common + d2 * differential
    if cfg.model == "single_spin":
        detuning = ion_detuning(d1, d2, cfg.ion)
        return c * pauli("y").matrix + detuning * pauli("z").matrix
    if cfg.model == "n_spin":
        flip, z_total = n_spin_generators(cfg.n_spins, cfg.coupling_axis)
        return c * flip + d1 * z_total
    raise ScanError(f"Model {cfg.model!r} has no static generator")


class _PointEvaluator:
    def __init__(self, cfg: ScanConfig, grid: np.ndarray, axes: Sequence[ScanAxis]) -> None:
        self.cfg = cfg
        self.grid = grid
        self.names = [axis.parameter for axis in axes]
        self.psi0 = basis_state(cfg.initial_state)

    def __call__(self, index: int) -> np.ndarray:
        cfg = self.cfg
        coords = dict(zip(self.names, self.grid[index]))
        point = resolve_point(cfg, coords)
        rng = _point_rng(cfg.seed, index)
        if cfg.model == "full_ms":
            probs = self._full_drive(point)
            return self._finish(probs[None, :], rng, exact_average=True)

        noise = cfg.noise if cfg.noise is not None and cfg.noise.active else None
        if noise is None:
            batch = 1
        else:
            batch = cfg.shots if cfg.shots > 0 else cfg.noise_samples
        coupling = np.full(batch, point.coupling)
        delta1 = np.full(batch, point.delta1)
        delta2 = np.full(batch, point.delta2)
        if noise is not None:
            common = rng.normal(0.0, 1.0, batch)
            differential = rng.normal(0.0, 1.0, batch)
            rabi = rng.normal(0.0, 1.0, batch)
            delta1 = delta1 + noise.sigma_common * common
            delta2 = delta2 + noise.sigma_diff * differential
            coupling = coupling * (1.0 + noise.sigma_rabi_rel * rabi)

        stack = generator_stack(cfg, coupling, delta1, delta2)
        amplitudes = propagate_batch(stack, self.psi0.amplitudes, point.time)
        probs = batch_populations(amplitudes)
        return self._finish(probs, rng, exact_average=noise is None or cfg.shots == 0)

    def _full_drive(self, point: _PointParameters) -> np.ndarray:
        cfg = self.cfg
        drive = replace(cfg.drive, delta=-point.delta1, carrier_offsets=(point.delta2, -point.delta2))
        psi0 = drive.initial_state(cfg.initial_state)
        final = propagate_time_dependent(ms_hamiltonian(drive), psi0, point.time, cfg.tol)
        return populations(final)

    def _finish(self, probs: np.ndarray, rng: np.random.Generator, *, exact_average: bool) -> np.ndarray:
        shots = self.cfg.shots
        if shots == 0:
            return probs.mean(axis=0)
        if exact_average:
            return sample_outcomes(probs.mean(axis=0), shots, rng)
        # One categorical draw per shot, each from its own noisy realisation.
        cumulative = np.cumsum(probs, axis=1)
        draws = rng.random(probs.shape[0])
        outcomes = np.minimum((draws[:, None] > cumulative).sum(axis=1), probs.shape[1] - 1)
        return np.bincount(outcomes, minlength=probs.shape[1]).astype(np.int64)


def _grid(axes: Sequence[ScanAxis]) -> np.ndarray:
    mesh = np.meshgrid(*(axis.values for axis in axes), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _map_points(
    evaluate: Callable[[int], np.ndarray], n_points: int, threads: int
) -> list[np.ndarray]:
    if threads <= 1 or n_points == 1:
        return [evaluate(i) for i in range(n_points)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(evaluate, range(n_points)))


def _assemble(
    cfg: ScanConfig, grid: np.ndarray, rows: list[np.ndarray], axes: Sequence[ScanAxis]
) -> SpectrumDataset:
    values = np.vstack(rows)
    metadata = {
        **cfg.to_dict(),
        "labels": list(cfg.labels),
        "mode": "exact" if cfg.shots == 0 else "sampled",
        "version": __version__,
    }
    common = {
        "axis_names": tuple(axis.parameter for axis in axes),
        "coordinates": grid,
        "labels": cfg.labels,
        "grid_shape": tuple(axis.points for axis in axes),
        "metadata": metadata,
    }
    if cfg.shots == 0:
        return SpectrumDataset(populations=values, **common)
    return SpectrumDataset(
        counts=values.astype(np.int64),
        shots=np.full(values.shape[0], cfg.shots, dtype=np.int64),
        **common,
    )


def _validate_models(cfg: ScanConfig) -> None:
    if cfg.model == "n_spin":
        correlated_n_spin(
            NSpinParams.uniform(
                cfg.coupling,
                0.0,
                cfg.n_spins,
                coupling_axis=cfg.coupling_axis,
                max_spins=cfg.max_spins,
            )
        )


def _run(cfg: ScanConfig, axes: Sequence[ScanAxis], threads: int | None) -> SpectrumDataset:
    _validate_models(cfg)
    if cfg.model == "full_ms":
        check_regime(cfg.drive)
    workers = cfg.threads if threads is None else threads
    grid = _grid(axes)

    if (
        cfg.model == "full_ms"
        and len(axes) == 1
        and axes[0].is_time
        and axes[0].stop >= axes[0].start
    ):
        rows = _full_drive_nutation(cfg, axes[0])
    else:
        evaluate = _PointEvaluator(cfg, grid, axes)
        rows = _map_points(evaluate, grid.shape[0], workers)
    return _assemble(cfg, grid, rows, axes)


def _full_drive_nutation(cfg: ScanConfig, axis: ScanAxis) -> list[np.ndarray]:
    point = resolve_point(cfg, {})
    drive = replace(cfg.drive, delta=-point.delta1, carrier_offsets=(point.delta2, -point.delta2))
    path = trajectory(ms_hamiltonian(drive), drive.initial_state(cfg.initial_state), axis.values, cfg.tol)
    rows = []
    for index, probs in enumerate(path.populations()):
        if cfg.shots == 0:
            rows.append(probs)
        else:
            rows.append(sample_outcomes(probs, cfg.shots, _point_rng(cfg.seed, index)))
    return rows


def run_scan(cfg: ScanConfig, *, threads: int | None = None) -> SpectrumDataset:
    """Evaluate a one-axis spectrum; deterministic for a given seed and any thread count."""

    if cfg.axis2 is not None:
        raise ScanError("Configuration has a second axis; use run_2d_scan()")
    return _run(cfg, (cfg.axis1,), threads)


def run_2d_scan(cfg: ScanConfig, *, threads: int | None = None) -> SpectrumDataset:
    """Evaluate a map over ``axis1`` (outer) and ``axis2`` (inner)."""

    if cfg.axis2 is None:
        raise ScanError("run_2d_scan() needs a second axis")
    if cfg.axis2.parameter == cfg.axis1.parameter:
        raise ScanError("The two scan axes must vary different parameters")
    return _run(cfg, (cfg.axis1, cfg.axis2), threads)


def protocol_uncorrelated_difference(
    shift_list: Sequence[float],
    shots: int,
    seed: int,
    *,
    coupling: float = TWO_PI * 1.0e3,
    pulse_time: float | None = None,
    which_ion: int = 1,
    baseline_diff: float = 0.0,
) -> SpectrumDataset:
    """Uncorrelated frequency-difference spectroscopy of two ions.

    Both ions start in ``d``; one ion's transition is shifted by each entry of
    ``shift_list`` and a global pulse at the mean transition frequency drives
    both. The averaged single-ion excitation is reported against delta2.
    """

    if which_ion not in (1, 2):
        raise ScanError(f"which_ion must be 1 or 2, got {which_ion}")
    if shots < 0:
        raise ScanError(f"shots must be >= 0, got {shots}")
    shifts = np.asarray(shift_list, dtype=float).reshape(-1)
    if shifts.size == 0:
        raise ScanError("shift_list must not be empty")

    time = pulse_time if pulse_time is not None else pi / coupling
    sign = 1.0 if which_ion == 1 else -1.0
    delta2 = baseline_diff / 2.0 + sign * shifts / 2.0
    psi0 = basis_state("d").amplitudes
    sy, sz = pauli("y").matrix, pauli("z").matrix

    excited = []
    for ion in (1, 2):
        detuning = ion_detuning(0.0, delta2, ion)
        stack = coupling / 2.0 * sy + detuning[:, None, None] / 2.0 * sz
        excited.append(batch_populations(propagate_batch(stack, psi0, time))[:, 1])

    metadata = {
        "protocol": "uncorrelated_difference",
        "coupling_hz": coupling / TWO_PI,
        "pulse_time_s": time,
        "which_ion": which_ion,
        "baseline_diff_hz": baseline_diff / TWO_PI,
        "shifts_hz": (shifts / TWO_PI).tolist(),
        "shots": shots,
        "seed": seed,
        "n_spins": 1,
        "labels": ["d", "u"],
        "mode": "exact" if shots == 0 else "sampled",
        "version": __version__,
    }
    if shots == 0:
        average = (excited[0] + excited[1]) / 2.0
        return SpectrumDataset(
            axis_names=("delta2",),
            coordinates=delta2,
            labels=("d", "u"),
            populations=np.column_stack([1.0 - average, average]),
            metadata=metadata,
        )

    counts = np.zeros((shifts.size, 2), dtype=np.int64)
    for index in range(shifts.size):
        rng = _point_rng(seed, index)
        up = sum(sample_counts(float(p[index]), shots, rng) for p in excited)
        counts[index] = (2 * shots - up, up)
    return SpectrumDataset(
        axis_names=("delta2",),
        coordinates=delta2,
        labels=("d", "u"),
        counts=counts,
        shots=np.full(shifts.size, 2 * shots, dtype=np.int64),
        metadata=metadata,
    )


def resonance_locus(
    ds: SpectrumDataset, label: str, along: str
) -> tuple[np.ndarray, np.ndarray]:
    """Peak position of ``label`` along one axis of a 2D map, for each value of the other.

    Peaks are refined with a three-point parabolic vertex.
    """

    if len(ds.axis_names) != 2:
        raise DatasetError("resonance_locus() needs a two-axis dataset")
    along_index = ds._axis_index(along)
    grid = ds.grid(label)
    inner = ds.grid_shape[1]
    axis_values = [ds.coordinates[::inner, 0], ds.coordinates[:inner, 1]]
    if along_index == 0:
        grid = grid.T
    scan_values = axis_values[along_index]
    fixed_values = axis_values[1 - along_index]

    peaks = np.empty(grid.shape[0])
    for row, curve in enumerate(grid):
        peaks[row] = _parabolic_peak(scan_values, curve)
    return fixed_values, peaks


def _parabolic_peak(x: np.ndarray, y: np.ndarray) -> float:
    i = int(np.argmax(y))
    if i == 0 or i == y.size - 1:
        return float(x[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denominator = y0 - 2.0 * y1 + y2
    if denominator == 0:
        return float(x[i])
    offset = 0.5 * (y0 - y2) / denominator
    step = x[i + 1] - x[i]
    return float(x[i] + offset * step)
