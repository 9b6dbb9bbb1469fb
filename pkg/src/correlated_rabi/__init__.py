"""Simulation and estimation toolkit for correlated Rabi spectroscopy of trapped-ion spins."""

from ._version import __version__
from .calibration import (
    CalibrationCurve,
    CalibrationError,
    LightShiftParams,
    build_calibration,
    compare_correlated_shift,
    extract_frequencies,
    light_shift,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .dataset_io import DatasetError, read_dataset, write_dataset, write_result
from .estimation import (
    FitError,
    FitResult,
    LineshapeParams,
    fisher_per_shot,
    fit_lineshape,
    lineshape,
    map_hamiltonian_to_lineshape,
    monte_carlo_uncertainty,
    negative_log_likelihood,
    product_spectrum_width_ratio,
    protocol_comparison,
)
from .hamiltonians import (
    HamiltonianError,
    IsingParams,
    NSpinParams,
    correlated_n_spin,
    ising_two_spin,
    single_spin_rabi,
    subspace_reduce,
)
from .ms_model import (
    DriveParameterError,
    IntegrationError,
    MsDriveParams,
    RegimeWarning,
    TruncationError,
    effective_params,
    locate_pi_time,
    ms_hamiltonian,
    pi_time,
    propagate_time_dependent,
)
from .operators import (
    Operator,
    OperatorError,
    StateVector,
    basis_state,
    embed,
    pauli,
    populations,
    propagate_static,
    tensor,
)
from .scan import (
    NoiseModel,
    ScanAxis,
    ScanConfig,
    ScanError,
    SpectrumDataset,
    protocol_uncorrelated_difference,
    resonance_locus,
    run_2d_scan,
    run_scan,
    sample_counts,
)

__all__ = [
    "__version__",
    "CalibrationCurve",
    "CalibrationError",
    "ConfigError",
    "DatasetError",
    "DriveParameterError",
    "FitError",
    "FitResult",
    "HamiltonianError",
    "IntegrationError",
    "IsingParams",
    "LightShiftParams",
    "LineshapeParams",
    "MsDriveParams",
    "NSpinParams",
    "NoiseModel",
    "Operator",
    "OperatorError",
    "RegimeWarning",
    "RunConfig",
    "ScanAxis",
    "ScanConfig",
    "ScanError",
    "SpectrumDataset",
    "StateVector",
    "TruncationError",
    "basis_state",
    "build_calibration",
    "compare_correlated_shift",
    "correlated_n_spin",
    "effective_params",
    "embed",
    "extract_frequencies",
    "fisher_per_shot",
    "fit_lineshape",
    "ising_two_spin",
    "light_shift",
    "lineshape",
    "load_config",
    "locate_pi_time",
    "map_hamiltonian_to_lineshape",
    "monte_carlo_uncertainty",
    "ms_hamiltonian",
    "negative_log_likelihood",
    "parse_config",
    "pauli",
    "pi_time",
    "populations",
    "product_spectrum_width_ratio",
    "propagate_static",
    "propagate_time_dependent",
    "protocol_comparison",
    "protocol_uncorrelated_difference",
    "read_dataset",
    "resonance_locus",
    "run_2d_scan",
    "run_scan",
    "sample_counts",
    "single_spin_rabi",
    "subspace_reduce",
    "tensor",
    "write_dataset",
    "write_result",
]
