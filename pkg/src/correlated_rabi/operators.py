from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np
from scipy import linalg

# Basis convention: |u> = (1, 0), |d> = (0, 1); spin 1 is the leftmost tensor
# factor, so the computational order for two spins is (uu, ud, du, dd).
NORM_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12

_PAULI_MATRICES = {
    "identity": np.array([[1, 0], [0, 1]], dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_AXIS_ALIASES = {"i": "identity", "id": "identity", "identity": "identity"}


class OperatorError(ValueError):
    """Raised for malformed operators, states or mismatched dimensions."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on spins, optionally followed by one motional mode.

    ``dims`` lists the subsystem dimensions in tensor order. The first
    ``n_spins`` entries are spins (dimension 2); any trailing entry is a
    truncated Fock space.
    """

    amplitudes: np.ndarray
    dims: tuple[int, ...]
    n_spins: int

    def __post_init__(self) -> None:
        amplitudes = _frozen(self.amplitudes).reshape(-1)
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "dims", dims)

        if prod(dims) != amplitudes.size:
            raise OperatorError(
                f"State of length {amplitudes.size} does not match dims {dims}"
            )
        if not 0 < self.n_spins <= len(dims) or any(
            d != 2 for d in dims[: self.n_spins]
        ):
            raise OperatorError(f"Invalid spin count {self.n_spins} for dims {dims}")
        norm = float(np.linalg.norm(amplitudes))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise OperatorError(f"State is not normalized (norm={norm:.15g})")

    @classmethod
    def normalized(
        cls, amplitudes: np.ndarray, dims: Sequence[int], n_spins: int | None = None
    ) -> "StateVector":
        vector = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise OperatorError("Cannot normalize the zero vector")
        spins = len(dims) if n_spins is None else n_spins
        return cls(vector / norm, tuple(dims), spins)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor_with_fock(self, level: int, levels: int) -> "StateVector":
        """Append a motional mode prepared in Fock state ``level``."""

        if not 0 <= level < levels:
            raise OperatorError(f"Fock level {level} outside truncation {levels}")
        fock = np.zeros(levels, dtype=complex)
        fock[level] = 1.0
        return StateVector(
            np.kron(self.amplitudes, fock), (*self.dims, levels), self.n_spins
        )


@dataclass(frozen=True)
class Operator:
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self) -> None:
        matrix = _frozen(self.matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise OperatorError(f"Operator must be square, got shape {matrix.shape}")
        object.__setattr__(self, "matrix", matrix)
        if self.hermitian and hermiticity_defect(matrix) > HERMITIAN_TOLERANCE:
            raise OperatorError("Operator flagged hermitian but M != M^dagger")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, scalar: complex) -> "Operator":
        keeps_hermitian = self.hermitian and np.isreal(scalar)
        return Operator(self.matrix * scalar, bool(keeps_hermitian))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_same_dim(self, other)
        return Operator(self.matrix @ other.matrix)

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.hermitian)

    def apply(self, state: StateVector) -> np.ndarray:
        """Return the (unnormalized) amplitudes of ``op |state>``."""

        if state.dim != self.dim:
            raise OperatorError(
                f"Operator dimension {self.dim} does not match state {state.dim}"
            )
        return self.matrix @ state.amplitudes


def hermiticity_defect(matrix: np.ndarray) -> float:
    """Largest entry of |M - M^dagger|, relative to the largest entry of M."""

    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    return float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0)) / scale


def _check_same_dim(left: Operator, right: Operator) -> None:
    if left.dim != right.dim:
        raise OperatorError(f"Dimension mismatch: {left.dim} vs {right.dim}")


def pauli(axis: str) -> Operator:
    """Return the 2x2 Pauli matrix for ``axis`` in {x, y, z, identity}."""

    key = axis.strip().lower()
    key = _AXIS_ALIASES.get(key, key)
    if key not in _PAULI_MATRICES:
        raise OperatorError(f"Unknown Pauli axis: {axis!r}")
    return Operator(_PAULI_MATRICES[key], hermitian=True)


def identity(dim: int) -> Operator:
    return Operator(np.eye(dim, dtype=complex), hermitian=True)


def raising() -> Operator:
    """Spin raising operator |u><d|."""

    return Operator(np.array([[0, 1], [0, 0]], dtype=complex))


def destroy(levels: int) -> Operator:
    """Truncated annihilation operator on ``levels`` Fock states."""

    if levels < 2:
        raise OperatorError("A Fock space needs at least two levels")
    return Operator(np.diag(np.sqrt(np.arange(1, levels)), k=1).astype(complex))


def tensor(ops: Sequence[Operator]) -> Operator:
    if not ops:
        raise OperatorError("tensor() needs at least one operator")
    matrix = ops[0].matrix
    for op in ops[1:]:
        matrix = np.kron(matrix, op.matrix)
    return Operator(matrix, all(op.hermitian for op in ops))


def embed(op: Operator, site: int, n: int) -> Operator:
    """Place a single-spin operator on ``site`` of an ``n``-spin register."""

    if op.dim != 2:
        raise OperatorError("embed() expects a 2x2 operator")
    if not 0 <= site < n:
        raise OperatorError(f"Site {site} out of range for {n} spins")
    factors = [identity(2)] * n
    factors[site] = op
    return tensor(factors)


def _spin_index(label: str) -> int:
    # 'u' is basis index 0 and 'd' index 1, spin 1 is the most significant bit.
    bits = label.strip().lower()
    if not bits or set(bits) - {"u", "d"}:
        raise OperatorError(f"Invalid basis label: {label!r}")
    return int(bits.replace("u", "0").replace("d", "1"), 2)


def basis_state(label: str) -> StateVector:
    """Computational basis state from a label such as ``"du"`` (spin 1 first)."""

    n = len(label.strip())
    amplitudes = np.zeros(2**n, dtype=complex)
    amplitudes[_spin_index(label)] = 1.0
    return StateVector(amplitudes, (2,) * n, n)


def population_labels(n_spins: int) -> tuple[str, ...]:
    """Labels in excitation order: all-down first, all-up last."""

    labels = []
    for k in range(2**n_spins):
        bits = format(k, f"0{n_spins}b")
        labels.append(bits.replace("0", "d").replace("1", "u"))
    return tuple(labels)


def populations(
    state: StateVector, subsystem: Sequence[int] | None = None
) -> np.ndarray:
    """Spin populations in excitation order, marginalizing everything else.

    For two spins the order is (P_dd, P_du, P_ud, P_uu). Motional modes and
    spins not listed in ``subsystem`` are traced out.
    """

    spins = tuple(range(state.n_spins)) if subsystem is None else tuple(subsystem)
    if (
        not spins
        or len(set(spins)) != len(spins)
        or any(not 0 <= s < state.n_spins for s in spins)
    ):
        raise OperatorError(f"Invalid spin subset {subsystem!r}")
    probs = np.abs(state.amplitudes.reshape(state.dims)) ** 2
    traced = tuple(axis for axis in range(len(state.dims)) if axis not in spins)
    marginal = probs.sum(axis=traced) if traced else probs
    kept = sorted(spins)
    marginal = np.transpose(marginal, axes=[kept.index(s) for s in spins]).reshape(-1)
    # Computational order runs uu..dd; excitation order is its reverse.
    return marginal[::-1].copy()


def parity_expectation(state: StateVector) -> float:
    """Expectation of the product of sigma_z over all spins."""

    probs = populations(state)
    n = state.n_spins
    signs = np.array(
        [(-1) ** label.count("d") for label in population_labels(n)], dtype=float
    )
    return float(np.clip(probs @ signs, -1.0, 1.0))


def propagate_static(H: Operator, psi0: StateVector, t: float) -> StateVector:
    """Exact evolution exp(-iHt)|psi0> via Hermitian eigendecomposition."""

    if not H.hermitian:
        raise OperatorError("propagate_static() requires a hermitian generator")
    if H.dim != psi0.dim:
        raise OperatorError(
            f"Generator dimension {H.dim} does not match state {psi0.dim}"
        )
    if t == 0:
        return psi0
    energies, vectors = linalg.eigh(H.matrix)
    coefficients = vectors.conj().T @ psi0.amplitudes
    evolved = vectors @ (np.exp(-1j * energies * t) * coefficients)
    return StateVector(evolved, psi0.dims, psi0.n_spins)


def propagate_batch(
    matrices: np.ndarray, psi0: np.ndarray, times: np.ndarray | float
) -> np.ndarray:
    """Evolve one initial vector under a stack of hermitian generators.

    ``matrices`` has shape (B, D, D); ``times`` is a scalar or has shape (B,).
    Returns amplitudes of shape (B, D).
    """

    stack = np.asarray(matrices, dtype=complex)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise OperatorError(f"Expected a (B, D, D) stack, got {stack.shape}")
    vector = np.asarray(psi0, dtype=complex).reshape(-1)
    if vector.size != stack.shape[1]:
        raise OperatorError("Initial vector does not match generator dimension")
    t = np.broadcast_to(np.asarray(times, dtype=float), (stack.shape[0],))

    energies, vectors = np.linalg.eigh(stack)
    coefficients = np.einsum("bji,j->bi", vectors.conj(), vector)
    phases = np.exp(-1j * energies * t[:, None])
    return np.einsum("bij,bj->bi", vectors, phases * coefficients)


def batch_populations(amplitudes: np.ndarray) -> np.ndarray:
    """Spin-only counterpart of :func:`populations` for (B, 2**n) amplitudes."""

    return (np.abs(amplitudes) ** 2)[:, ::-1]
