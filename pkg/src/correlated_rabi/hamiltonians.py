from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from .operators import (
    HERMITIAN_TOLERANCE,
    Operator,
    embed,
    pauli,
    tensor,
)

MAX_SPINS = 10

# Basis indices of the two parity blocks in computational order (uu, ud, du, dd).
_EVEN_BLOCK = (0, 3)
_ODD_BLOCK = (1, 2)


class HamiltonianError(ValueError):
    """Raised for invalid model parameters or malformed block structure."""


@dataclass(frozen=True)
class IsingParams:
    """Coefficients of the two-spin Ising generator, in rad/s.

    The generator is ``omega * sy sy + delta1 * (sz I + I sz) +
    delta2 * (sz I - I sz)``. Spectroscopic quantities (the coupling seen as a
    lineshape Rabi frequency, the laser detuning from the mean transition and
    half the transition difference) carry an extra factor of two; use
    :meth:`from_spectroscopic` to build the generator from them.
    """

    omega: float
    delta1: float = 0.0
    delta2: float = 0.0

    def __post_init__(self) -> None:
        if self.omega < 0:
            raise HamiltonianError(f"Coupling must be non-negative, got {self.omega}")

    @classmethod
    def from_spectroscopic(
        cls, coupling: float, delta1: float = 0.0, delta2: float = 0.0
    ) -> "IsingParams":
        return cls(abs(coupling) / 2.0, delta1 / 2.0, delta2 / 2.0)


@dataclass(frozen=True)
class NSpinParams:
    omega: float
    deltas: tuple[float, ...]
    n: int
    coupling_axis: Literal["x", "y"] = "x"
    max_spins: int = field(default=MAX_SPINS, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if self.n < 2:
            raise HamiltonianError(f"N-spin model needs n >= 2, got {self.n}")
        if len(self.deltas) != self.n:
            raise HamiltonianError(
                f"Expected {self.n} detunings, got {len(self.deltas)}"
            )
        if self.coupling_axis not in ("x", "y"):
            raise HamiltonianError(f"Unsupported coupling axis {self.coupling_axis!r}")
        if self.omega < 0:
            raise HamiltonianError(f"Coupling must be non-negative, got {self.omega}")

    @classmethod
    def uniform(
        cls,
        coupling: float,
        detuning: float,
        n: int,
        *,
        coupling_axis: Literal["x", "y"] = "x",
        max_spins: int = MAX_SPINS,
    ) -> "NSpinParams":
        """Generator for a spectroscopic coupling and common laser detuning."""

        return cls(
            abs(coupling) / 2.0,
            (detuning / 2.0,) * n,
            n,
            coupling_axis,
            max_spins,
        )


def _read_only(matrix: np.ndarray) -> np.ndarray:
    matrix = np.array(matrix)
    matrix.setflags(write=False)
    return matrix


def ising_two_spin(p: IsingParams) -> Operator:
    coupling, common, differential = ising_generators()
    matrix = p.omega * coupling + p.delta1 * common + p.delta2 * differential
    return Operator(matrix, hermitian=True)


@lru_cache(maxsize=None)
def ising_generators() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three Hermitian terms multiplying (omega, delta1, delta2)."""

    sy, sz = pauli("y"), pauli("z")
    z1, z2 = embed(sz, 0, 2), embed(sz, 1, 2)
    return (
        _read_only(tensor([sy, sy]).matrix),
        _read_only((z1 + z2).matrix),
        _read_only((z1 - z2).matrix),
    )


@lru_cache(maxsize=None)
def n_spin_generators(n: int, coupling_axis: str = "x") -> tuple[np.ndarray, np.ndarray]:
    """Collective flip ``sigma_axis^N`` and the summed ``sigma_z`` term."""

    flip = tensor([pauli(coupling_axis)] * n).matrix
    z_total = np.zeros_like(flip)
    for site in range(n):
        z_total = z_total + embed(pauli("z"), site, n).matrix
    return _read_only(flip), _read_only(z_total)


def correlated_n_spin(p: NSpinParams) -> Operator:
    if p.n > p.max_spins:
        raise HamiltonianError(
            f"{p.n} spins exceeds the configured maximum of {p.max_spins}"
        )
    flip, _ = n_spin_generators(p.n, p.coupling_axis)
    sz = pauli("z")
    matrix = p.omega * flip
    for site, delta in enumerate(p.deltas):
        if delta:
            matrix = matrix + delta * embed(sz, site, p.n).matrix
    return Operator(matrix, hermitian=True)


def single_spin_rabi(omega: float, delta: float) -> Operator:
    return omega * pauli("y") + delta * pauli("z")


def subspace_reduce(H: Operator, which: Literal["even", "odd"]) -> Operator:
    """Extract the 2x2 parity block of a two-spin generator.

    The even block uses the ordered basis (uu, dd), the odd block (ud, du).
    """

    if H.dim != 4:
        raise HamiltonianError(f"subspace_reduce() needs a 4x4 operator, got {H.dim}")
    if which == "even":
        block = _EVEN_BLOCK
    elif which == "odd":
        block = _ODD_BLOCK
    else:
        raise HamiltonianError(f"Unknown subspace {which!r}")

    matrix = H.matrix
    even, odd = list(_EVEN_BLOCK), list(_ODD_BLOCK)
    scale = max(1.0, float(np.max(np.abs(matrix))))
    leakage = max(
        float(np.max(np.abs(matrix[np.ix_(even, odd)]))),
        float(np.max(np.abs(matrix[np.ix_(odd, even)]))),
    )
    if leakage / scale > HERMITIAN_TOLERANCE:
        raise HamiltonianError(
            f"Operator couples the parity blocks (leakage {leakage:.3g})"
        )
    return Operator(matrix[np.ix_(block, block)], H.hermitian)


def parity_operator(n: int = 2) -> Operator:
    return tensor([pauli("z")] * n) if n > 1 else pauli("z")


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a
