from __future__ import annotations

import numpy as np
import pytest

from correlated_rabi.hamiltonians import (
    HamiltonianError,
    IsingParams,
    NSpinParams,
    commutator,
    correlated_n_spin,
    ising_two_spin,
    parity_operator,
    single_spin_rabi,
    subspace_reduce,
)
from correlated_rabi.operators import (
    Operator,
    StateVector,
    basis_state,
    populations,
    propagate_static,
)


def _index(label: str) -> int:
    return int(label.replace("u", "0").replace("d", "1"), 2)


def test_ising_zero_parameters_give_zero_matrix() -> None:
    assert np.allclose(ising_two_spin(IsingParams(0.0)).matrix, 0)


def test_ising_coupling_signs_in_each_block() -> None:
    H = ising_two_spin(IsingParams(1.5)).matrix

    assert H[_index("uu"), _index("dd")] == pytest.approx(-1.5)
    assert H[_index("ud"), _index("du")] == pytest.approx(1.5)


def test_ising_detunings_are_diagonal() -> None:
    H = ising_two_spin(IsingParams(0.0, 0.3, 0.7)).matrix

    assert np.allclose(H, np.diag([0.6, 1.4, -1.4, -0.6]))


def test_ising_rejects_negative_coupling() -> None:
    with pytest.raises(HamiltonianError):
        IsingParams(-1.0)


def test_from_spectroscopic_halves_every_coefficient() -> None:
    assert IsingParams.from_spectroscopic(2.0, 0.4, -0.6) == IsingParams(1.0, 0.2, -0.3)
    assert IsingParams.from_spectroscopic(-2.0).omega == pytest.approx(1.0)


def test_ising_commutes_with_parity() -> None:
    H = ising_two_spin(IsingParams(1.2, -0.4, 0.9))

    assert np.max(np.abs(commutator(H, parity_operator(2)).matrix)) == 0


def test_subspace_blocks() -> None:
    H = ising_two_spin(IsingParams(1.0, 0.25, -0.5))

    assert np.allclose(subspace_reduce(H, "even").matrix, [[0.5, -1.0], [-1.0, -0.5]])
    assert np.allclose(subspace_reduce(H, "odd").matrix, [[-1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(subspace_reduce(ising_two_spin(IsingParams(0.0)), "even").matrix, 0)


def test_subspace_reduce_rejects_leakage() -> None:
    leaky = ising_two_spin(IsingParams(1.0)).matrix.copy()
    leaky[_index("uu"), _index("ud")] = 0.1
    leaky[_index("ud"), _index("uu")] = 0.1

    with pytest.raises(HamiltonianError, match="couples the parity blocks"):
        subspace_reduce(Operator(leaky, hermitian=True), "even")
    with pytest.raises(HamiltonianError):
        subspace_reduce(ising_two_spin(IsingParams(1.0)), "diagonal")  # type: ignore[arg-type]


def test_subspace_evolution_matches_full_evolution() -> None:
    H = ising_two_spin(IsingParams(1.0, 0.4, 0.2))
    even = subspace_reduce(H, "even")
    t = 0.83

    full = populations(propagate_static(H, basis_state("dd"), t))
    block = propagate_static(even, StateVector(np.array([0, 1]), (2,), 1), t)

    assert full[3] == pytest.approx(abs(block.amplitudes[0]) ** 2, abs=1e-12)


@pytest.mark.parametrize("which", ["even", "odd"])
def test_block_gap_doubles_the_detuning(which: str) -> None:
    omega, delta = 0.7, 0.45
    p = IsingParams(omega, delta, 0.0) if which == "even" else IsingParams(omega, 0.0, delta)

    energies = np.linalg.eigvalsh(subspace_reduce(ising_two_spin(p), which).matrix)

    assert energies[1] - energies[0] == pytest.approx(2 * np.sqrt(omega**2 + 4 * delta**2))


def test_even_subspace_ignores_differential_detuning() -> None:
    psi0 = basis_state("dd")
    reference = populations(propagate_static(ising_two_spin(IsingParams(1.0, 0.3, 0.0)), psi0, 1.3))
    for delta2 in (-2.0, 0.5, 4.0):
        H = ising_two_spin(IsingParams(1.0, 0.3, delta2))
        probs = populations(propagate_static(H, psi0, 1.3))
        assert np.max(np.abs(probs - reference)) < 1e-12


def test_odd_subspace_ignores_common_detuning() -> None:
    psi0 = basis_state("du")
    reference = populations(propagate_static(ising_two_spin(IsingParams(1.0, 0.0, 0.3)), psi0, 1.3))
    for delta1 in (-2.0, 0.5, 4.0):
        H = ising_two_spin(IsingParams(1.0, delta1, 0.3))
        probs = populations(propagate_static(H, psi0, 1.3))
        assert np.max(np.abs(probs - reference)) < 1e-12


def test_two_spin_n_spin_model_reduces_to_ising() -> None:
    H = correlated_n_spin(NSpinParams(0.8, (0.3, 0.3), 2, coupling_axis="y"))

    assert np.allclose(H.matrix, ising_two_spin(IsingParams(0.8, 0.3, 0.0)).matrix)


def test_n_spin_matrix_elements() -> None:
    flip = correlated_n_spin(NSpinParams(1.0, (0.0, 0.0, 0.0), 3)).matrix
    detuned = correlated_n_spin(NSpinParams(0.0, (0.2, 0.2, 0.2), 3)).matrix

    assert flip[_index("uuu"), _index("ddd")] == pytest.approx(1.0)
    assert detuned[_index("uuu"), _index("uuu")] == pytest.approx(0.6)
    assert detuned[_index("ddd"), _index("ddd")] == pytest.approx(-0.6)


def test_n_spin_uniform_uses_spectroscopic_scaling() -> None:
    p = NSpinParams.uniform(2.0, -1.0, 4)

    assert p.omega == pytest.approx(1.0)
    assert p.deltas == (-0.5,) * 4


def test_n_spin_validation() -> None:
    with pytest.raises(HamiltonianError):
        NSpinParams(1.0, (0.0,), 1)
    with pytest.raises(HamiltonianError, match="Expected 3 detunings"):
        NSpinParams(1.0, (0.0, 0.0), 3)
    with pytest.raises(HamiltonianError, match="axis"):
        NSpinParams(1.0, (0.0, 0.0), 2, coupling_axis="z")  # type: ignore[arg-type]
    with pytest.raises(HamiltonianError, match="configured maximum"):
        correlated_n_spin(NSpinParams(1.0, (0.0,) * 4, 4, max_spins=3))


def test_single_spin_rabi() -> None:
    omega, delta = 1.3, 0.4

    assert np.allclose(single_spin_rabi(0.0, delta).matrix, np.diag([delta, -delta]))

    flipped = propagate_static(single_spin_rabi(omega, 0.0), basis_state("d"), np.pi / (2 * omega))
    assert populations(flipped)[1] == pytest.approx(1.0, abs=1e-12)

    energies = np.linalg.eigvalsh(single_spin_rabi(omega, delta).matrix)
    assert energies[1] - energies[0] == pytest.approx(2 * np.sqrt(omega**2 + delta**2))
