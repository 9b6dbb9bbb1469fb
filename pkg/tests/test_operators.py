from __future__ import annotations

import numpy as np
import pytest

from correlated_rabi.hamiltonians import IsingParams, ising_two_spin
from correlated_rabi.operators import (
    Operator,
    OperatorError,
    StateVector,
    basis_state,
    batch_populations,
    destroy,
    embed,
    hermiticity_defect,
    identity,
    parity_expectation,
    pauli,
    population_labels,
    populations,
    propagate_batch,
    propagate_static,
    tensor,
)


def _random_hermitian(rng: np.random.Generator, dim: int) -> Operator:
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return Operator((raw + raw.conj().T) / 2, hermitian=True)


def _random_state(rng: np.random.Generator, n_spins: int) -> StateVector:
    raw = rng.normal(size=2**n_spins) + 1j * rng.normal(size=2**n_spins)
    return StateVector.normalized(raw, (2,) * n_spins)


def test_pauli_matrices_follow_basis_convention() -> None:
    up = basis_state("u").amplitudes
    down = basis_state("d").amplitudes

    assert np.allclose(pauli("z").apply(basis_state("u")), up)
    assert np.allclose(pauli("y").apply(basis_state("d")), -1j * up)
    assert np.allclose(pauli("x").apply(basis_state("u")), down)
    assert np.allclose(pauli("identity").matrix, np.eye(2))
    assert np.allclose(pauli("I").matrix, np.eye(2))


def test_pauli_rejects_unknown_axis() -> None:
    with pytest.raises(OperatorError, match="Unknown Pauli axis"):
        pauli("w")


def test_tensor_products_of_sigma_y() -> None:
    yy = tensor([pauli("y"), pauli("y")])
    uu, ud, du, dd = (basis_state(label).amplitudes for label in ("uu", "ud", "du", "dd"))

    assert np.allclose(tensor([pauli("i"), pauli("i")]).matrix, np.eye(4))
    assert uu.conj() @ yy.matrix @ dd == pytest.approx(-1)
    assert ud.conj() @ yy.matrix @ du == pytest.approx(1)
    assert yy.hermitian


def test_tensor_requires_operators() -> None:
    with pytest.raises(OperatorError):
        tensor([])


def test_tensor_hermitian_flag_is_conjunction() -> None:
    non_hermitian = Operator(np.array([[0, 1], [0, 0]]))
    product = tensor([pauli("z"), non_hermitian])

    assert not product.hermitian
    assert hermiticity_defect(product.matrix) > 0


def test_embed_places_operator_on_site() -> None:
    sz = pauli("z")
    difference = embed(sz, 0, 2) - embed(sz, 1, 2)

    assert np.allclose(embed(sz, 0, 2).matrix, np.kron(sz.matrix, np.eye(2)))
    assert np.allclose(embed(sz, 1, 2).matrix, np.kron(np.eye(2), sz.matrix))
    assert np.allclose(difference.apply(basis_state("ud")), 2 * basis_state("ud").amplitudes)
    assert difference.hermitian


@pytest.mark.parametrize("site", [-1, 2])
def test_embed_rejects_site_out_of_range(site: int) -> None:
    with pytest.raises(OperatorError, match="out of range"):
        embed(pauli("z"), site, 2)


def test_operator_flagged_hermitian_is_checked() -> None:
    with pytest.raises(OperatorError, match="hermitian"):
        Operator(np.array([[0, 1], [0, 0]]), hermitian=True)


def test_complex_scaling_drops_hermitian_flag() -> None:
    assert (2.0 * pauli("x")).hermitian
    assert not (1j * pauli("x")).hermitian


def test_state_vector_requires_normalization() -> None:
    with pytest.raises(OperatorError, match="not normalized"):
        StateVector(np.array([1.0, 1.0]), (2,), 1)
    with pytest.raises(OperatorError, match="does not match dims"):
        StateVector(np.array([1.0, 0.0, 0.0]), (2,), 1)


def test_state_vector_is_read_only() -> None:
    state = basis_state("dd")

    with pytest.raises(ValueError):
        state.amplitudes[0] = 1.0


def test_basis_state_indexing() -> None:
    assert np.argmax(np.abs(basis_state("uu").amplitudes)) == 0
    assert np.argmax(np.abs(basis_state("ud").amplitudes)) == 1
    assert np.argmax(np.abs(basis_state("du").amplitudes)) == 2
    assert np.argmax(np.abs(basis_state("dd").amplitudes)) == 3
    with pytest.raises(OperatorError):
        basis_state("ux")


def test_population_labels_excitation_order() -> None:
    assert population_labels(1) == ("d", "u")
    assert population_labels(2) == ("dd", "du", "ud", "uu")
    assert population_labels(3)[0] == "ddd"
    assert population_labels(3)[-1] == "uuu"


def test_populations_of_basis_and_superposition() -> None:
    bell = StateVector.normalized(
        basis_state("dd").amplitudes + basis_state("uu").amplitudes, (2, 2)
    )

    assert np.allclose(populations(basis_state("du")), [0, 1, 0, 0])
    assert np.allclose(populations(bell), [0.5, 0, 0, 0.5])


def test_populations_trace_out_motional_mode() -> None:
    spin = StateVector.normalized(np.array([1.0, 1.0, 0, 0]), (2, 2))
    with_mode = spin.tensor_with_fock(2, 5)
    excited = StateVector.normalized(
        with_mode.amplitudes + np.roll(with_mode.amplitudes, 1), with_mode.dims, 2
    )

    probs = populations(excited)

    assert probs.shape == (4,)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(populations(with_mode), populations(spin))


def test_populations_of_single_spin_subset() -> None:
    state = basis_state("ud")

    assert np.allclose(populations(state, [0]), [0, 1])
    assert np.allclose(populations(state, [1]), [1, 0])
    assert np.allclose(populations(state, [1, 0]), [0, 1, 0, 0])
    with pytest.raises(OperatorError):
        populations(state, [2])


def test_parity_expectation() -> None:
    mixed_parity = StateVector.normalized(
        basis_state("dd").amplitudes + basis_state("ud").amplitudes, (2, 2)
    )

    assert parity_expectation(basis_state("dd")) == pytest.approx(1.0)
    assert parity_expectation(basis_state("du")) == pytest.approx(-1.0)
    assert parity_expectation(mixed_parity) == pytest.approx(0.0, abs=1e-12)


def test_propagate_static_zero_time_is_identity() -> None:
    psi0 = basis_state("dd")

    assert propagate_static(ising_two_spin(IsingParams(1.0)), psi0, 0.0) is psi0


def test_propagate_static_resonant_even_flip() -> None:
    omega = 2 * np.pi * 250.0
    H = ising_two_spin(IsingParams(omega))

    probs = populations(propagate_static(H, basis_state("dd"), np.pi / (2 * omega)))

    assert probs[0] == pytest.approx(0.0, abs=1e-12)
    assert probs[3] == pytest.approx(1.0, abs=1e-12)


def test_propagate_static_matches_two_level_formula() -> None:
    rng = np.random.default_rng(7)
    for _ in range(20):
        omega = rng.uniform(0.5, 5.0)
        delta1 = rng.uniform(-3.0, 3.0)
        t = rng.uniform(0.0, 4.0)
        H = ising_two_spin(IsingParams(omega, delta1, 0.0))

        p_uu = populations(propagate_static(H, basis_state("dd"), t))[3]

        gap = np.sqrt(omega**2 + 4 * delta1**2)
        expected = omega**2 / gap**2 * np.sin(gap * t) ** 2
        assert p_uu == pytest.approx(expected, abs=1e-10)


def test_propagate_static_preserves_norm() -> None:
    rng = np.random.default_rng(11)
    for _ in range(100):
        H = _random_hermitian(rng, 4)
        psi = propagate_static(H, _random_state(rng, 2), rng.uniform(0, 10))
        assert np.linalg.norm(psi.amplitudes) == pytest.approx(1.0, abs=1e-12)


def test_propagate_static_composes() -> None:
    rng = np.random.default_rng(3)
    H = _random_hermitian(rng, 8)
    psi0 = _random_state(rng, 3)

    stepped = propagate_static(H, propagate_static(H, psi0, 0.7), 1.1)
    direct = propagate_static(H, psi0, 1.8)

    assert np.allclose(stepped.amplitudes, direct.amplitudes, atol=1e-10)


def test_propagate_static_conserves_parity() -> None:
    rng = np.random.default_rng(5)
    psi0 = basis_state("du")
    for _ in range(20):
        H = ising_two_spin(IsingParams(*rng.uniform(0.1, 3.0, size=3)))
        for t in np.linspace(0.0, 5.0, 11):
            parity = parity_expectation(propagate_static(H, psi0, t))
            assert parity == pytest.approx(-1.0, abs=1e-10)


def test_propagate_static_validates_inputs() -> None:
    with pytest.raises(OperatorError, match="hermitian"):
        propagate_static(Operator(np.eye(4)), basis_state("dd"), 1.0)
    with pytest.raises(OperatorError, match="does not match"):
        propagate_static(identity(2), basis_state("dd"), 1.0)


def test_propagate_batch_matches_single_propagation() -> None:
    rng = np.random.default_rng(13)
    generators = [_random_hermitian(rng, 4) for _ in range(5)]
    times = rng.uniform(0, 3, size=5)
    psi0 = basis_state("dd")

    batch = propagate_batch(np.stack([H.matrix for H in generators]), psi0.amplitudes, times)

    for row, H, t in zip(batch_populations(batch), generators, times):
        assert np.allclose(row, populations(propagate_static(H, psi0, t)), atol=1e-12)


def test_propagate_batch_rejects_bad_shapes() -> None:
    with pytest.raises(OperatorError):
        propagate_batch(np.eye(4), np.ones(4), 1.0)
    with pytest.raises(OperatorError):
        propagate_batch(np.zeros((2, 4, 4)), np.ones(2), 1.0)


def test_destroy_ladder_elements() -> None:
    a = destroy(4)
    adag = a.dagger()

    assert adag.matrix[1, 0] == pytest.approx(1.0)
    assert a.matrix[2, 3] == pytest.approx(np.sqrt(3))
    with pytest.raises(OperatorError):
        destroy(1)


def test_tensor_with_fock_rejects_level_outside_truncation() -> None:
    with pytest.raises(OperatorError):
        basis_state("dd").tensor_with_fock(5, 5)
