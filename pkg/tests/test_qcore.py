import logging

import numpy as np
import pytest

from paritysim.errors import DimensionError, StateError
from paritysim.qcore import (
    DensityMatrix,
    Operator,
    annihilation_op,
    apply_unitary,
    basis_ket,
    dm_pure,
    expectation,
    number_op,
)

RNG = np.random.default_rng(2024)


def random_operator(dim):
    mat = RNG.normal(size=(dim, dim)) + 1j * RNG.normal(size=(dim, dim))
    return Operator(mat)


def test_annihilation_matrix_dim2():
    a = annihilation_op(2)
    assert np.array_equal(a.entries, np.array([[0, 1], [0, 0]], dtype=complex))


def test_annihilation_ladder_element_dim3():
    a = annihilation_op(3)
    assert a.entries[1, 2] == pytest.approx(np.sqrt(2))
    n = a.dagger().entries @ a.entries
    assert np.allclose(n, np.diag([0.0, 1.0, 2.0]))


@pytest.mark.parametrize("dim", [2, 3, 4, 5])
def test_commutator_truncation_corner(dim):
    a = annihilation_op(dim).entries
    comm = a @ a.conj().T - a.conj().T @ a
    expected = np.eye(dim, dtype=complex)
    expected[-1, -1] = -(dim - 1)
    assert np.array_equal(comm, expected)


@pytest.mark.parametrize("dim", [0, 1])
def test_annihilation_rejects_small_dims(dim):
    with pytest.raises(DimensionError):
        annihilation_op(dim)


def test_operator_dimension_cap():
    with pytest.raises(DimensionError):
        Operator(np.zeros((6, 6)))
    with pytest.raises(DimensionError):
        Operator(np.zeros((2, 3)))


def test_operator_entries_immutable():
    a = annihilation_op(2)
    with pytest.raises(ValueError):
        a.entries[0, 0] = 1.0


def test_dm_pure_ground_state():
    rho = dm_pure(basis_ket(2, 0))
    assert np.array_equal(rho.entries, np.diag([1.0, 0.0]).astype(complex))


def test_dm_pure_plus_state():
    rho = dm_pure(np.array([1.0, 1.0]) / np.sqrt(2))
    assert np.allclose(rho.entries, 0.5 * np.ones((2, 2)))


def test_dm_pure_circular_state_off_diagonals():
    rho = dm_pure(np.array([1.0, 1.0j]) / np.sqrt(2))
    assert rho.entries[0, 1] == pytest.approx(-0.5j)
    assert rho.entries[1, 0] == pytest.approx(0.5j)


def test_dm_pure_zero_vector_rejected():
    with pytest.raises(StateError):
        dm_pure(np.zeros(2))


def test_dm_pure_renormalizes_and_reports(caplog):
    with caplog.at_level(logging.WARNING):
        rho = dm_pure(np.array([2.0, 0.0]))
    assert rho.entries[0, 0] == pytest.approx(1.0)
    assert any("renormalizing" in rec.message for rec in caplog.records)


def test_expectation_number_operator():
    n = number_op(2)
    assert expectation(dm_pure(basis_ket(2, 0)), n) == pytest.approx(0.0)
    assert expectation(dm_pure(basis_ket(2, 1)), n) == pytest.approx(1.0)


def test_expectation_sigma_x_of_plus():
    a = annihilation_op(2)
    x = Operator(a.entries + a.dagger().entries)
    plus = dm_pure(np.array([1.0, 1.0]) / np.sqrt(2))
    assert expectation(plus, x) == pytest.approx(1.0)


def test_expectation_dimension_mismatch():
    with pytest.raises(DimensionError):
        expectation(dm_pure(basis_ket(2, 0)), number_op(3))


@pytest.mark.parametrize("trial", range(5))
def test_expectation_linear_and_conjugate_symmetric(trial):
    dim = int(RNG.integers(2, 5))
    ket = RNG.normal(size=dim) + 1j * RNG.normal(size=dim)
    rho = dm_pure(ket / np.linalg.norm(ket))
    a, b = random_operator(dim), random_operator(dim)
    alpha = complex(RNG.normal(), RNG.normal())
    lhs = expectation(rho, Operator(alpha * a.entries + b.entries))
    rhs = alpha * expectation(rho, a) + expectation(rho, b)
    assert lhs == pytest.approx(rhs)
    assert expectation(rho, a.dagger()) == pytest.approx(np.conj(expectation(rho, a)))


def test_density_matrix_rejects_bad_trace():
    with pytest.raises(StateError, match="trace"):
        DensityMatrix(Operator(np.diag([0.7, 0.7])))


def test_density_matrix_rejects_non_hermitian():
    mat = np.array([[0.5, 0.1], [0.3, 0.5]], dtype=complex)
    with pytest.raises(StateError, match="Hermitian"):
        DensityMatrix(Operator(mat))


def test_density_matrix_rejects_negative_eigenvalue():
    mat = np.array([[1.2, 0.0], [0.0, -0.2]], dtype=complex)
    with pytest.raises(StateError, match="positive"):
        DensityMatrix(Operator(mat))


def test_density_matrix_tolerates_integrator_roundoff():
    mat = np.diag([1.0 - 2e-10, 2e-10 - 1e-11]).astype(complex)
    DensityMatrix(Operator(mat))


def test_apply_unitary_preserves_validity():
    theta = 0.7
    u = np.array(
        [[np.cos(theta), -1j * np.sin(theta)], [-1j * np.sin(theta), np.cos(theta)]]
    )
    rho = apply_unitary(dm_pure(basis_ket(2, 0)), u)
    assert rho.entries[1, 1].real == pytest.approx(np.sin(theta) ** 2)
