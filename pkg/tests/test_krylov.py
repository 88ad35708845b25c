"""Tests for Lanczos tridiagonalization and Krylov time evolution."""

import numpy as np
import pytest
import scipy.linalg as la

from bosechain.basis import enumerate_sector, fock_state, neel_occupations
from bosechain.errors import ConfigurationError, NumericalError
from bosechain.krylov import (
    KrylovConfig,
    KrylovPropagator,
    evolve,
    exact_evolve,
    krylov_step,
    lanczos_tridiagonalize,
    sector_measure,
    time_grid,
)
from bosechain.model import DisorderModel, ModelParams, build_hamiltonian, sample_disorder
from bosechain.observables import measure_state
from bosechain.spectral import full_diagonalize

ACCURATE = KrylovConfig(m=20, dt=0.1)


@pytest.fixture
def mild_hamiltonian(half_filled_sector):
    params = ModelParams(L=6, U=1.0)
    real = sample_disorder(DisorderModel(W=2.0), 6, seed=8, params=params)
    return build_hamiltonian(params, real, half_filled_sector)


@pytest.fixture
def neel(half_filled_sector):
    return fock_state(half_filled_sector, neel_occupations(6)).astype(complex)


class TestLanczos:
    def test_basis_orthonormal(self, disordered_hamiltonian, random_state):
        result = lanczos_tridiagonalize(disordered_hamiltonian, random_state(56), 8, reorthogonalize=True)
        V = result.basis
        np.testing.assert_allclose(V.conj().T @ V, np.eye(8), atol=1e-10)

    def test_projection_is_tridiagonal(self, disordered_hamiltonian, random_state):
        result = lanczos_tridiagonalize(disordered_hamiltonian, random_state(56), 6, reorthogonalize=True)
        V = result.basis
        projected = V.conj().T @ (disordered_hamiltonian @ V)
        np.testing.assert_allclose(projected, result.tridiagonal(), atol=1e-9)

    def test_breakdown_on_eigenvector(self):
        result = lanczos_tridiagonalize(np.diag([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 0.0]), 3)
        assert result.m == 1

    def test_breakdown_threshold_is_absolute(self):
        v0 = np.array([1.0, 0.0])
        assert lanczos_tridiagonalize(np.array([[100.0, 5e-14], [5e-14, 0.0]]), v0, 2).m == 2
        assert lanczos_tridiagonalize(np.array([[100.0, 5e-15], [5e-15, 0.0]]), v0, 2).m == 1

    def test_m_capped_by_dimension(self):
        H = np.diag([1.0, 2.0, 3.0])
        result = lanczos_tridiagonalize(H, np.ones(3) / np.sqrt(3.0), 10)
        assert result.m == 3

    def test_start_vector_must_be_normalized(self, disordered_hamiltonian):
        with pytest.raises(ConfigurationError):
            lanczos_tridiagonalize(disordered_hamiltonian, np.ones(56), 5)


class TestKrylovStep:
    def test_matches_matrix_exponential(self, mild_hamiltonian, neel):
        expected = la.expm(-0.1j * mild_hamiltonian.toarray()) @ neel
        np.testing.assert_allclose(krylov_step(mild_hamiltonian, neel, 0.1, ACCURATE), expected, atol=1e-10)

    def test_preserves_norm(self, disordered_hamiltonian, random_state):
        propagator = KrylovPropagator(disordered_hamiltonian)
        psi = random_state(56)
        for _ in range(20):
            psi = propagator.step(psi, 0.05)
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)

    def test_eigenstate_only_gains_phase(self, dense_hamiltonian, disordered_hamiltonian):
        values, vectors = np.linalg.eigh(dense_hamiltonian)
        psi = krylov_step(disordered_hamiltonian, vectors[:, 7].astype(complex), 0.3)
        np.testing.assert_allclose(psi, np.exp(-0.3j * values[7]) * vectors[:, 7], atol=1e-10)

    def test_zero_vector(self, disordered_hamiltonian):
        with pytest.raises(NumericalError, match="zero vector"):
            KrylovPropagator(disordered_hamiltonian).step(np.zeros(56), 0.1)

    def test_time_reversal(self, mild_hamiltonian, neel):
        forward = krylov_step(mild_hamiltonian, neel, 0.3, ACCURATE)
        np.testing.assert_allclose(krylov_step(mild_hamiltonian, forward, -0.3, ACCURATE), neel, atol=1e-10)

    def test_error_decreases_with_subspace_size(self, mild_hamiltonian, neel):
        expected = la.expm(-0.3j * mild_hamiltonian.toarray()) @ neel
        errors = [
            np.linalg.norm(krylov_step(mild_hamiltonian, neel, 0.3, KrylovConfig(m=m)) - expected)
            for m in (4, 8, 12, 20)
        ]
        assert all(a > b for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 1e-10

    def test_large_subspace_single_step_at_strong_disorder(self):
        sector = enumerate_sector(8, 4)
        params = ModelParams(L=8, U=3.5)
        H = build_hamiltonian(params, sample_disorder(DisorderModel(W=15.0), 8, seed=5, params=params), sector)
        psi0 = fock_state(sector, neel_occupations(8)).astype(complex)
        expected = la.expm(-0.1j * H.toarray()) @ psi0
        assert np.linalg.norm(krylov_step(H, psi0, 0.1, KrylovConfig(m=30)) - expected) < 1e-6


class TestTimeGrid:
    def test_linear(self):
        np.testing.assert_allclose(time_grid(2.0, 5), [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_log_starts_at_zero(self):
        grid = time_grid(100.0, 4, "log", t_min=1.0)
        np.testing.assert_allclose(grid, [0.0, 1.0, 10.0, 100.0])

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            time_grid(0.0, 5)
        with pytest.raises(ConfigurationError):
            time_grid(1.0, 5, "log", t_min=2.0)
        with pytest.raises(ConfigurationError):
            time_grid(1.0, 5, "cubic")


class TestEvolve:
    def test_matches_exact_evolution(self, half_filled_sector, mild_hamiltonian, neel):
        times = np.array([0.0, 0.25, 1.0, 2.37, 5.0])
        traj = evolve(mild_hamiltonian, neel, times, ACCURATE, sector_measure(half_filled_sector, (3,), 2), (3,))
        states = exact_evolve(full_diagonalize(mild_hamiltonian), neel, times)
        for k, psi in enumerate(states):
            exact = measure_state(half_filled_sector, psi, (3,), 2)
            np.testing.assert_allclose(traj.occupations[k], exact.occupations, atol=1e-8)
            assert traj.entropy(3)[k] == pytest.approx(exact.entropies[0], abs=1e-8)
            np.testing.assert_allclose(traj.correlations[1][k], exact.correlations[1], atol=1e-8)

    def test_initial_sample_is_initial_state(self, half_filled_sector, disordered_hamiltonian, neel):
        traj = evolve(disordered_hamiltonian, neel, [0.0, 0.5], None, sector_measure(half_filled_sector, (3,), 1), (3,))
        np.testing.assert_allclose(traj.occupations[0], neel_occupations(6))
        assert traj.entropy(3)[0] == pytest.approx(0.0, abs=1e-14)

    def test_conserves_particles_and_energy(self, half_filled_sector, disordered_hamiltonian, neel):
        traj = evolve(
            disordered_hamiltonian, neel, time_grid(3.0, 7), ACCURATE, sector_measure(half_filled_sector, (3,), 1), (3,)
        )
        np.testing.assert_allclose(traj.occupations.sum(axis=1), 3.0, atol=1e-10)
        assert traj.norm_drift < 1e-10
        assert traj.energy_drift < 1e-7

    def test_rejects_unsorted_times(self, half_filled_sector, disordered_hamiltonian, neel):
        with pytest.raises(ConfigurationError):
            evolve(disordered_hamiltonian, neel, [0.0, 2.0, 1.0], None, sector_measure(half_filled_sector, (3,), 1))

    def test_rejects_negative_times(self, half_filled_sector, disordered_hamiltonian, neel):
        with pytest.raises(ConfigurationError):
            evolve(disordered_hamiltonian, neel, [-1.0, 1.0], None, sector_measure(half_filled_sector, (3,), 1))


class TestExactEvolve:
    def test_time_zero_is_identity(self, disordered_hamiltonian, random_state):
        psi0 = random_state(56)
        states = exact_evolve(full_diagonalize(disordered_hamiltonian), psi0, [0.0])
        np.testing.assert_allclose(states[0], psi0, atol=1e-12)

    def test_unitary(self, disordered_hamiltonian, random_state):
        states = exact_evolve(full_diagonalize(disordered_hamiltonian), random_state(56), [0.5, 3.0, 40.0])
        np.testing.assert_allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-12)


@pytest.mark.slow
class TestKrylovAcceptance:
    def test_tracks_exact_dynamics_at_L10(self):
        sector = enumerate_sector(10, 5)
        params = ModelParams(L=10, U=3.5)
        H = build_hamiltonian(params, sample_disorder(DisorderModel(W=10.0), 10, seed=3, params=params), sector)
        psi0 = fock_state(sector, neel_occupations(10)).astype(complex)
        times = time_grid(10.0, 11)
        traj = evolve(H, psi0, times, KrylovConfig(m=20, dt=0.05), sector_measure(sector, (5,), 1), (5,))
        states = exact_evolve(full_diagonalize(H), psi0, times)
        exact = np.array([measure_state(sector, psi, (5,), 1).occupations for psi in states])
        np.testing.assert_allclose(traj.occupations, exact, atol=1e-8)
