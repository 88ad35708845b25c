"""Tests for the MPS state, two-site updates, TEBD and checkpoints."""

import json

import numpy as np
import pytest

from bosechain.basis import enumerate_sector, fock_state, neel_occupations
from bosechain.errors import ConfigurationError, NumericalError
from bosechain.krylov import exact_evolve
from bosechain.model import CouplingDisorder, DisorderModel, ModelParams, build_hamiltonian, sample_disorder
from bosechain.mps import (
    A1,
    A2,
    TebdConfig,
    TebdEngine,
    _gate_sequence,
    apply_two_site_gate,
    fit_bond_growth,
    load_checkpoint,
    measure_mps,
    move_center,
    mps_from_product,
    overlap,
    pair_hamiltonians,
    save_checkpoint,
    tebd_evolve,
    to_dense,
    trotter_step_4th,
    truncation_rank,
)
from bosechain.observables import measure_state
from bosechain.spectral import full_diagonalize

PRECISE = TebdConfig(dt=0.01, eps=1e-14, D_c=200, n_max=3, T_stop=10.0)


def chain(L, seed=8, U=1.0, W=2.0):
    params = ModelParams(L=L, U=U)
    return params, sample_disorder(DisorderModel(W=W), L, seed=seed, params=params)


def embed(terms, L, d):
    """Sum of bond terms lifted to the full d^L product space."""
    total = np.zeros((d ** L, d ** L))
    for bond, h in enumerate(terms):
        total += np.kron(np.kron(np.eye(d ** bond), h), np.eye(d ** (L - bond - 2)))
    return total


def evolved_state(L=6, t=0.5, conserve=True):
    params, real = chain(L)
    cfg = PRECISE.model_copy(update={"conserve": conserve})
    state = mps_from_product(neel_occupations(L), cfg.n_max, conserve)
    engine = TebdEngine(pair_hamiltonians(params, real, cfg.n_max), cfg)
    for _ in range(int(round(t / cfg.dt))):
        engine.step(state, cfg.dt)
    return state


class TestProductState:
    def test_dense_amplitudes(self, half_filled_sector):
        state = mps_from_product(neel_occupations(6), 3)
        np.testing.assert_allclose(to_dense(state, half_filled_sector), fock_state(half_filled_sector, neel_occupations(6)))
        assert state.norm() == pytest.approx(1.0)
        assert state.max_bond == 1

    def test_charges_count_particles_to_the_left(self):
        state = mps_from_product((1, 0, 2, 1), 2)
        assert [int(q[0]) for q in state.charges] == [0, 1, 1, 3, 4]

    def test_unconserved_has_no_charges(self):
        assert not mps_from_product((1, 0), 1, conserve=False).conserve

    def test_occupation_above_cap(self):
        with pytest.raises(ConfigurationError):
            mps_from_product((3, 0), 2)

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            mps_from_product((), 2)

    def test_overlap_of_orthogonal_products(self):
        assert overlap(mps_from_product((1, 0), 1), mps_from_product((0, 1), 1)) == 0


class TestTruncation:
    def test_smallest_rank_below_cutoff(self):
        s = np.sqrt([0.9, 0.09, 0.01])
        k, discarded = truncation_rank(s, 0.05, 10)
        assert k == 2
        assert discarded == pytest.approx(0.01)

    def test_cap(self):
        k, discarded = truncation_rank(np.sqrt([0.9, 0.09, 0.01]), 1e-9, 1)
        assert k == 1
        assert discarded == pytest.approx(0.1)

    def test_keeps_everything_above_cutoff(self):
        k, discarded = truncation_rank(np.sqrt([0.5, 0.3, 0.2]), 1e-9, 10)
        assert k == 3
        assert discarded == 0.0

    def test_vanished_wavefunction(self):
        with pytest.raises(NumericalError):
            truncation_rank(np.zeros(3), 1e-9, 10)


class TestTwoSiteGate:
    def test_identity_gate_moves_center(self):
        state = evolved_state(L=4, t=0.2)
        dense_before = to_dense(state, enumerate_sector(4, 2))
        move_center(state, 3)
        assert state.center == 3
        assert state.isometry_residual() < 1e-12
        np.testing.assert_allclose(to_dense(state, enumerate_sector(4, 2)), dense_before, atol=1e-12)

    def test_center_must_touch_bond(self):
        state = mps_from_product((1, 0, 1, 0), 1)
        with pytest.raises(ConfigurationError, match="Gauge center"):
            apply_two_site_gate(state, 2, np.eye(4), 1e-9, 10)

    def test_bond_out_of_range(self):
        state = mps_from_product((1, 0), 1)
        with pytest.raises(ConfigurationError):
            apply_two_site_gate(state, 1, np.eye(4), 1e-9, 10)

    def test_truncation_is_counted(self):
        state = evolved_state(L=6, t=1.0)
        before = state.discarded
        move_center(state, 2)
        apply_two_site_gate(state, 2, np.eye(16), 1e-14, 1, "right")
        assert state.discarded > before


class TestPairHamiltonians:
    def test_sum_matches_sector_hamiltonian(self, small_sector):
        params, real = chain(4, U=3.5, W=5.0)
        n_max = small_sector.n_max
        d = n_max + 1
        full = embed(pair_hamiltonians(params, real, n_max), 4, d)
        idx = small_sector.states @ (d ** np.arange(3, -1, -1))
        expected = build_hamiltonian(params, real, small_sector).toarray()
        np.testing.assert_allclose(full[np.ix_(idx, idx)], expected, atol=1e-12)

    def test_disordered_anharmonicity(self):
        sector = enumerate_sector(4, 3)
        params = ModelParams(L=4, U=3.5, U2=0.4)
        model = DisorderModel(W=5.0, site_coupling_disorder=CouplingDisorder(anharmonicity_sd=0.3))
        real = sample_disorder(model, 4, seed=3, params=params)
        d = sector.n_max + 1
        full = embed(pair_hamiltonians(params, real, sector.n_max), 4, d)
        idx = sector.states @ (d ** np.arange(3, -1, -1))
        expected = build_hamiltonian(params, real, sector).toarray()
        np.testing.assert_allclose(full[np.ix_(idx, idx)], expected, atol=1e-12)

    def test_disordered_next_nearest_hopping_rejected(self):
        params = ModelParams(L=4)
        model = DisorderModel(W=1.0, site_coupling_disorder=CouplingDisorder(next_hopping_sd=0.1))
        with pytest.raises(ConfigurationError, match="Next-nearest"):
            pair_hamiltonians(params, sample_disorder(model, 4, seed=0, params=params), 2)

    def test_next_nearest_hopping_rejected(self):
        params = ModelParams(L=4, J2=0.2)
        real = sample_disorder(DisorderModel(W=1.0), 4, seed=0, params=params)
        with pytest.raises(ConfigurationError):
            pair_hamiltonians(params, real, 2)

    def test_engine_checks_local_dimension(self):
        params, real = chain(4)
        with pytest.raises(ConfigurationError, match="n_max"):
            TebdEngine(pair_hamiltonians(params, real, 2), PRECISE)


class TestGateSequence:
    def test_merged_durations_sum_to_dt(self):
        seq = _gate_sequence(0.1, 3)
        assert len(seq) == 13
        for bond in range(3):
            assert sum(tau for b, tau, _ in seq if b == bond) == pytest.approx(0.1)

    def test_fourth_order_weights(self):
        assert 2 * A1 + A2 == pytest.approx(1.0)
        assert 2 * A1 ** 3 + A2 ** 3 == pytest.approx(0.0, abs=1e-14)

    def test_no_consecutive_repeats(self):
        seq = _gate_sequence(0.1, 5)
        assert all(a[0] != b[0] for a, b in zip(seq, seq[1:]))


class TestTebdAgainstExact:
    @pytest.mark.parametrize("conserve", [True, False])
    def test_state_matches_exact_evolution(self, half_filled_sector, conserve):
        params, real = chain(6)
        H = build_hamiltonian(params, real, half_filled_sector)
        psi0 = fock_state(half_filled_sector, neel_occupations(6))
        exact = exact_evolve(full_diagonalize(H), psi0, [1.0])[0]
        state = evolved_state(L=6, t=1.0, conserve=conserve)
        approx = to_dense(state, half_filled_sector)
        assert abs(np.vdot(exact, approx)) == pytest.approx(1.0, abs=1e-6)

    def test_particle_number_conserved(self, half_filled_sector):
        state = evolved_state(L=6, t=1.0)
        assert np.linalg.norm(to_dense(state, half_filled_sector)) == pytest.approx(1.0, abs=1e-10)

    def test_measurements_match_dense(self, half_filled_sector):
        state = evolved_state(L=6, t=0.8)
        psi = to_dense(state, half_filled_sector)
        psi = psi / np.linalg.norm(psi)
        mps = measure_mps(state, (2, 3), 3)
        dense = measure_state(half_filled_sector, psi, (2, 3), 3)
        np.testing.assert_allclose(mps.occupations, dense.occupations, atol=1e-10)
        np.testing.assert_allclose(mps.entropies, dense.entropies, atol=1e-10)
        for r in (1, 2, 3):
            np.testing.assert_allclose(mps.correlations[r], dense.correlations[r], atol=1e-10)

    def test_trotter_step_returns_state(self):
        params, real = chain(4)
        state = mps_from_product(neel_occupations(4), 3)
        assert trotter_step_4th(state, pair_hamiltonians(params, real, 3), 0.01, PRECISE) is state

    def test_fourth_order_convergence(self, half_filled_sector):
        params, real = chain(6)
        psi0 = fock_state(half_filled_sector, neel_occupations(6))
        exact = exact_evolve(full_diagonalize(build_hamiltonian(params, real, half_filled_sector)), psi0, [0.5])[0]
        cfg = PRECISE.model_copy(update={"eps": 1e-20})
        engine = TebdEngine(pair_hamiltonians(params, real, cfg.n_max), cfg)
        errors = []
        for dt in (0.1, 0.05, 0.025):
            state = mps_from_product(neel_occupations(6), cfg.n_max)
            for _ in range(int(round(0.5 / dt))):
                engine.step(state, dt)
            errors.append(np.linalg.norm(to_dense(state, half_filled_sector) - exact))
        assert errors[0] / errors[1] > 10.0
        assert 12.0 <= errors[1] / errors[2] <= 20.0

    def test_step_is_self_adjoint(self):
        params, real = chain(6)
        cfg = PRECISE.model_copy(update={"eps": 1e-20})
        engine = TebdEngine(pair_hamiltonians(params, real, cfg.n_max), cfg)
        start = evolved_state(L=6, t=0.3)
        state = start.copy()
        engine.step(state, 0.1)
        engine.step(state, -0.1)
        assert abs(overlap(start, state)) == pytest.approx(1.0, abs=1e-10)


class TestTebdEvolve:
    def test_samples_and_bonds(self):
        params, real = chain(6)
        state = mps_from_product(neel_occupations(6), 3)
        traj, record = tebd_evolve(state, pair_hamiltonians(params, real, 3), PRECISE, [0.0, 0.05, 0.2], r_max=2)
        np.testing.assert_allclose(traj.times, [0.0, 0.05, 0.2])
        np.testing.assert_allclose(traj.occupations[0], neel_occupations(6))
        assert record.times[0] == 0.0 and record.times[-1] == pytest.approx(0.2)
        assert record.saturated_at is None
        assert traj.entropy(3)[-1] > 0

    def test_stops_at_bond_saturation(self, caplog):
        params, real = chain(6)
        cfg = PRECISE.model_copy(update={"D_c": 2})
        state = mps_from_product(neel_occupations(6), 3)
        traj, record = tebd_evolve(state, pair_hamiltonians(params, real, 3), cfg, [0.0, 0.5, 1.0])
        assert record.saturated_at is not None
        assert len(traj.times) == 1
        assert "reached D_c" in caplog.text

    def test_stops_at_T_stop(self):
        params, real = chain(4)
        cfg = PRECISE.model_copy(update={"T_stop": 0.1})
        state = mps_from_product(neel_occupations(4), 3)
        traj, _ = tebd_evolve(state, pair_hamiltonians(params, real, 3), cfg, [0.0, 0.1, 0.2, 0.3])
        np.testing.assert_allclose(traj.times, [0.0, 0.1])

    def test_rejects_unsorted_times(self):
        params, real = chain(4)
        with pytest.raises(ConfigurationError):
            tebd_evolve(mps_from_product(neel_occupations(4), 3), pair_hamiltonians(params, real, 3), PRECISE, [1.0, 0.5])


class TestBondGrowthFit:
    def test_power_law(self):
        t = np.linspace(1.0, 10.0, 20)
        assert fit_bond_growth(t, 2.0 * t ** 2).preferred == "power_law"

    def test_exponential(self):
        t = np.linspace(1.0, 10.0, 20)
        fit = fit_bond_growth(t, 2.0 * np.exp(0.7 * t))
        assert fit.preferred == "exponential"
        assert fit.exponential_rate == pytest.approx(0.7)

    def test_too_few_points(self):
        with pytest.raises(ConfigurationError):
            fit_bond_growth([0.0, 1.0, 2.0], [1, 1, 2])


class TestCheckpoint:
    def test_save_and_resume(self, tmp_path):
        state = evolved_state(L=4, t=0.2)
        path = tmp_path / "state.npz"
        save_checkpoint(state, path, 0.2)
        loaded, t = load_checkpoint(path)
        assert t == 0.2
        assert loaded.center == state.center
        assert abs(overlap(loaded, state)) == pytest.approx(1.0, abs=1e-12)
        assert [q.tolist() for q in loaded.charges] == [q.tolist() for q in state.charges]

    def test_rejects_foreign_archive(self, tmp_path):
        path = tmp_path / "other.npz"
        with path.open("wb") as fh:
            np.savez(fh, header=np.array(json.dumps({"magic": "something-else"})))
        with pytest.raises(ConfigurationError, match="not an MPS checkpoint"):
            load_checkpoint(path)
