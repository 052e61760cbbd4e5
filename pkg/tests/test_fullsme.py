import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from qreadout.config import ReadoutConfig, Scheme
from qreadout.effective import QubitState, run_effective_trajectory, trace_distance
from qreadout.errors import (InvariantViolation, PositivityError,
                             TruncationError)
from qreadout.fullsme import (FockJointState, annihilation, build_operators,
                              coherent_vector, displacement_matrix,
                              propagate_linear_full, reduce_qubit,
                              run_trajectory_full, step_sme)
from qreadout.kernels import OK
from qreadout.seeding import trajectory_rng


def cfg_small(**kw):
    kw.setdefault("n_max", 8)
    kw.setdefault("t_final", 1.0)
    return ReadoutConfig(**kw)


class TestOperators:
    def test_ladder_matrix_elements(self):
        cfg = cfg_small(n_max=1)
        ops = build_operators(1, cfg)
        # cavity block of a at minimal truncation: only <0|a|1> = 1
        a_block = ops.a[:2, :2]
        assert a_block[0, 1] == 1.0
        assert np.count_nonzero(a_block) == 1

    def test_number_operator_diagonal(self):
        n_max = 6
        ops = build_operators(n_max, cfg_small(n_max=n_max))
        number = (ops.a_dag @ ops.a).diagonal().real
        np.testing.assert_allclose(number[:n_max + 1], np.arange(n_max + 1))

    def test_zero_drive_zero_hamiltonian(self):
        ops = build_operators(4, cfg_small(drive=0.0))
        assert np.all(ops.h_z == 0)

    def test_commutator_truncation_corner(self):
        n_max = 5
        ops = build_operators(n_max, cfg_small(n_max=n_max))
        comm = ops.a @ ops.a_dag - ops.a_dag @ ops.a
        eye = np.eye(2 * (n_max + 1))
        # identity except the top-Fock corner of each qubit block
        mask = np.ones(2 * (n_max + 1), dtype=bool)
        mask[n_max] = mask[2 * n_max + 1] = False
        np.testing.assert_allclose(comm[mask][:, mask], eye[mask][:, mask],
                                   atol=1e-14)
        assert comm[n_max, n_max] == pytest.approx(-n_max)

    def test_quadratures(self):
        cfg = cfg_small(phi_lo=0.7)
        ops = build_operators(3, cfg)
        np.testing.assert_allclose(ops.i_phi, ops.i_phi.conj().T, atol=1e-15)
        np.testing.assert_allclose(ops.q_phi, ops.q_phi.conj().T, atol=1e-15)
        expected = 0.5 * (ops.a * np.exp(-1j * 0.7)
                          + ops.a_dag * np.exp(1j * 0.7))
        np.testing.assert_allclose(ops.i_phi, expected, atol=1e-15)

    def test_longitudinal_hamiltonian_sign_structure(self):
        cfg = cfg_small(drive=2.0)
        ops = build_operators(2, cfg)
        # e block couples with +drive/2, g block with -drive/2
        assert ops.h_z[0, 1] == pytest.approx(1.0)
        assert ops.h_z[3, 4] == pytest.approx(-1.0)

    def test_dispersive_hamiltonian(self):
        cfg = cfg_small(scheme=Scheme.DISPERSIVE, chi=0.5, drive=0.3,
                        phi_lo=0.0)
        ops = build_operators(2, cfg)
        nc = 3
        # qubit-state-dependent frequency shift on the number operator
        assert ops.h_z[1, 1] == pytest.approx(0.5)
        assert ops.h_z[nc + 1, nc + 1] == pytest.approx(-0.5)
        # plus a state-independent drive
        assert ops.h_z[0, 1] == pytest.approx(0.3)
        assert ops.h_z[nc, nc + 1] == pytest.approx(0.3)

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            build_operators(5000, cfg_small())


class TestJointState:
    def test_initial_state_validates(self):
        FockJointState.initial(cfg_small()).validate()

    def test_validate_rejects_negative_eigenvalue(self):
        cfg = cfg_small(n_max=2)
        st = FockJointState.initial(cfg)
        rho = st.rho.copy()
        rho[1, 1] = -1e-6
        rho[0, 0] += 1e-6
        with pytest.raises(PositivityError):
            FockJointState(rho, 2).validate()

    def test_validate_rejects_top_occupancy(self):
        cfg = cfg_small(n_max=2)
        nc = 3
        psi = np.zeros(2 * nc, complex)
        psi[nc - 1] = 1.0
        with pytest.raises(TruncationError):
            FockJointState.from_vector(psi, 2).validate()

    def test_coherent_vector_is_normalized_eigenvector(self):
        alpha = 0.7 + 0.3j
        v = coherent_vector(alpha, 40)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        a = annihilation(40)
        np.testing.assert_allclose((a @ v)[:-1], (alpha * v)[:-1], atol=1e-10)

    def test_displacement_generates_coherent_state(self):
        alpha = -0.4 + 0.9j
        n_max = 40
        d = displacement_matrix(alpha, n_max)
        vac = np.zeros(n_max + 1, complex)
        vac[0] = 1.0
        np.testing.assert_allclose(d @ vac, coherent_vector(alpha, n_max),
                                   atol=1e-10)


class TestReduceQubit:
    def test_product_state(self):
        cfg = cfg_small()
        st = FockJointState.product(1.0, 0.0, 0.4, 0.0, cfg.n_max)
        q = reduce_qubit(st)
        assert q.rho_ee == pytest.approx(1.0)
        assert q.rho_eg == 0.0

    def test_entangled_branch_overlap(self):
        # (|e>|alpha> + |g>|-alpha>)/sqrt(2): coherence is the brute-force
        # Fock-space inner product <-alpha|alpha>/2 = exp(-2 alpha^2)/2
        alpha = 0.6
        st = FockJointState.product(1 / math.sqrt(2), 1 / math.sqrt(2),
                                    alpha, -alpha, 30)
        q = reduce_qubit(st)
        brute = np.vdot(coherent_vector(-alpha, 30),
                        coherent_vector(alpha, 30))
        assert q.rho_eg == pytest.approx(brute / 2, abs=1e-12)
        assert q.rho_eg.real == pytest.approx(0.24337612797998584, abs=1e-10)

    def test_generic_product_factor(self):
        cfg = cfg_small()
        c_e, c_g = math.sqrt(0.3), math.sqrt(0.7)
        st = FockJointState.product(c_e, c_g, 0.5j, 0.5j, cfg.n_max)
        q = reduce_qubit(st)
        assert q.rho_ee == pytest.approx(0.3, abs=1e-12)
        # same cavity branch on both arms: pure qubit factor returned
        assert q.rho_eg == pytest.approx(c_e * c_g, abs=1e-12)


class TestStepSme:
    def test_vacuum_dark_state(self):
        cfg = cfg_small(drive=0.0)
        ops = build_operators(cfg.n_max, cfg)
        st = FockJointState.initial(cfg, qubit=(0.0, 1.0))
        for w in (-1.7, 0.0, 2.2):
            out, current = step_sme(st, ops, cfg, w)
            np.testing.assert_allclose(out.rho, st.rho, atol=1e-14)
            assert current == pytest.approx(w / math.sqrt(cfg.dt))

    def test_coherent_state_current_mean(self):
        # <a> on a coherent branch gives sqrt(kappa) 2 Re(alpha e^{-i phi})
        alpha = 0.7 + 0.3j
        cfg = cfg_small(n_max=20, phi_lo=0.4)
        ops = build_operators(cfg.n_max, cfg)
        st = FockJointState.product(1.0, 0.0, alpha, 0.0, cfg.n_max)
        _, current = step_sme(st, ops, cfg, 0.0)
        expected = math.sqrt(cfg.kappa) * 2 * (alpha * np.exp(-1j * 0.4)).real
        assert current == pytest.approx(expected, abs=1e-10)

    def test_rejects_nonfinite_noise(self):
        cfg = cfg_small()
        ops = build_operators(cfg.n_max, cfg)
        with pytest.raises(ValueError):
            step_sme(FockJointState.initial(cfg), ops, cfg, math.nan)

    def test_positivity_check_catches_corrupted_state(self):
        cfg = cfg_small(n_max=4)
        ops = build_operators(cfg.n_max, cfg)
        st = FockJointState.initial(cfg)
        rho = st.rho.copy()
        rho[2, 2] = -5e-4
        rho[0, 0] += 5e-4
        bad = FockJointState(rho, cfg.n_max)
        with pytest.raises(PositivityError):
            step_sme(bad, ops, cfg, 0.1)


class TestTrajectory:
    def test_zero_steps_returns_initial(self):
        cfg = cfg_small()
        run = run_trajectory_full(cfg, n_steps=0)
        assert len(run.record) == 0
        assert len(run.states) == 1
        np.testing.assert_allclose(run.states[0].rho,
                                   FockJointState.initial(cfg).rho)

    def test_seed_reuse_bit_identical(self):
        cfg = cfg_small(seed=9, t_final=0.2)
        r1 = run_trajectory_full(cfg)
        r2 = run_trajectory_full(cfg)
        np.testing.assert_array_equal(r1.record.current, r2.record.current)
        np.testing.assert_array_equal(r1.qubit_ee, r2.qubit_ee)

    def test_qnd_population_invariance(self):
        cfg = cfg_small(seed=3, t_final=1.0, n_max=12)
        st = FockJointState.initial(cfg, qubit=(1.0, 0.0))
        run = run_trajectory_full(cfg, rho0=st)
        assert np.max(np.abs(run.qubit_ee - 1.0)) < 1e-10

    def test_trace_preserved_and_states_valid(self):
        cfg = cfg_small(seed=4, t_final=0.5, n_max=10)
        run = run_trajectory_full(cfg, store_every=100)
        for st in run.states:
            assert abs(np.trace(st.rho).real - 1.0) < 1e-10
            st.validate()

    def test_record_noise_statistics(self):
        cfg = cfg_small(seed=15, t_final=4.0, n_max=4, drive=0.2)
        run = run_trajectory_full(cfg)
        xi = run.record.xi
        n = len(xi)
        assert abs(np.mean(xi) * math.sqrt(cfg.dt)) < 4 / math.sqrt(n)
        assert abs(np.var(xi) * cfg.dt - 1.0) < 4 / math.sqrt(n)

    def test_truncation_guard_trips(self):
        cfg = cfg_small(n_max=2, drive=4.0, t_final=2.0, seed=1)
        with pytest.raises(TruncationError):
            run_trajectory_full(cfg)

    def test_ensemble_mean_matches_lindblad_oracle(self):
        # unconditional (deterministic) joint master equation integrated
        # independently with solve_ivp as the weak-convergence oracle
        cfg = cfg_small(n_max=6, dt=2e-3, t_final=1.0, drive=0.8, seed=123)
        ops = build_operators(cfg.n_max, cfg)
        dim = ops.dim

        def lindblad_rhs(_, y):
            rho = y.reshape(dim, dim)
            comm = ops.h_z @ rho - rho @ ops.h_z
            diss = ops.a @ rho @ ops.a_dag \
                - 0.5 * (ops.a_dag @ ops.a @ rho + rho @ ops.a_dag @ ops.a)
            return (-1j * comm + cfg.kappa * diss).ravel()

        rho0 = FockJointState.initial(cfg).rho
        sol = solve_ivp(lindblad_rhs, (0.0, cfg.t_final),
                        rho0.ravel().astype(complex), rtol=1e-9, atol=1e-11)
        rho_exact = sol.y[:, -1].reshape(dim, dim)
        q_exact = reduce_qubit(FockJointState(rho_exact, cfg.n_max))

        n_traj = 160
        finals = []
        for i in range(n_traj):
            w = trajectory_rng(cfg.seed, i).standard_normal(cfg.n_steps)
            from qreadout import kernels

            _, rho, ee, eg, _, _, status = kernels.sme_path(
                np.ascontiguousarray(rho0), ops.kmat, ops.a, cfg.n_max + 1,
                cfg.kappa, cfg.phi_lo, cfg.dt, w, cfg.n_steps, 1e-6, 1e-6)
            assert status == OK
            finals.append([ee[-1], eg[-1].real, eg[-1].imag])
        finals = np.asarray(finals)
        mean = finals.mean(axis=0)
        se = finals.std(axis=0, ddof=1) / math.sqrt(n_traj)
        target = np.array([q_exact.rho_ee, q_exact.rho_eg.real,
                           q_exact.rho_eg.imag])
        np.testing.assert_array_less(np.abs(mean - target),
                                     3 * np.maximum(se, 1e-4))

    def test_polaron_reduction_matches_effective(self):
        # shared-noise cross-validation of the two formulations
        cfg = ReadoutConfig(n_max=16, t_final=2.0, dt=1e-3, seed=8)
        full = run_trajectory_full(cfg)
        eff = run_effective_trajectory(cfg, noise=full.record)
        td = _path_trace_distance(full.qubit_path(), eff.path)
        assert td.max() < 5e-2

    def test_polaron_mismatch_shrinks_with_dt(self):
        meds = {}
        for dt in (2e-3, 1e-3):
            dists = []
            for seed in (0, 1, 2):
                w_fine = trajectory_rng(seed, 5).standard_normal(
                    int(round(1.5 / 1e-3)))
                if dt == 2e-3:
                    w = (w_fine[0::2] + w_fine[1::2]) / math.sqrt(2)
                else:
                    w = w_fine
                cfg = ReadoutConfig(n_max=14, dt=dt, t_final=1.5, seed=seed)
                from qreadout.records import record_from_noise

                # build the record through the full engine so both sides
                # consume identical noise
                ops = build_operators(cfg.n_max, cfg)
                full = run_trajectory_full(
                    cfg, noise=record_from_noise(
                        w, np.zeros_like(w), cfg.dt, cfg.phi_lo), ops=ops)
                eff = run_effective_trajectory(cfg, noise=full.record)
                dists.append(
                    _path_trace_distance(full.qubit_path(), eff.path).max())
            meds[dt] = np.median(dists)
        assert meds[1e-3] < meds[2e-3]


def _path_trace_distance(path_a, path_b):
    d_ee = path_a[:, 0] - path_b[:, 0]
    d_eg2 = (path_a[:, 1] - path_b[:, 1]) ** 2 \
        + (path_a[:, 2] - path_b[:, 2]) ** 2
    return np.sqrt(d_ee**2 + d_eg2)


class TestLinearFull:
    def test_linear_route_matches_normalized_route(self):
        cfg = cfg_small(n_max=10, t_final=0.6, seed=6)
        ops = build_operators(cfg.n_max, cfg)
        run = run_trajectory_full(cfg, ops=ops)
        lin = propagate_linear_full(FockJointState.initial(cfg), ops,
                                    run.record, cfg)
        q_lin = reduce_qubit(lin)
        q_run = QubitState.from_components(
            run.qubit_ee[-1], run.qubit_eg[-1])
        assert trace_distance(q_lin, q_run) < 2e-2
