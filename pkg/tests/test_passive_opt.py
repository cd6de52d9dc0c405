import numpy as np
import pytest

from omnisteer.metrics import comm_mi_per_user
from omnisteer.model import build_channel_set, crandn, spawn_rng
from omnisteer.passive_opt import (QuadraticForm, reduce_to_quadratic, retract,
                                   riemannian_gradient, rga_optimize,
                                   sdr_optimize, solve_unit_diag_sdp, transport)
from conftest import make_cfg, random_feasible_design, random_psd
from reference_solvers import admm_unit_diag_sdp, brute_force_phase_max


def quad_value(theta, c):
    return float(np.real(np.vdot(theta, c @ theta)))


def random_phases(rng, m):
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, m))


class TestReduction:
    def test_zero_precoder(self):
        cfg = make_cfg()
        ch = build_channel_set(cfg, 0.2, spawn_rng(0))
        v = random_feasible_design(cfg, ch, spawn_rng(1))
        v.W[:] = 0.0
        qf = reduce_to_quadratic(ch, v)
        assert np.all(qf.C == 0)

    def test_matches_direct_quadratic(self):
        for t in range(10):
            cfg = make_cfg()
            rng = spawn_rng(2, t)
            ch = build_channel_set(cfg, rng.uniform(-1, 1), rng)
            v = random_feasible_design(cfg, ch, rng)
            qf = reduce_to_quadratic(ch, v)
            theta = random_phases(rng, cfg.M)
            x = theta * qf.b
            direct = float(np.real(np.vdot(x, ch.R_H @ x)))
            assert quad_value(theta, qf.C) == pytest.approx(direct, rel=1e-10)

    def test_unit_diagonal_for_unit_excitation(self):
        rng = spawn_rng(3)
        b = random_phases(rng, 6)
        c = b.conj()[:, None] * np.eye(6) * b[None, :]
        assert np.allclose(np.diag(c), 1.0, atol=1e-12)


class TestManifoldPieces:
    def test_identity_matrix_gradient_vanishes(self):
        theta = random_phases(spawn_rng(4), 8)
        g = riemannian_gradient(theta, np.eye(8))
        assert np.max(np.abs(g)) < 1e-12

    def test_gradient_tangency(self):
        rng = spawn_rng(5)
        for _ in range(20):
            theta = random_phases(rng, 10)
            g = riemannian_gradient(theta, random_psd(rng, 10))
            assert np.max(np.abs(np.real(g * theta.conj()))) < 1e-12

    def test_transport_lands_in_tangent_space(self):
        rng = spawn_rng(6)
        for _ in range(20):
            theta = random_phases(rng, 10)
            eta = crandn(rng, 10)
            carried = transport(theta, eta)
            assert np.max(np.abs(np.real(carried * theta.conj()))) < 1e-12

    def test_retraction_unit_modulus(self):
        rng = spawn_rng(7)
        for _ in range(20):
            theta = random_phases(rng, 10)
            z = transport(theta, crandn(rng, 10))
            out = retract(theta, 0.7 * z)
            assert np.max(np.abs(np.abs(out) - 1.0)) <= 1e-12

    def test_finite_difference_gradient(self):
        # directional derivative along a retracted tangent direction
        rng = spawn_rng(8)
        for _ in range(10):
            c = random_psd(rng, 8)
            theta = random_phases(rng, 8)
            g = riemannian_gradient(theta, c)
            d = transport(theta, crandn(rng, 8))
            d = d / np.linalg.norm(d)
            t = 1e-6
            fp = quad_value(retract(theta, t * d), c)
            fm = quad_value(retract(theta, -t * d), c)
            fd = (fp - fm) / (2.0 * t)
            expected = float(np.real(np.vdot(g, d)))
            assert fd == pytest.approx(expected, rel=1e-5, abs=1e-7)


class TestRga:
    def test_identity_terminates_immediately(self):
        cfg = make_cfg(M=6)
        theta0 = random_phases(spawn_rng(9), 6)
        theta, trace = rga_optimize(np.eye(6), theta0, cfg)
        assert trace.converged
        assert trace.iterations <= 1
        assert trace.objective_per_iter[-1] == pytest.approx(6.0, rel=1e-12)

    def test_all_ones_matrix_reaches_global(self):
        m = 8
        cfg = make_cfg(M=m, q_max=2000)
        c = np.ones((m, m), dtype=complex)
        theta0 = random_phases(spawn_rng(10), m)
        theta, trace = rga_optimize(c, theta0, cfg, epsilon=1e-9)
        assert trace.objective_per_iter[-1] == pytest.approx(m * m, abs=1e-6)

    def test_objective_monotone(self):
        rng = spawn_rng(11)
        for _ in range(5):
            c = random_psd(rng, 12)
            theta, trace = rga_optimize(c, random_phases(rng, 12), make_cfg(M=12),
                                        epsilon=1e-8)
            diffs = np.diff(trace.objective_per_iter)
            assert np.all(diffs >= -1e-12 * max(1.0, trace.objective_per_iter[-1]))

    def test_small_instance_matches_grid(self):
        rng = spawn_rng(12)
        for _ in range(5):
            c = random_psd(rng, 3)
            best = brute_force_phase_max(c)
            theta, _ = rga_optimize(c, random_phases(rng, 3), make_cfg(M=3),
                                    epsilon=1e-10, q_max=2000)
            assert quad_value(theta, c) >= 0.999 * best

    def test_rejects_bad_start(self):
        with pytest.raises(ValueError):
            rga_optimize(np.eye(3), np.array([1.0, 2.0, 1.0], complex), make_cfg(M=3))


class TestSdr:
    def test_two_element_closed_form(self):
        rng = spawn_rng(13)
        for _ in range(5):
            c01 = crandn(rng)
            c = np.array([[1.0, c01], [np.conj(c01), 1.0]])
            theta, achieved, relax = sdr_optimize(c, make_cfg(M=2, N_rand=300), rng)
            assert achieved == pytest.approx(2.0 + 2.0 * abs(c01), abs=1e-4)

    def test_unit_modulus_output(self):
        rng = spawn_rng(14)
        c = random_psd(rng, 9)
        theta, _, _ = sdr_optimize(c, make_cfg(M=9), rng)
        assert np.max(np.abs(np.abs(theta) - 1.0)) < 1e-12

    def test_relaxation_upper_bounds_both_solvers(self):
        rng = spawn_rng(15)
        for _ in range(5):
            c = random_psd(rng, 6)
            cfg = make_cfg(M=6)
            theta_s, achieved, relax = sdr_optimize(c, cfg, rng)
            theta_r, _ = rga_optimize(c, random_phases(rng, 6), cfg, epsilon=1e-9)
            tol = 1e-6 * max(1.0, relax)
            assert relax >= achieved - tol
            assert relax >= quad_value(theta_r, c) - tol

    def test_factorized_sdp_matches_admm(self):
        # the spec's dense reference solve validates the low-rank route
        rng = spawn_rng(16)
        for m in (2, 3, 4):
            c = random_psd(rng, m)
            q, val, _ = solve_unit_diag_sdp(c, rng)
            ref, _ = admm_unit_diag_sdp(c)
            assert val == pytest.approx(ref, rel=1e-3)
            assert np.allclose(np.diag(q).real, 1.0, atol=1e-9)
            assert np.min(np.linalg.eigvalsh(q)) >= -1e-9

    def test_rejects_non_hermitian(self):
        rng = spawn_rng(17)
        c = crandn(rng, 4, 4)
        with pytest.raises(ValueError):
            sdr_optimize(c, make_cfg(M=4), rng)


def test_phase_choice_leaves_user_mi_unchanged():
    cfg = make_cfg()
    ch = build_channel_set(cfg, 0.5, spawn_rng(18))
    v = random_feasible_design(cfg, ch, spawn_rng(19))
    before = comm_mi_per_user(v, ch, cfg)
    qf = reduce_to_quadratic(ch, v)
    v.theta, _ = rga_optimize(qf.C, v.theta, cfg)
    assert np.array_equal(before, comm_mi_per_user(v, ch, cfg))
