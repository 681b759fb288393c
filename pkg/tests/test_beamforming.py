import numpy as np
import pytest

import oracles
from risisac.beamforming import (InfeasibleError, alternating_optimization, optimize_beamformers,
                                 optimize_phases_sca, optimize_receive_combiner, solve_p12,
                                 solve_p5_feasibility)
from risisac.linalg import numerical_rank
from risisac.operators import build_comm_quadratics, build_sensing_operators, lift, quartic_value
from risisac.sensing import effective_channel


def t_upper(problem, omega):
    g = effective_channel(omega, problem.channels)
    return problem.p_tx * np.vdot(g, g).real / problem.sigma_comm_sq


class TestP5:
    def test_zero_level_no_sensing_is_feasible(self, tiny_problem, tiny_report):
        sol = tiny_report.solution
        quad = build_comm_quadratics(sol.w_c, sol.w_s, sol.omega, tiny_problem.channels)
        M_r = tiny_problem.grid.matrix_Mr(sol.omega, sol.w_rx)
        ok, w, _ = solve_p5_feasibility(0.0, quad, M_r, tiny_problem.p_tx, 0.0, tiny_problem.sigma_comm_sq)
        assert ok

    @pytest.mark.parametrize("sense", [False, True])
    def test_above_snr_bound_is_infeasible(self, tiny_problem, tiny_report, sense):
        sol = tiny_report.solution
        quad = build_comm_quadratics(sol.w_c, sol.w_s, sol.omega, tiny_problem.channels)
        M_r = tiny_problem.grid.matrix_Mr(sol.omega, sol.w_rx)
        t = 1.01 * t_upper(tiny_problem, sol.omega)
        G = tiny_problem.G if sense else 0.0
        ok, w, _ = solve_p5_feasibility(t, quad, M_r, tiny_problem.p_tx, G, tiny_problem.sigma_comm_sq)
        assert not ok and w is None

    def test_extracted_beams_meet_every_constraint(self, tiny_problem, tiny_report, tiny_solution):
        p, sol = tiny_problem, tiny_report.solution
        quad = build_comm_quadratics(sol.w_c, sol.w_s, sol.omega, p.channels)
        M_r = p.grid.matrix_Mr(sol.omega, sol.w_rx)
        t = 0.5 * p.snr(tiny_solution.w_c, tiny_solution.w_s, sol.omega)
        ok, (w_c, w_s), _ = solve_p5_feasibility(t, quad, M_r, p.p_tx, p.G, p.sigma_comm_sq)
        assert ok
        assert p.snr(w_c, w_s, sol.omega) >= t * (1 - 1e-6)
        assert np.vdot(w_c, w_c).real + np.vdot(w_s, w_s).real <= p.p_tx * (1 + 1e-6)
        assert p.normalized_echo(sol.omega, w_c, w_s, sol.w_rx) >= p.G * (1 - 1e-6)


class TestBeamformers:
    def test_no_sensing_reaches_upper_bound(self, tiny_problem, tiny_report):
        sol = tiny_report.solution
        w_c, w_s, _ = optimize_beamformers(tiny_problem, sol.omega, sol.w_rx, G=0.0)
        assert tiny_problem.snr(w_c, w_s, sol.omega) == pytest.approx(t_upper(tiny_problem, sol.omega), rel=1e-12)
        assert np.all(w_s == 0)

    def test_snr_non_increasing_in_requirement(self, tiny_problem, tiny_report):
        sol = tiny_report.solution
        G_max = tiny_problem.normalized_echo(sol.omega, sol.w_c, sol.w_s, sol.w_rx)
        snrs = []
        for frac in (0.3, 0.6, 0.95):
            w_c, w_s, _ = optimize_beamformers(tiny_problem, sol.omega, sol.w_rx, G=frac * G_max)
            assert tiny_problem.normalized_echo(sol.omega, w_c, w_s, sol.w_rx) >= frac * G_max * (1 - 1e-6)
            snrs.append(tiny_problem.snr(w_c, w_s, sol.omega))
        assert snrs[0] >= snrs[1] * (1 - 1e-6) and snrs[1] >= snrs[2] * (1 - 1e-6)

    def test_matches_power_split_grid(self, tiny_problem, tiny_report):
        # fixed phases; the combiner is the BS steering vector (optimal under line of sight)
        ch = tiny_problem.channels
        om = tiny_report.solution.omega
        a_B = ch.los_H_BR[0].conj()
        w_rx = a_B / np.linalg.norm(a_B)
        w_c, w_s, state = optimize_beamformers(tiny_problem, om, w_rx)
        got = tiny_problem.snr(w_c, w_s, om)
        ref, feasible, _ = oracles.tiny_los_grid_search(tiny_problem, omegas=om[None, :], splits=64)
        assert feasible
        assert got >= ref * 0.98
        assert got <= ref * 1.02
        assert np.vdot(w_c, w_c).real + np.vdot(w_s, w_s).real <= tiny_problem.p_tx * (1 + 1e-9)
        assert tiny_problem.normalized_echo(om, w_c, w_s, w_rx) >= tiny_problem.G * (1 - 1e-6)

    def test_infeasible_start_is_reported(self, tiny_problem, tiny_report):
        sol = tiny_report.solution
        with pytest.raises(InfeasibleError, match="feasibility"):
            optimize_beamformers(tiny_problem.with_(p_tx=1.0), sol.omega, sol.w_rx)


class TestCombiner:
    def test_diagonal(self):
        w = optimize_receive_combiner(np.diag([3.0, 1.0]))
        assert np.allclose(np.abs(w), [1, 0])

    def test_rank_one(self):
        u = np.array([1.0, 2j, -1.0])
        w = optimize_receive_combiner(np.outer(u, u.conj()))
        assert abs(np.vdot(w, u)) == pytest.approx(np.linalg.norm(u))
        assert np.linalg.norm(w) == pytest.approx(1.0)

    def test_rayleigh_bound(self):
        rng = np.random.default_rng(0)
        F = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        A = F @ F.conj().T
        w = optimize_receive_combiner(A)
        best = np.vdot(w, A @ w).real
        assert best == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-9)
        for _ in range(100):
            x = oracles.random_vec(4, rng)
            assert np.vdot(x, A @ x).real <= best * (1 + 1e-12)

    def test_zero_matrix(self):
        with pytest.raises(ValueError):
            optimize_receive_combiner(np.zeros((2, 2)))


class TestP12:
    def _setup(self, problem, sol):
        quad = build_comm_quadratics(sol.w_c, sol.w_s, sol.omega, problem.channels)
        ops = build_sensing_operators(sol.w_c, sol.w_s, sol.w_rx, problem.grid)
        return quad, ops

    def test_without_echo_bounds_every_phase_choice(self, tiny_problem, tiny_solution):
        quad, ops = self._setup(tiny_problem, tiny_solution)
        X, mu, obj = solve_p12(quad, ops, None, 0.0, tiny_problem.sigma_comm_sq)
        rng = np.random.default_rng(3)
        w_c, w_s = tiny_solution.w_c, tiny_solution.w_s
        for om in [tiny_solution.omega] + [oracles.random_phases(2, rng) for _ in range(50)]:
            assert tiny_problem.snr(w_c, w_s, om) <= obj * (1 + 1e-6)

    def test_diagonal_equality_and_rank_one_objective(self, tiny_problem, tiny_solution):
        from risisac.operators import upsilon
        quad, ops = self._setup(tiny_problem, tiny_solution)
        q = lift(tiny_solution.omega)
        sig = tiny_problem.sigma_comm_sq
        X0 = sig / (np.vdot(q, quad.Z_s @ q).real + sig) * np.outer(q, q.conj())
        X, mu, obj = solve_p12(quad, ops, upsilon(ops, X0), tiny_problem.G, sig)
        assert np.max(np.abs(np.diag(X).real - mu)) <= 1e-6 * mu
        if numerical_rank(X, 1e-7) == 1:
            w = X[:, -1] / X[-1, -1]
            om = w[:-1] / np.abs(w[:-1])
            snr = tiny_problem.snr(tiny_solution.w_c, tiny_solution.w_s, om)
            assert snr == pytest.approx(obj, rel=1e-5)


class TestPhaseSca:
    def test_monotone_trace_and_feasible(self, desk_problem, desk_report):
        sol = desk_report.solution
        p = desk_problem
        w_c, w_s, _ = optimize_beamformers(p, sol.omega, sol.w_rx, init=(sol.w_c, sol.w_s))
        om, trace = optimize_phases_sca(p, sol.omega, w_c, w_s, sol.w_rx)
        assert len(trace) >= 2
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))
        assert p.normalized_echo(om, w_c, w_s, sol.w_rx) >= p.G * (1 - 1e-6)
        assert p.snr(w_c, w_s, om) >= p.snr(w_c, w_s, sol.omega)
        assert np.allclose(np.abs(om), 1, atol=1e-12)

    def test_fixed_point(self, desk_problem, desk_solution):
        s = desk_solution
        om, trace = optimize_phases_sca(desk_problem, s.omega, s.w_c, s.w_s, s.w_rx)
        assert desk_problem.snr(s.w_c, s.w_s, om) >= s.snr
        assert desk_problem.snr(s.w_c, s.w_s, om) - s.snr <= desk_problem.eps2 * 10 + 1e-6 * s.snr

    def test_rejects_infeasible_start(self, desk_problem, desk_report):
        sol = desk_report.solution
        rng = np.random.default_rng(0)
        om = oracles.random_phases(desk_problem.channels.N, rng)
        ops = build_sensing_operators(sol.w_c, sol.w_s, sol.w_rx, desk_problem.grid)
        assert quartic_value(ops, lift(om)) < desk_problem.G
        with pytest.raises(InfeasibleError):
            optimize_phases_sca(desk_problem, om, sol.w_c, sol.w_s, sol.w_rx, ops=ops)


class TestAlternating:
    def test_trace_monotone(self, desk_solution):
        tr = np.array(desk_solution.trace)
        assert len(tr) >= 4
        assert np.all(np.diff(tr) >= -1e-8 * tr[:-1])
        for inner in desk_solution.inner_traces:
            assert np.all(np.diff(inner) >= -1e-8 * np.abs(inner[:-1]))

    def test_constraints_hold_and_bind(self, desk_problem, desk_solution):
        s, p = desk_solution, desk_problem
        gamma = p.spec.gamma
        assert gamma - 1e-6 <= s.detection_probability <= gamma + 0.02
        assert np.vdot(s.w_c, s.w_c).real + np.vdot(s.w_s, s.w_s).real <= p.p_tx * (1 + 1e-9)
        assert np.linalg.norm(s.w_rx) == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(np.abs(s.omega), 1.0, atol=1e-9)

    def test_combiner_is_rayleigh_optimal(self, desk_problem, desk_solution):
        s = desk_solution
        M_cs = desk_problem.grid.matrix_Mcs_normalized(s.omega, s.w_c, s.w_s)
        val = np.vdot(s.w_rx, M_cs @ s.w_rx).real
        assert val >= np.linalg.eigvalsh(M_cs)[-1] * (1 - 1e-3)

    def test_common_phase_invariance(self, desk_problem, desk_solution):
        s, p = desk_solution, desk_problem
        rot = np.exp(1.234j)
        # the echo ignores a common RIS phase; the SNR ignores a common beam phase
        assert p.echo_power(s.omega * rot, s.w_c, s.w_s, s.w_rx) == pytest.approx(s.echo_power, rel=1e-10)
        assert p.snr(s.w_c * rot, s.w_s / rot, s.omega) == pytest.approx(s.snr, rel=1e-10)
        assert p.echo_power(s.omega, s.w_c * rot, s.w_s, s.w_rx * rot) == pytest.approx(s.echo_power, rel=1e-10)

    def test_infeasible_start_rejected(self, desk_problem, desk_report):
        sol = desk_report.solution
        bad = type(sol)(sol.w_c * 1e-3, sol.w_s, sol.w_rx, sol.omega)
        with pytest.raises(InfeasibleError, match="feasibility"):
            alternating_optimization(desk_problem, bad)

    def test_tiny_matches_grid(self, tiny_problem, tiny_solution):
        ref, feasible, _ = oracles.tiny_los_grid_search(tiny_problem)
        assert feasible
        assert abs(tiny_solution.snr - ref) <= 0.03 * ref

    def test_no_sensing_gives_upper_bound(self, desk_problem, desk_solution):
        free = alternating_optimization(desk_problem.with_(sense_enabled=False), desk_solution)
        assert free.snr >= desk_solution.snr
