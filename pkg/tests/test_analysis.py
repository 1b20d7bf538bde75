import numpy as np
import pytest

from coopstab.analysis import (
    build_lyapunov_certificate,
    bound_report,
    compare_channel_addition,
    compute_m1_bar,
    compute_m2_bar,
    error_covariance_recursion,
    lqr_value,
    noise_bound,
    nominal_closed_loop,
    optimize_epsilon,
)
from coopstab.errors import NumericFailure
from coopstab.graph import (
    CommGraph,
    PrivacyWeights,
    build_augmented,
    build_weights,
    complete_graph,
)
from coopstab.linalg import solve_discrete_lyapunov
from coopstab.plant import NoiseSpec, PlantModel
from coopstab.synthesis import AgentGains, derive_kappa_bounds


@pytest.fixture(scope="module")
def sec4_cert(sec4, sec4_synthesis):
    return build_lyapunov_certificate(nominal_closed_loop(sec4.plant, sec4_synthesis.gains))


@pytest.fixture(scope="module")
def sec4_bounds(sec4, sec4_synthesis, sec4_weights, sec4_aug, sec4_cert):
    kappa = derive_kappa_bounds(
        sec4.plant.a,
        sec4_synthesis.b_fusion.fused[0],
        sec4_synthesis.c_fusion.fused[0],
        sec4_synthesis.gains,
        sec4_cert.p,
        sec4_cert.q,
        sec4.graph,
    )
    return bound_report(sec4_cert, sec4.plant, sec4_synthesis.gains, sec4_weights, sec4_aug, kappa)


class TestLyapunovCertificate:
    def test_zero_loop(self):
        cert = build_lyapunov_certificate(np.zeros((2, 2)))
        # P0 = I, so the default scaling takes theta = 1 and halves both sides
        assert cert.theta == pytest.approx(1.0)
        assert np.allclose(cert.p, 0.5 * np.eye(2))
        assert np.allclose(cert.q, 0.5 * np.eye(2))
        assert cert.residual() < 1e-14

    def test_scalar_half_ratio_rule(self):
        cert = build_lyapunov_certificate(np.array([[0.5]]))
        # P0 = 4/3; ratio rule: c = 3/8, theta = c/(1-c) = 0.6
        assert cert.theta == pytest.approx(0.6, rel=1e-12)
        assert cert.residual() < 1e-12
        assert np.linalg.eigvalsh(cert.q)[0] > 0

    def test_theta_override_validated(self):
        with pytest.raises(NumericFailure):
            build_lyapunov_certificate(np.array([[0.5]]), theta=5.0)

    def test_transport_residual(self, sec4_cert):
        assert sec4_cert.residual() <= 1e-8 * np.linalg.norm(sec4_cert.p, 2)

    def test_unstable_f_rejected(self):
        with pytest.raises(NumericFailure):
            build_lyapunov_certificate(np.array([[1.01]]))


class TestFusionStepBounds:
    def test_unit_psi_log_identity(self):
        # zero-gain system: psi = 1; pick the base mixing so the brace equals
        # lambda^2 and the bound is exactly one round
        cert = build_lyapunov_certificate(np.zeros((2, 2)))
        arg = cert.theta**2 * cert.lam_min_q / (2 * (1 + cert.theta) ** 2 * cert.lam_max_p)
        lam = np.sqrt(arg)
        a = (1 - lam) / 2
        g = complete_graph(2)
        w = build_weights(g, "uniform")
        w = type(w)(w=np.array([[1 - a, a], [a, 1 - a]]), graph=g)
        plant = PlantModel(a=np.zeros((1, 1)), channels=[(np.zeros((1, 1)), np.zeros((1, 1)))] * 2)
        gains = [
            AgentGains(k_gain=np.zeros((1, 1)), l_gain=np.zeros((1, 1)),
                       fused_b=np.zeros((1, 1)), fused_c=np.zeros((1, 1)))
            for _ in range(2)
        ]
        m1, vacuous = compute_m1_bar(cert, plant, gains, w)
        assert not vacuous
        assert m1 == pytest.approx(1.0, rel=1e-9)

    def test_complete_graph_needs_single_round(self):
        cert = build_lyapunov_certificate(np.zeros((2, 2)))
        w = build_weights(complete_graph(3), "uniform")
        plant = PlantModel(a=np.zeros((1, 1)), channels=[(np.zeros((1, 1)), np.zeros((1, 1)))] * 3)
        gains = [
            AgentGains(k_gain=np.zeros((1, 1)), l_gain=np.zeros((1, 1)),
                       fused_b=np.zeros((1, 1)), fused_c=np.zeros((1, 1)))
            for _ in range(3)
        ]
        m1, vacuous = compute_m1_bar(cert, plant, gains, w)
        assert (m1, vacuous) == (1.0, False)

    def test_transport_bounds_finite_and_ordered(self, sec4_bounds):
        b = sec4_bounds
        assert 0 < b.m1_bar < b.m2_bar
        assert not b.m1_vacuous and not b.m2_vacuous
        assert b.psi_tilde >= b.psi >= 1.0
        assert b.lam_tilde > b.lam > 0

    def test_kappa_form_more_conservative(self, sec4_bounds):
        assert sec4_bounds.m1_bar_kappa >= sec4_bounds.m1_bar
        assert sec4_bounds.m2_bar_kappa >= sec4_bounds.m2_bar

    def test_relaxed_form_bounds_exact_form(self, sec4, sec4_synthesis, sec4_aug, sec4_cert):
        exact, _ = compute_m2_bar(sec4_cert, sec4.plant, sec4_synthesis.gains, sec4_aug, "exact")
        relaxed, _ = compute_m2_bar(sec4_cert, sec4.plant, sec4_synthesis.gains, sec4_aug, "relaxed")
        # dropping ||V||^2 < 1 enlarges psi, hence the bound
        assert relaxed >= exact

    def test_vanishing_coupling_limit_matches_branch_formula(self):
        # pi -> 1, eps -> 0: the augmented spectrum approaches the branch pairs
        rng = np.random.default_rng(8)
        g = CommGraph([[0, 1], [0, 1, 2], [1, 2]])
        w = build_weights(g, "metropolis")
        eps = 1e-6
        pw = PrivacyWeights(eps, (1 - 1e-9, 1 - 1e-9, 1 - 1e-9))
        aug = build_augmented(w, pw)
        from coopstab.graph import augmented_pair_eigenvalues, second_eigenvalue

        lam_tilde = second_eigenvalue(aug)
        branches = []
        for lam in np.linalg.eigvals(w.w):
            branches.extend(abs(v) for v in augmented_pair_eigenvalues(lam, eps))
        branches = sorted(branches)[:-1]  # drop the preserved unit eigenvalue
        assert lam_tilde == pytest.approx(max(branches), abs=1e-4)


class TestOptimizeEpsilon:
    def test_matches_fine_scan_on_rank_one_mixing(self):
        w = build_weights(complete_graph(2), "uniform")
        eps_star, lam_star = optimize_epsilon(w, grid=200)

        def objective(eps):
            return max(
                abs(1 + np.sqrt(1 + 4 * eps**2) - 2 * eps),
                abs(1 - np.sqrt(1 + 4 * eps**2) - 2 * eps),
            )

        grid = np.arange(1e-3, 2 / 3 - 1e-3, 1e-3)
        best = min(grid, key=objective)
        assert eps_star == pytest.approx(best, abs=5e-3)
        assert 2 * lam_star == pytest.approx(objective(best), abs=1e-2)

    def test_transport_cycle_improves_on_large_eps(self, sec4_weights):
        eps_star, lam_star = optimize_epsilon(sec4_weights)
        assert 0 < eps_star < 2 / 3

        def objective(eps):
            from coopstab.graph import augmented_pair_eigenvalues

            ev = np.linalg.eigvals(sec4_weights.w)
            ev = np.delete(ev, np.argmin(abs(ev - 1)))
            return max(
                max(2 * abs(v) for v in augmented_pair_eigenvalues(lam, eps)) for lam in ev
            )

        assert 2 * lam_star <= objective(0.6) + 1e-12

    def test_grid_floor(self, sec4_weights):
        with pytest.raises(ValueError):
            optimize_epsilon(sec4_weights, grid=5)


class TestNoiseBound:
    def test_zero_noise_zero_bound(self, sec4, sec4_synthesis, sec4_aug):
        cert = noise_bound(sec4.plant, sec4_synthesis.gains, sec4_aug, 20, NoiseSpec(0.0, 0.0))
        assert cert.bound == 0.0
        assert 0 < cert.theta_breve < 1

    def test_bound_scales_with_noise_power(self, sec4, sec4_synthesis, sec4_aug):
        c1 = noise_bound(sec4.plant, sec4_synthesis.gains, sec4_aug, 20, NoiseSpec(0.1, 0.1))
        c2 = noise_bound(sec4.plant, sec4_synthesis.gains, sec4_aug, 20, NoiseSpec(0.2, 0.2))
        assert c2.bound == pytest.approx(4.0 * c1.bound, rel=1e-9)

    def test_unstable_loop_rejected(self, sec4, sec4_synthesis, sec4_aug):
        with pytest.raises(NumericFailure):
            noise_bound(sec4.plant, sec4_synthesis.gains, sec4_aug, 1, NoiseSpec(0.1, 0.1))


class TestErrorCovariance:
    def test_zero_drive_collapses(self, sec4, sec4_synthesis, sec4_aug):
        seq, fixed = error_covariance_recursion(
            sec4.plant, sec4_synthesis.gains, sec4_aug, 20, np.zeros((8, 8)), horizon=5
        )
        assert all(np.allclose(p, 0.0) for p in seq)
        assert np.allclose(fixed, 0.0, atol=1e-12)

    def test_first_step_equals_drive(self, sec4, sec4_synthesis, sec4_aug):
        from coopstab.agents import noise_input_matrix

        q = np.diag([0.01] * 4 + [0.04] * 4)
        seq, _ = error_covariance_recursion(
            sec4.plant, sec4_synthesis.gains, sec4_aug, 20, q, horizon=1
        )
        fw = noise_input_matrix(sec4.plant, sec4_synthesis.gains, sec4_aug, 20)
        assert np.allclose(seq[0], fw @ q @ fw.T, atol=1e-14)

    def test_fixed_point_matches_dual_lyapunov(self, sec4, sec4_synthesis, sec4_aug):
        # oracle: the PD-only public solver on a regularized drive
        from coopstab.agents import build_closed_loop_matrix, noise_input_matrix

        q = np.diag([0.01] * 8)
        _, fixed = error_covariance_recursion(
            sec4.plant, sec4_synthesis.gains, sec4_aug, 20, q, horizon=1
        )
        f2 = build_closed_loop_matrix(sec4.plant, sec4_synthesis.gains, sec4_aug, 20, private=True)
        fw = noise_input_matrix(sec4.plant, sec4_synthesis.gains, sec4_aug, 20)
        reg = 1e-10
        oracle = solve_discrete_lyapunov(f2.T, fw @ q @ fw.T + reg * np.eye(36))
        assert np.linalg.norm(fixed - oracle, 2) < 1e-8 * np.linalg.norm(oracle, 2) + 1e-6

    def test_recursion_converges_to_fixed_point(self, sec4, sec4_synthesis, sec4_aug):
        q = np.diag([0.01] * 8)
        seq, fixed = error_covariance_recursion(
            sec4.plant, sec4_synthesis.gains, sec4_aug, 20, q, horizon=2500
        )
        gaps = [np.linalg.norm(p - fixed, 2) for p in seq[::250]]
        assert all(b <= a + 1e-12 for a, b in zip(gaps[:-1], gaps[1:]))
        assert gaps[-1] < 1e-4 * np.linalg.norm(fixed, 2)


class TestLqr:
    def test_zero_initial_state(self, sec4):
        rep = lqr_value(sec4.plant.input_gramian(), sec4.plant.a, np.zeros(4))
        assert rep.j_value == 0.0

    def test_scalar_fixed_point(self):
        rep = lqr_value(np.array([[1.0]]), np.array([[0.5]]), np.array([1.0]))
        # p^2 = 1 + 0.25 p, positive root
        assert rep.j_value == pytest.approx(1.1327822185373186, abs=1e-9)

    def test_channel_addition_zero_column_degenerate(self, sec4):
        s0 = sec4.error_state(sec4.initial_state)
        j0, j1, monotone = compare_channel_addition(sec4.plant, np.zeros(4), s0)
        assert j0 == pytest.approx(j1, rel=1e-12)
        assert monotone

    def test_transport_added_robot_improves_index(self, sec4):
        s0 = sec4.error_state(sec4.initial_state)
        j0, j1, monotone = compare_channel_addition(sec4.plant, sec4.channel_addition, s0)
        assert monotone and j0 >= j1
        # frozen values from the converged Riccati solutions
        assert j0 == pytest.approx(1955436.95, rel=1e-6)
        assert j1 == pytest.approx(1909921.65, rel=1e-6)

    def test_transport_iterate_ordering_premise_fails(self, sec4):
        # the added robot breaks the squared-Gramian ordering (squaring is
        # not operator monotone), so the per-iterate comparison is refused
        from coopstab.plant import add_channel

        g0 = sec4.plant.input_gramian()
        g1 = add_channel(sec4.plant, sec4.channel_addition).input_gramian()
        assert np.linalg.eigvalsh(g1 @ g1 - g0 @ g0)[0] < -1e-9
        s0 = sec4.error_state(sec4.initial_state)
        _, _, monotone = compare_channel_addition(
            sec4.plant, sec4.channel_addition, s0, check_iterates=True, iterate_rounds=60
        )
        assert not monotone  # per-iterate ordering genuinely fails here

    def test_monotone_when_squared_gramians_ordered(self):
        # diagonal actuation keeps the squares ordered, where the iterate
        # map is antitone in the squared Gramian and the claim is a theorem
        rng = np.random.default_rng(9)
        for _ in range(5):
            n = 3
            a = rng.normal(0, 1, (n, n))
            a *= rng.uniform(0.7, 1.2) / max(abs(np.linalg.eigvals(a)))
            d = rng.uniform(0.2, 1.0, n)
            channels = [(np.diag(np.sqrt(d))[:, [j]], rng.normal(0, 1, (1, n))) for j in range(n)]
            plant = PlantModel(a=a, channels=channels)
            j_axis = int(rng.integers(0, n))
            b_new = np.zeros(n)
            b_new[j_axis] = rng.uniform(0.2, 1.0)
            g0 = plant.input_gramian()
            g1 = g0 + np.outer(b_new, b_new)
            assert np.linalg.eigvalsh(g1 @ g1 - g0 @ g0)[0] > -1e-12
            s0 = rng.normal(0, 1, n)
            j0, j1, monotone = compare_channel_addition(
                plant, b_new, s0, check_iterates=True, iterate_rounds=50
            )
            assert monotone and j0 >= j1 - 1e-9 * abs(j0)
