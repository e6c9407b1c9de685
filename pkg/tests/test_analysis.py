import numpy as np
import pytest
import scipy.linalg

from gridfreq import (
    NoiseGains,
    NumericalError,
    ValidationError,
    assemble_closed_loop,
    h2_closed_form,
    h2_frequency_weighted,
    h2_gramian,
    modal_decompose,
    mode_norms,
    optimal_allocation,
    solve_lyapunov,
    steady_state,
    uniform_fleet,
    verify_steady_state_optimality,
)
from conftest import high_noise, path_network, ten_bus_network


class TestSolveLyapunov:
    def test_scaled_identity(self):
        x = solve_lyapunov(-np.eye(4), np.eye(4))
        assert np.allclose(x, 0.5 * np.eye(4))

    def test_scalar_balance(self):
        x = solve_lyapunov(np.array([[-2.0]]), np.array([[4.0]]))
        assert x[0, 0] == pytest.approx(1.0)

    def test_two_by_two_against_scipy(self):
        a = np.array([[0.0, 1.0], [-1.0, -1.0]])
        q = np.diag([0.0, 1.0])
        x = solve_lyapunov(a, q)
        reference = scipy.linalg.solve_continuous_lyapunov(a.T, -q)
        assert np.allclose(x, reference, atol=1e-12)
        assert np.linalg.norm(a.T @ x + x @ a + q) < 1e-12

    def test_residual_invariant_on_random_stable_systems(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            d = int(rng.integers(2, 12))
            a = rng.standard_normal((d, d))
            a -= (np.abs(np.linalg.eigvals(a).real).max() + 0.5) * np.eye(d)
            g = rng.standard_normal((d, d))
            q = g @ g.T
            x = solve_lyapunov(a, q)
            assert np.linalg.norm(a.T @ x + x @ a + q) < 1e-8 * np.linalg.norm(q)

    def test_rejects_right_half_plane(self):
        with pytest.raises(NumericalError, match="right half-plane"):
            solve_lyapunov(np.array([[1.0]]), np.eye(1))

    def test_rejects_imaginary_axis(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(NumericalError):
            solve_lyapunov(a, np.eye(2))


class TestH2Gramian:
    def test_zero_input_gives_zero(self, ten_bus, dc_fleet):
        model = assemble_closed_loop(ten_bus, dc_fleet)  # all noise gains zero
        assert h2_gramian(model).value == pytest.approx(0.0, abs=1e-14)

    def test_droop_fleet_matches_closed_form(self, ten_bus, dc_fleet):
        model = assemble_closed_loop(ten_bus, dc_fleet,
                                     [NoiseGains(k1=0.1, k2=5.0)] * 10)
        value = h2_gramian(model).value
        reference = h2_closed_form("DC", 10, 1.0, 0.1, 15.0, 15.0, 0.1, 5.0)
        assert value == pytest.approx(reference, rel=1e-9)
        assert reference == pytest.approx(2.595, abs=5e-4)

    def test_norm_is_topology_independent(self, dc_fleet):
        noise = [NoiseGains(k1=0.1, k2=5.0)] * 10
        ring = assemble_closed_loop(ten_bus_network(), dc_fleet, noise)
        path = assemble_closed_loop(path_network(10, susceptance=3.0), dc_fleet, noise)
        assert h2_gramian(ring).value == pytest.approx(h2_gramian(path).value, rel=1e-9)

    def test_swing_baseline(self, ten_bus):
        model = assemble_closed_loop(ten_bus, uniform_fleet(10, "CP"),
                                     [NoiseGains(k1=0.1)] * 10)
        reference = h2_closed_form("SWING", 10, 1.0, 0.1, 15.0, k1=0.1)
        assert h2_gramian(model).value == pytest.approx(reference, rel=1e-9)

    def test_refuses_derivative_noise(self, ten_bus):
        model = assemble_closed_loop(ten_bus, uniform_fleet(10, "VI", r_r=15.0, m_v=0.15),
                                     high_noise(10))
        with pytest.raises(ValidationError, match="frequency_weighted"):
            h2_gramian(model)


class TestClosedForm:
    def test_zero_noise_zero_norm(self):
        assert h2_closed_form("DC", 10, 1.0, 0.1, 15.0, 15.0, 0.0, 0.0) == 0.0

    def test_droop_hand_value(self):
        value = h2_closed_form("DC", 10, 1.0, 0.1, 15.0, 15.0, 0.1, 5.0)
        assert value == pytest.approx(10 * (0.01 + (1.0 / 3.0) ** 2) / (2 * (0.1 + 2.0 / 15.0)))
        assert value == pytest.approx(2.595, abs=5e-4)

    def test_swing_hand_value(self):
        assert h2_closed_form("SWING", 1, 1.0, 0.1, 15.0, k1=1.0) == pytest.approx(3.0)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValidationError):
            h2_closed_form("DC", 10, -1.0, 0.1, 15.0, 15.0, 0.1, 5.0)
        with pytest.raises(ValidationError):
            h2_closed_form("DC", 10, 1.0, 0.1, 15.0, None, 0.1, 5.0)
        with pytest.raises(ValidationError):
            h2_closed_form("H_INF", 10, 1.0, 0.1, 15.0, 15.0, 0.1, 5.0)

    def test_droop_monotone_in_inverter_droop_without_measurement_noise(self):
        # with k2 = 0 a stronger droop (smaller r_r) strictly helps
        values = [h2_closed_form("DC", 10, 1.0, 0.1, 15.0, r_r, 0.1, 0.0)
                  for r_r in (30.0, 15.0, 7.5, 3.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_mixed_noise_tradeoff(self):
        # with measurement noise the norm is no longer monotone in the droop
        # strength: weakening the droop helps in one regime and hurts in the
        # other (interior optimum near r_r ~ 8e2 for these gains)
        r_values = np.geomspace(0.1, 1e5, 120)
        norms = np.array(
            [h2_closed_form("DC", 10, 1.0, 0.1, 15.0, r, 0.1, 5.0) for r in r_values]
        )
        steps = np.diff(norms)
        assert (steps < 0).any() and (steps > 0).any()
        best = int(np.argmin(norms))
        assert 0 < best < len(norms) - 1


class TestFrequencyWeighted:
    def test_virtual_inertia_is_infinite_with_limiting_gain(self, ten_bus):
        model = assemble_closed_loop(ten_bus, uniform_fleet(10, "VI", r_r=15.0, m_v=0.15),
                                     high_noise(10))
        result = h2_frequency_weighted(model)
        assert result.kind == "infinite"
        assert result.feedthrough_gain == pytest.approx(5.0 * 0.15 / 1.15, abs=1e-9)
        assert result.feedthrough_gain == pytest.approx(0.6522, abs=5e-5)

    def test_no_derivative_noise_matches_gramian(self, ten_bus, dc_fleet):
        noise = [NoiseGains(k1=0.1, k2=5.0)] * 10
        model = assemble_closed_loop(ten_bus, dc_fleet, noise)
        weighted = h2_frequency_weighted(model)
        plain = h2_gramian(model)
        assert weighted.kind == "finite"
        assert weighted.value == pytest.approx(plain.value, rel=1e-4)

    def test_idroop_beats_droop_at_small_nu(self, ten_bus):
        cfgs = uniform_fleet(10, "IDROOP", r_r=15.0, delta=6.0, nu=0.01)
        model = assemble_closed_loop(ten_bus, cfgs, high_noise(10))
        result = h2_frequency_weighted(model)
        reference = h2_closed_form("DC", 10, 1.0, 0.1, 15.0, 15.0, 0.1, 5.0)
        assert result.kind == "finite"
        assert result.value < reference

    def test_idroop_with_zero_k3_agrees_with_gramian(self, ten_bus, idroop_fleet):
        noise = [NoiseGains(k1=0.1, k2=5.0)] * 10
        model = assemble_closed_loop(ten_bus, idroop_fleet, noise)
        assert not model.derivative_noise_present
        weighted = h2_frequency_weighted(model)
        plain = h2_gramian(model)
        assert weighted.value == pytest.approx(plain.value, rel=1e-4)


class TestModal:
    def test_single_bus_single_zero_mode(self):
        net = path_network(1)
        decomposition = modal_decompose(net, uniform_fleet(1, "DC", r_r=15.0))
        assert decomposition.eigenvalues.tolist() == [0.0]

    def test_two_bus_eigenvalues(self):
        net = path_network(2, susceptance=1.0)
        decomposition = modal_decompose(net, uniform_fleet(2, "DC", r_r=15.0))
        assert np.allclose(decomposition.eigenvalues, [0.0, 2.0])

    def test_transform_orthonormal_and_diagonalizing(self, ten_bus, dc_fleet):
        from gridfreq import build_laplacian

        decomposition = modal_decompose(ten_bus, dc_fleet)
        u = decomposition.transform
        assert np.abs(u.T @ u - np.eye(10)).max() < 1e-10
        assert np.allclose(u[:, 0], 1.0 / np.sqrt(10.0))
        recovered = u.T @ build_laplacian(ten_bus) @ u
        assert np.abs(recovered - np.diag(decomposition.eigenvalues)).max() < 1e-9

    def test_mode_sum_equals_full_norm_on_path(self):
        net = path_network(5)
        cfgs = uniform_fleet(5, "DC", r_r=15.0)
        noise = [NoiseGains(k1=0.1, k2=5.0)] * 5
        decomposition = modal_decompose(net, cfgs, noise)
        total = sum(r.value for r in mode_norms(decomposition))
        full = h2_gramian(assemble_closed_loop(net, cfgs, noise)).value
        assert total == pytest.approx(full, rel=1e-8)

    def test_mode_sum_for_idroop_weighted_norm(self):
        net = path_network(5)
        cfgs = uniform_fleet(5, "IDROOP", r_r=15.0, delta=6.0, nu=0.3)
        noise = high_noise(5)
        decomposition = modal_decompose(net, cfgs, noise)
        total = sum(r.value for r in mode_norms(decomposition))
        full = h2_frequency_weighted(assemble_closed_loop(net, cfgs, noise)).value
        assert total == pytest.approx(full, rel=1e-6)

    def test_virtual_inertia_modes_all_infinite(self):
        net = path_network(3)
        cfgs = uniform_fleet(3, "VI", r_r=15.0, m_v=0.15)
        decomposition = modal_decompose(net, cfgs, high_noise(3))
        for result in mode_norms(decomposition):
            assert result.kind == "infinite"
            assert result.feedthrough_gain == pytest.approx(5.0 * 0.15 / 1.15, abs=1e-9)

    def test_heterogeneous_fleet_rejected(self, ten_bus):
        cfgs = uniform_fleet(10, "DC", r_r=15.0)
        cfgs[3] = uniform_fleet(1, "DC", r_r=14.0)[0]
        with pytest.raises(ValidationError, match="heterogeneous"):
            modal_decompose(ten_bus, cfgs)
        net = ten_bus_network()
        mixed = uniform_fleet(10, "DC", r_r=15.0)
        mixed[0] = uniform_fleet(1, "CP")[0]
        with pytest.raises(ValidationError, match="heterogeneous"):
            modal_decompose(net, mixed)


class TestOptimalAllocation:
    def test_zero_imbalance(self):
        allocation = optimal_allocation(0.0, [1.0, 2.0], [3.0])
        assert np.allclose(allocation.delta_q_g, 0.0)
        assert np.allclose(allocation.delta_q_r, 0.0)
        assert allocation.ss_cost == 0.0

    def test_symmetric_split(self):
        allocation = optimal_allocation(1.0, [1.0], [1.0])
        assert allocation.delta_q_g[0] == pytest.approx(0.5)
        assert allocation.delta_q_r[0] == pytest.approx(0.5)
        assert allocation.lambda_star == pytest.approx(0.5)
        assert allocation.ss_cost == pytest.approx(0.25)

    def test_hand_solved_two_participants(self):
        allocation = optimal_allocation(1.0, [1.0, 3.0], [])
        assert np.allclose(allocation.delta_q_g, [0.75, 0.25])
        assert allocation.lambda_star == pytest.approx(0.75)

    def test_equal_marginal_cost_and_balance(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            alpha_g = rng.uniform(0.5, 20.0, size=rng.integers(1, 6))
            alpha_r = rng.uniform(0.5, 20.0, size=rng.integers(0, 4))
            delta_p = float(rng.normal(0.0, 2.0))
            allocation = optimal_allocation(delta_p, alpha_g, alpha_r)
            total = allocation.delta_q_g.sum() + allocation.delta_q_r.sum()
            assert total == pytest.approx(delta_p, abs=1e-10)
            marginal = np.concatenate([alpha_g * allocation.delta_q_g,
                                       alpha_r * allocation.delta_q_r])
            assert np.abs(marginal - allocation.lambda_star).max() < 1e-10

    def test_beats_random_feasible_perturbations(self):
        rng = np.random.default_rng(43)
        alpha_g = np.array([1.0, 2.5, 0.7])
        alpha_r = np.array([3.0, 1.2])
        delta_p = 1.3
        allocation = optimal_allocation(delta_p, alpha_g, alpha_r)

        def cost(dq):
            alpha = np.concatenate([alpha_g, alpha_r])
            return 0.5 * float(alpha @ dq**2)

        best = cost(np.concatenate([allocation.delta_q_g, allocation.delta_q_r]))
        assert best == pytest.approx(allocation.ss_cost)
        for _ in range(1000):
            perturbation = rng.standard_normal(5) * 0.2
            perturbation -= perturbation.mean()  # keep the balance
            candidate = np.concatenate([allocation.delta_q_g, allocation.delta_q_r])
            candidate = candidate + perturbation
            assert cost(candidate) >= best - 1e-12

    def test_empty_participants_rejected(self):
        with pytest.raises(ValidationError):
            optimal_allocation(1.0, [], [])
        with pytest.raises(ValidationError):
            optimal_allocation(1.0, [0.0], [1.0])


class TestSteadyStateOptimality:
    def test_droop_fleet_is_optimal_with_multiplier_omega0(self):
        net = ten_bus_network(injections={9: -0.5})
        cfgs = uniform_fleet(10, "DC", r_r=15.0)
        report = verify_steady_state_optimality(net, cfgs)
        assert report.passed
        assert report.max_gap_g < 1e-9 and report.max_gap_r < 1e-9
        assert report.lambda_star == pytest.approx(report.omega0, abs=1e-9)

    def test_heterogeneous_droops_still_optimal(self):
        net = ten_bus_network(injections={2: 0.4, 5: -0.7})
        rng = np.random.default_rng(3)
        buses = [type(b)(id=b.id, inertia=b.inertia, damping=b.damping,
                         governor_droop=float(rng.uniform(5, 40)), injection=b.injection)
                 for b in net.buses]
        from gridfreq import PowerNetwork

        net = PowerNetwork(buses, net.lines)
        cfgs = [uniform_fleet(1, "DC", r_r=float(rng.uniform(5, 40)))[0] for _ in range(10)]
        report = verify_steady_state_optimality(net, cfgs)
        assert report.passed
        assert report.lambda_star == pytest.approx(report.omega0, abs=1e-9)

    def test_idroop_matches_droop_allocation(self):
        net = ten_bus_network(injections={9: -0.5})
        droop = uniform_fleet(10, "DC", r_r=15.0)
        dyn = uniform_fleet(10, "IDROOP", r_r=15.0, delta=6.0, nu=0.9)
        ss_droop = steady_state(net, droop)
        ss_dyn = steady_state(net, dyn)
        assert np.allclose(ss_droop.delta_q_r_star, ss_dyn.delta_q_r_star, atol=1e-12)
        assert verify_steady_state_optimality(net, dyn).passed

    def test_mismatched_costs_fail(self):
        net = ten_bus_network(injections={9: -0.5})
        cfgs = uniform_fleet(10, "DC", r_r=15.0)
        report = verify_steady_state_optimality(net, cfgs, alpha_r=[10.0] * 10)
        assert not report.passed
        assert report.max_gap_r > 1e-6
