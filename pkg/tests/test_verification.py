import numpy as np
import pytest

from ebinflow import (
    Lattice,
    McReport,
    MetricField,
    NoiseBasis,
    TensorField,
    TimeGrid,
    TimePath,
    action_J,
    convergence_order,
    estimate_drift,
    ibp_martingale_sums,
    integrate_el,
    make_basis_elementary,
    make_basis_traceless_random,
    sample_brownian,
    simulate_metric_sde,
    verify_critical_point,
    verify_ibp,
    verify_inverse_sde,
    verify_volume_ito,
)
from ebinflow.cli import build_variation, perturbed_path

I3 = np.eye(3)
LAT = Lattice(dim=3, points_per_axis=1)
KM = np.array([[0.3, 0.1, 0.0], [0.1, 0.2, 0.05], [0.0, 0.05, 0.25]])
NU = 0.1


def metric(scale=2.0):
    return MetricField.constant(LAT, scale * I3)


def drift_path(grid, mat=KM):
    return TimePath.constant(grid, TensorField.constant(LAT, mat))


class TestMcReport:
    def test_pass_rule_exact(self):
        r = McReport.from_comparison(1.0, 1.0 + 2.9e-3, 1e-3, 100)
        assert r.passed
        r = McReport.from_comparison(1.0, 1.0 + 3.1e-3, 1e-3, 100)
        assert not r.passed

    def test_abs_floor(self):
        # zero SE still tolerates rounding-level disagreement
        r = McReport.from_comparison(1.0, 1.0 + 1e-9, 0.0, 10)
        assert r.passed
        r = McReport.from_comparison(1.0, 1.0 + 1e-7, 0.0, 10)
        assert not r.passed

    def test_as_dict(self):
        d = McReport.from_comparison(1.0, 2.0, 0.5, 7).as_dict()
        assert set(d) == {"lhs", "rhs", "se", "samples", "pass"}


class TestEstimateDrift:
    def test_deterministic_recovers_drift_exactly(self):
        grid = TimeGrid(0.0, 0.5, 16)
        paths = sample_brownian(1, 4, 0, grid)
        ens = simulate_metric_sde(metric(), drift_path(grid), NoiseBasis(()), paths)
        est = estimate_drift(ens, 7)
        assert np.allclose(est.mean.mats[0, 0, 0], KM, atol=1e-13)
        assert np.allclose(est.stderr, 0.0)

    def test_driftless(self):
        grid = TimeGrid(0.0, 0.5, 16)
        basis = make_basis_elementary(LAT).scaled(np.sqrt(NU))
        paths = sample_brownian(21, 4000, 6, grid)
        ens = simulate_metric_sde(
            metric(), TimePath.constant(grid, TensorField.zeros(LAT)), basis, paths
        )
        est = estimate_drift(ens, 8)
        assert np.all(np.abs(est.mean.mats) <= 3.0 * est.stderr + 1e-12)

    def test_constant_drift_within_three_se(self):
        grid = TimeGrid(0.0, 0.5, 16)
        basis = make_basis_elementary(LAT).scaled(np.sqrt(NU))
        paths = sample_brownian(22, 4000, 6, grid)
        ens = simulate_metric_sde(metric(), drift_path(grid), basis, paths)
        est = estimate_drift(ens, 8)
        assert np.all(np.abs(est.mean.mats[0, 0, 0] - KM) <= 3.0 * est.stderr[0, 0, 0])

    def test_too_few_samples(self):
        grid = TimeGrid(0.0, 0.5, 4)
        paths = sample_brownian(1, 1, 0, grid)
        ens = simulate_metric_sde(metric(), drift_path(grid), NoiseBasis(()), paths)
        with pytest.raises(ValueError, match="at least 2"):
            estimate_drift(ens, 0)
        paths = sample_brownian(1, 4, 0, grid)
        ens = simulate_metric_sde(metric(), drift_path(grid), NoiseBasis(()), paths)
        with pytest.raises(ValueError, match="outside"):
            estimate_drift(ens, 4)


class TestVerifyIbp:
    def test_zero_variation_is_trivial(self):
        grid = TimeGrid(0.0, 0.5, 32)
        V = TimePath.constant(grid, TensorField.zeros(LAT))
        paths = sample_brownian(1, 16, 6, grid)
        rep = verify_ibp(metric(), drift_path(grid), V, make_basis_elementary(LAT), NU, paths)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed

    def test_deterministic_identity_to_1e6(self):
        grid = TimeGrid(0.0, 0.5, 512)
        V = build_variation(grid, LAT)
        paths = sample_brownian(1, 100, 0, grid)
        rep = verify_ibp(metric(), drift_path(grid), V, NoiseBasis(()), 0.0, paths)
        assert rep.passed
        assert abs(rep.lhs - rep.rhs) <= 1e-6 * (abs(rep.lhs) + abs(rep.rhs))
        assert rep.standard_error == 0.0
        assert rep.samples == 100

    def test_stochastic_pass_and_seed_stability(self):
        # pass/fail must not flip across seeds (common-random-number discipline)
        grid = TimeGrid(0.0, 0.5, 192)
        V = build_variation(grid, LAT)
        basis = make_basis_elementary(LAT)
        for seed in (1, 2, 3, 4, 5):
            paths = sample_brownian(seed, 2500, 6, grid)
            rep = verify_ibp(metric(), drift_path(grid), V, basis, NU, paths)
            assert rep.passed

    def test_boundary_violation_rejected(self):
        grid = TimeGrid(0.0, 0.5, 8)
        V = TimePath.constant(grid, TensorField.constant(LAT, I3))
        paths = sample_brownian(1, 4, 6, grid)
        with pytest.raises(ValueError, match="endpoint"):
            verify_ibp(metric(), drift_path(grid), V, make_basis_elementary(LAT), NU, paths)

    def test_grid_mismatch_rejected(self):
        grid = TimeGrid(0.0, 0.5, 8)
        other = TimeGrid(0.0, 0.5, 16)
        V = TimePath.constant(other, TensorField.zeros(LAT))
        paths = sample_brownian(1, 4, 6, grid)
        with pytest.raises(ValueError, match="time grid"):
            verify_ibp(metric(), drift_path(grid), V, make_basis_elementary(LAT), NU, paths)

    def test_martingale_terms_vanish_in_expectation(self):
        grid = TimeGrid(0.0, 0.5, 128)
        V = build_variation(grid, LAT)
        paths = sample_brownian(3, 4000, 6, grid)
        sums = ibp_martingale_sums(
            metric(), drift_path(grid), V, make_basis_elementary(LAT), NU, paths
        )
        se = sums.std(ddof=1) / np.sqrt(sums.size)
        assert abs(sums.mean()) <= 3.0 * se


class TestActionJ:
    def test_zero_inputs(self):
        grid = TimeGrid(0.0, 1.0, 16)
        V = TimePath.constant(grid, TensorField.zeros(LAT))
        paths = sample_brownian(1, 8, 0, grid)
        J = action_J(
            MetricField.identity(LAT), drift_path(grid, np.zeros((3, 3))), V, 0.0,
            NoiseBasis(()), 0.0, paths,
        )
        assert J == 0.0

    def test_deterministic_closed_form(self):
        # K = kappa I from the identity: J = 3 kappa (sqrt(1 + T kappa) - 1) vol
        kappa, T = 0.5, 1.0
        grid = TimeGrid(0.0, T, 2000)
        V = build_variation(grid, LAT)
        paths = sample_brownian(1, 10, 0, grid)
        J = action_J(
            MetricField.identity(LAT), drift_path(grid, kappa * I3), V, 0.0,
            NoiseBasis(()), 0.0, paths,
        )
        exact = 3.0 * kappa * (np.sqrt(1.0 + T * kappa) - 1.0) * (2.0 * np.pi) ** 3
        assert J == pytest.approx(exact, rel=1e-7)

    def test_parabola_in_s(self):
        grid = TimeGrid(0.0, 1.0, 500)
        V = build_variation(grid, LAT)
        paths = sample_brownian(1, 10, 0, grid)
        args = (MetricField.identity(LAT), drift_path(grid, 0.5 * I3), V)
        J0 = action_J(*args, 0.0, NoiseBasis(()), 0.0, paths)
        Jp = action_J(*args, 0.1, NoiseBasis(()), 0.0, paths)
        Jm = action_J(*args, -0.1, NoiseBasis(()), 0.0, paths)
        assert Jp - 2.0 * J0 + Jm > 0.0


class TestVerifyCriticalPoint:
    def test_zero_variation_gives_zero_derivative(self):
        grid = TimeGrid(0.0, 0.25, 64)
        V = TimePath.constant(grid, TensorField.zeros(LAT))
        paths = sample_brownian(3, 64, 6, grid)
        rep = verify_critical_point(
            metric(), drift_path(grid), V, make_basis_elementary(LAT), NU, paths, 1e-3
        )
        assert rep.lhs == 0.0 and rep.passed

    def test_el_solution_critical_and_contrast(self):
        grid = TimeGrid(0.0, 0.25, 192)
        g0 = MetricField.constant(LAT, 4.0 * I3)
        basis = make_basis_elementary(LAT)
        _, kpath = integrate_el(g0, TensorField.constant(LAT, KM), basis, NU, grid)
        V = build_variation(grid, LAT)
        paths = sample_brownian(1, 2500, 6, grid)
        rep, details = verify_critical_point(
            g0, kpath, V, basis, NU, paths, 1e-3, return_details=True
        )
        assert rep.passed
        # Richardson step at delta_s/2 agrees within Monte Carlo resolution
        assert abs(rep.lhs - details["richardson"]) <= 3.0 * (
            rep.standard_error + details["richardson_se"]
        ) + 1e-4
        repB = verify_critical_point(g0, perturbed_path(kpath, 0.5), V, basis, NU, paths, 1e-3)
        assert abs(repB.lhs) > 10.0 * abs(rep.lhs)

    def test_delta_validation(self):
        grid = TimeGrid(0.0, 0.25, 8)
        V = TimePath.constant(grid, TensorField.zeros(LAT))
        paths = sample_brownian(1, 4, 6, grid)
        with pytest.raises(ValueError, match="delta_s"):
            verify_critical_point(
                metric(), drift_path(grid), V, make_basis_elementary(LAT), NU, paths, 0.0
            )


class TestVolumeIto:
    def test_stochastic_agreement(self):
        grid = TimeGrid(0.0, 0.5, 192)
        paths = sample_brownian(4, 4000, 6, grid)
        rep = verify_volume_ito(metric(), drift_path(grid), make_basis_elementary(LAT), NU, paths)
        assert rep.passed
        assert rep.lhs == pytest.approx(rep.rhs, rel=0.01)

    def test_deterministic_ode_mode(self):
        grid = TimeGrid(0.0, 0.5, 512)
        paths = sample_brownian(4, 50, 0, grid)
        rep = verify_volume_ito(metric(), drift_path(grid), NoiseBasis(()), 0.0, paths)
        assert rep.passed
        assert rep.samples == 50


class TestInverseSde:
    def test_order_at_least_half_ish(self):
        grid = TimeGrid(0.0, 1.0, 512)
        paths = sample_brownian(6, 256, 6, grid)
        pairs, order = verify_inverse_sde(
            metric(), drift_path(grid), make_basis_elementary(LAT), NU, paths, (8, 4, 2, 1)
        )
        assert order >= 0.4
        dts = [p[0] for p in pairs]
        assert all(a > b for a, b in zip(dts, dts[1:]))

    def test_errors_shrink_with_dt(self):
        grid = TimeGrid(0.0, 1.0, 256)
        paths = sample_brownian(6, 128, 6, grid)
        pairs, _ = verify_inverse_sde(
            metric(), drift_path(grid), make_basis_elementary(LAT), NU, paths, (4, 2, 1)
        )
        assert pairs[0][1] > pairs[-1][1]


class TestConvergenceOrder:
    def test_exact_linear_law(self):
        pts = [(2.0**-k, 2.0**-k) for k in range(3, 8)]
        assert convergence_order(pts) == pytest.approx(1.0, abs=1e-12)

    def test_square_root_law(self):
        pts = [(2.0**-k, 2.0 ** (-k / 2.0)) for k in range(3, 8)]
        assert convergence_order(pts) == pytest.approx(0.5, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError, match="at least 3"):
            convergence_order([(0.1, 1.0), (0.05, 0.5)])
        with pytest.raises(ValueError, match="decreasing"):
            convergence_order([(0.1, 1.0), (0.2, 0.5), (0.05, 0.2)])
        with pytest.raises(ValueError, match="positive"):
            convergence_order([(0.1, 1.0), (0.05, 0.0), (0.025, 0.2)])


class TestDriftRecoveryOfElSolution:
    def test_el_drift_recovered_through_simulation(self):
        grid = TimeGrid(0.0, 0.25, 64)
        g0 = metric()
        basis = make_basis_elementary(LAT)
        _, kpath = integrate_el(g0, TensorField.constant(LAT, KM), basis, NU, grid)
        paths = sample_brownian(17, 4000, 6, grid)
        ens = simulate_metric_sde(g0, kpath, basis.scaled(np.sqrt(NU)), paths)
        for j in (8, 24, 40, 56):
            est = estimate_drift(ens, j)
            gap = np.abs(est.mean.mats - kpath.samples[j].mats)
            assert np.all(gap <= 3.0 * est.stderr + 1e-12)


class TestTracelessBasisIbp:
    def test_passes_with_traceless_noise(self):
        grid = TimeGrid(0.0, 0.5, 192)
        g0 = metric()
        basis = make_basis_traceless_random(g0, seed=11)
        V = build_variation(grid, LAT)
        paths = sample_brownian(8, 2500, basis.size, grid)
        rep = verify_ibp(g0, drift_path(grid), V, basis, NU, paths)
        assert rep.passed
