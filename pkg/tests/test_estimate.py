import json

import numpy as np
import pytest

from ude_oed import design as des
from ude_oed import estimate as est
from ude_oed.errors import IdentifiabilityError, InputError, SamplingError
from ude_oed.models import lotka_hybrid, lotka_mechanistic
from ude_oed.numerics import TimeGrid


@pytest.fixture(scope="module")
def grid12():
    return TimeGrid.uniform(0.0, 12.0, 12)


def make_design(w, grid, budgets):
    return des.SamplingDesign(w=w, grid=grid, budgets=np.asarray(budgets))


class TestDrawMeasurementTimes:
    def test_single_positive_interval_is_forced(self, grid12):
        w = np.zeros((1, 12))
        w[0, 5] = 1.0
        design = make_design(w, grid12, [1.0])
        times = est.draw_measurement_times(design, 1, np.random.default_rng(0))
        mid = 0.5 * (grid12.nodes[5] + grid12.nodes[6])
        assert times[0].tolist() == [mid]

    def test_zero_weight_intervals_never_drawn(self, grid12):
        w = np.zeros((1, 12))
        w[0, [2, 7, 9]] = 1.0
        design = make_design(w, grid12, [3.0])
        allowed = {0.5 * (grid12.nodes[j] + grid12.nodes[j + 1]) for j in (2, 7, 9)}
        for seed in range(200):
            times = est.draw_measurement_times(design, 2, np.random.default_rng(seed))
            assert set(times[0]) <= allowed

    def test_uniform_weights_give_uniform_marginals(self, grid12):
        # inclusion probability of each interval must be count/N
        design = make_design(np.full((1, 12), 1.0 / 3.0), grid12, [4.0])
        counts = np.zeros(12)
        n_rep = 100_000
        rng = np.random.default_rng(42)
        mids = 0.5 * (grid12.nodes[:-1] + grid12.nodes[1:])
        for _ in range(n_rep):
            times = est.draw_measurement_times(design, 3, rng)
            for t in times[0]:
                counts[int(np.argmin(np.abs(mids - t)))] += 1
        marginals = counts / n_rep
        assert np.max(np.abs(marginals - 3.0 / 12.0)) <= 0.01

    def test_count_exceeding_support_raises(self, grid12):
        w = np.zeros((1, 12))
        w[0, 3] = 1.0
        design = make_design(w, grid12, [1.0])
        with pytest.raises(SamplingError):
            est.draw_measurement_times(design, 2, np.random.default_rng(0))


class TestSynthesizeDataset:
    def test_noiseless_values_exact(self, grid12):
        model = lotka_mechanistic()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.array([3.0, 6.0]), np.array([9.0])]
        ds = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.0,
            np.random.default_rng(0),
        )
        sol = est._trajectory_solution(model, model.p_nominal, None, controls, 1e-8)
        for i in range(2):
            for t, v in zip(ds.times[i], ds.values[i]):
                assert v == model.observe(sol.at(float(t)))[i]

    def test_fixed_seed_reproducible(self, grid12):
        model = lotka_mechanistic()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(1, 11, 5)] * 2
        a = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.1,
            np.random.default_rng(7),
        )
        b = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.1,
            np.random.default_rng(7),
        )
        for i in range(2):
            assert np.all(a.values[i] == b.values[i])

    def test_noise_variance_calibrated(self):
        # short horizon keeps the 10^4 re-syntheses cheap
        model = lotka_mechanistic()
        grid = TimeGrid.uniform(0.0, 1.0, 1)
        controls = des.ControlDesign.zero(model, grid)
        times = [np.array([0.5]), np.array([])]
        clean = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.0,
            np.random.default_rng(0),
        ).values[0][0]
        rng = np.random.default_rng(123)
        draws = np.array(
            [
                est.synthesize_dataset(
                    model, model.p_nominal, None, controls, times, 0.1, rng
                ).values[0][0]
                for _ in range(10_000)
            ]
        )
        assert abs(np.var(draws - clean) - 0.01) <= 0.0005


class TestGaussNewton:
    def test_recovers_truth_from_noiseless_data(self, grid12):
        model = lotka_mechanistic()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(0.5, 11.5, 10)] * 2
        ds = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.0,
            np.random.default_rng(0),
        )
        p_init = model.p_nominal.copy()
        p_init[0], p_init[2] = 1.2, 0.8
        p_fit, cov, info = est.gauss_newton(model, ds, None, p_init, controls)
        assert abs(p_fit[0] - 1.0) <= 1e-6
        assert abs(p_fit[2] - 1.0) <= 1e-6
        assert info["converged"]

    def test_truth_start_converges_immediately(self, grid12):
        model = lotka_mechanistic()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(0.5, 11.5, 10)] * 2
        ds = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.0,
            np.random.default_rng(0), tol=1e-11,
        )
        p_fit, cov, info = est.gauss_newton(
            model, ds, None, model.p_nominal, controls, tol=1e-11
        )
        assert info["iterations"] <= 2
        # zero residual up to the trajectory integration error
        assert info["residual_norm"] <= 1e-7

    def test_unidentifiable_parameter_raises(self, grid12):
        # with zero fishing the catchability p2 never influences the data
        model = lotka_mechanistic()
        model.free_p = (1,)
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(0.5, 11.5, 6)] * 2
        ds = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.1,
            np.random.default_rng(1),
        )
        with pytest.raises(IdentifiabilityError):
            est.gauss_newton(model, ds, None, model.p_nominal, controls)


class TestAdamTrain:
    def test_zero_epochs_is_identity(self, lotka_theta, grid12):
        model = lotka_hybrid()
        controls = des.ControlDesign.zero(model, grid12)
        ds = est.Dataset(times=[np.array([6.0])] * 2, values=[np.array([1.0])] * 2, noise_sigma=0.1)
        theta, info = est.adam_train(
            model, ds, model.p_nominal, lotka_theta, est.AdamConfig(epochs=0), controls
        )
        assert np.all(theta == lotka_theta)
        assert info["epochs_run"] == 0

    def test_best_loss_not_exceeding_initial(self, lotka_theta, grid12):
        model = lotka_hybrid()
        mech = model.mechanistic_twin()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(1.0, 11.0, 6)] * 2
        ds = est.synthesize_dataset(
            mech, mech.p_nominal, None, controls, times, 0.1, np.random.default_rng(3)
        )
        theta, info = est.adam_train(
            model, ds, model.p_nominal, lotka_theta,
            est.AdamConfig(step=3e-3, epochs=15), controls,
        )
        assert info["best_loss"] <= info["initial_loss"]
        assert not info["diverged"]

    def test_noiseless_dense_fit_reaches_target(self, lotka_theta, grid12):
        model = lotka_hybrid()
        mech = model.mechanistic_twin()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(0.2, 11.8, 30)] * 2
        ds = est.synthesize_dataset(
            mech, mech.p_nominal, None, controls, times, 0.0, np.random.default_rng(0)
        )
        theta, info = est.adam_train(
            model, ds, model.p_nominal, lotka_theta,
            est.AdamConfig(step=1e-3, epochs=150), controls,
        )
        sol = est._trajectory_solution(model, model.p_nominal, theta, controls, 1e-8)
        mse = np.mean(
            [
                (model.observe(sol.at(float(t)))[i] - y) ** 2
                for i in range(2)
                for t, y in zip(ds.times[i], ds.values[i])
            ]
        )
        assert mse <= 1e-3


class TestAlternatingFit:
    def test_pure_mechanistic_equals_gauss_newton(self, grid12):
        model = lotka_mechanistic()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(0.5, 11.5, 6)] * 2
        ds = est.synthesize_dataset(
            model, model.p_nominal, None, controls, times, 0.1,
            np.random.default_rng(5),
        )
        p_init = model.p_nominal.copy()
        p_init[0], p_init[2] = 1.1, 0.9
        cfg = est.ScenarioConfig(scenario="w0-u0-c", model_id="lotka-mech", replicates=1)
        result = est.alternating_fit(model, ds, p_init, None, controls, cfg)
        p_ref, cov_ref, _ = est.gauss_newton(model, ds, None, p_init, controls)
        assert np.allclose(result.p_hat, p_ref)
        assert np.allclose(result.covariance, cov_ref)
        assert result.theta is None

    def test_weights_only_path(self, lotka_theta, grid12):
        model = lotka_hybrid()  # no free mechanistic parameters
        mech = model.mechanistic_twin()
        controls = des.ControlDesign.zero(model, grid12)
        times = [np.linspace(1.0, 11.0, 6)] * 2
        ds = est.synthesize_dataset(
            mech, mech.p_nominal, None, controls, times, 0.1, np.random.default_rng(6)
        )
        cfg = est.ScenarioConfig(
            scenario="w0-u0-l", model_id="lotka-hybrid", replicates=2,
            adam=est.AdamConfig(step=3e-3, epochs=10), replicate_jitter=0.01,
        )
        result = est.alternating_fit(model, ds, model.p_nominal, lotka_theta, controls, cfg)
        assert result.theta is not None
        assert result.covariance.size == 0 or result.covariance.shape == (0, 0)
        assert len(result.theta_replicates) == 2
        # jittered replicates genuinely differ
        assert not np.array_equal(result.theta_replicates[0], result.theta_replicates[1])

    def test_joint_fit_converges_within_round_limit(self, lotka_theta, grid12):
        model = lotka_hybrid(free_p=(0,))  # uncertain catchability plus weights
        mech = model.mechanistic_twin()
        u_vals = np.zeros((1, 12))
        u_vals[0, :6] = 0.5  # non-zero fishing makes the catchability visible
        controls = des.ControlDesign(u_vals, grid12, ((0.0, 1.0),))
        times = [np.linspace(0.5, 11.5, 8)] * 2
        ds = est.synthesize_dataset(
            mech, mech.p_nominal, None, controls, times, 0.1, np.random.default_rng(7)
        )
        cfg = est.ScenarioConfig(
            scenario="w0-u0-l", model_id="lotka-hybrid", replicates=1,
            adam=est.AdamConfig(step=3e-3, epochs=25),
        )
        p_init = model.p_nominal.copy()
        p_init[0] = 0.55
        result = est.alternating_fit(model, ds, p_init, lotka_theta, controls, cfg)
        assert result.converged
        assert 1 <= len(result.rounds) <= 20
        assert abs(result.p_hat[0] - 0.4) <= 0.15


class TestCovarianceConsistency:
    def test_reported_covariance_matches_monte_carlo(self, grid48):
        """Reported standard deviations track the spread of repeated fits."""
        model = lotka_mechanistic()
        controls = des.ControlDesign.zero(model, grid48)
        base_rng = np.random.default_rng(31)
        times = [np.sort(base_rng.uniform(0.5, 11.5, 3)) for _ in range(2)]
        estimates = []
        reported = []
        for rep in range(200):
            ds = est.synthesize_dataset(
                model, model.p_nominal, None, controls, times, 0.1,
                np.random.default_rng([rep, 7]), tol=1e-7,
            )
            p_fit, cov, _ = est.gauss_newton(
                model, ds, None, model.p_nominal, controls, tol=1e-7
            )
            estimates.append(p_fit[[0, 2]])
            reported.append(np.sqrt(np.diag(cov)))
        mc_std = np.std(np.asarray(estimates), axis=0)
        mean_reported = np.mean(np.asarray(reported), axis=0)
        assert np.all(np.abs(mc_std - mean_reported) <= 0.25 * mean_reported)


class TestScenarioConfig:
    def test_bad_scenario_string_rejected_before_compute(self):
        with pytest.raises(Exception) as err:
            est.ScenarioConfig(scenario="w?-u0-c")
        assert "w?" in str(err.value)

    def test_replicates_validated(self):
        with pytest.raises(InputError):
            est.ScenarioConfig(scenario="w0-u0-c", replicates=0)


class TestRunScenario:
    def test_hybrid_scenario_reports_network_error(self):
        cfg = est.ScenarioConfig(
            scenario="w0-u0-l", model_id="lotka-hybrid", criterion="A",
            n_grid=24, noise_sigma=0.1, seed=42, replicates=1,
            measurements_per_observable=10, mc_samples=3,
            adam=est.AdamConfig(step=3e-3, epochs=5),
        )
        result = est.run_scenario(cfg)
        assert result.error is None
        assert set(result.report["delta"]) == {"[0,2]^2", "[0,4]^2"}
        assert result.report["delta"]["[0,4]^2"] > 0.0
        assert "phi" in result.report

    def test_deterministic_report(self):
        cfg = est.ScenarioConfig(
            scenario="w0-u0-c", model_id="lotka-mech", criterion="A",
            n_grid=24, noise_sigma=0.1, seed=99, replicates=1,
            measurements_per_observable=3, mc_samples=5,
        )
        a = est.run_scenario(cfg)
        b = est.run_scenario(cfg)
        assert a.error is None
        assert json.dumps(a.report, sort_keys=True, default=str) == json.dumps(
            b.report, sort_keys=True, default=str
        )

    def test_stage_error_recorded_not_raised(self):
        # a spectral reduction far beyond the information rank must fail
        # like a measurement, not an exception
        cfg = est.ScenarioConfig(
            scenario="w0-u0-svd40", model_id="lotka-mech", criterion="A",
            n_grid=12, seed=1, replicates=1,
        )
        result = est.run_scenario(cfg)
        assert result.error is not None
        assert "error" in result.report

    def test_stream_seed_stability(self):
        s1 = est.scenario_stream_seed(5, "w0-u0-c")
        s2 = est.scenario_stream_seed(5, "w0-u0-c")
        s3 = est.scenario_stream_seed(5, "w*-u0-c")
        assert s1 == s2 != s3
