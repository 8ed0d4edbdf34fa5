import math

import numpy as np
import pytest

from simplex_market.calibration import (
    SECONDS_PER_YEAR,
    CapTimeSeries,
    WeightTimeSeries,
    calibrate,
    caps_to_weights,
    drift_matrix,
    estimate_drift,
    estimate_gamma,
    read_cap_csv,
    split_drift_matrix,
)
from simplex_market.exceptions import DataIOError, DomainError, RankDeficientError
from simplex_market.model_params import check_simplex_params
from simplex_market.sde_sim import simulate_weights

from .fixtures import caps_csv, path_config, random_admissible_params, rng, vsm


def simulated_series(alpha: float, d: int, T: float, dt: float, seed: int) -> WeightTimeSeries:
    config = path_config(n_paths=1, T=T, dt=dt, seed=seed, n_threads=1)
    bundle = simulate_weights(vsm(alpha, d), np.full(d, 1.0 / d), config)
    return WeightTimeSeries(bundle.times, bundle.weights[0])


@pytest.fixture(scope="module")
def vsm_series_d3() -> WeightTimeSeries:
    return simulated_series(2.0, 3, 40.0, 1e-3, seed=101)


class TestSeries:
    def test_caps_to_weights(self):
        ws = caps_to_weights(CapTimeSeries([0.0, 1.0], [[2.0, 3.0, 5.0], [1.0, 1.0, 2.0]]))
        np.testing.assert_allclose(ws.weights, [[0.2, 0.3, 0.5], [0.25, 0.25, 0.5]])

    def test_scaling_leaves_weights_unchanged(self, rng):
        caps = rng.uniform(1.0, 10.0, size=(20, 4))
        ws = caps_to_weights(CapTimeSeries(np.arange(20.0), caps))
        scaled = caps_to_weights(CapTimeSeries(np.arange(20.0), 10.0 * caps))
        np.testing.assert_allclose(scaled.weights, ws.weights, rtol=1e-14)
        np.testing.assert_allclose(estimate_gamma(scaled).gamma_hat, estimate_gamma(ws).gamma_hat, atol=1e-12)

    @pytest.mark.parametrize(
        "timestamps, caps",
        [
            ([0.0, 1.0], [[1.0], [2.0]]),
            ([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]]),
            ([0.0, 1.0], [[1.0, 2.0], [0.0, 1.0]]),
            ([0.0, 1.0, 2.0], [[1.0, 2.0], [2.0, 1.0]]),
            ([0.0, 1.0], [[1.0, np.nan], [2.0, 1.0]]),
        ],
    )
    def test_invalid_caps(self, timestamps, caps):
        with pytest.raises(DomainError):
            CapTimeSeries(timestamps, caps)

    def test_weights_off_simplex(self):
        with pytest.raises(DomainError):
            WeightTimeSeries([0.0, 1.0], [[0.5, 0.5], [0.5, 0.6]])


class TestGamma:
    def test_two_observations(self):
        estimate = estimate_gamma(WeightTimeSeries([0.0, 1.0], [[0.4, 0.6], [0.5, 0.5]]))
        expected = -math.log(0.5 / 0.4) * math.log(0.5 / 0.6)
        assert estimate.gamma_hat[0, 1] == pytest.approx(expected)
        assert expected == pytest.approx(0.04068, abs=1e-5)
        assert estimate.gamma_hat[0, 0] == 0.0
        assert estimate.span == 1.0

    def test_constant_weights(self):
        estimate = estimate_gamma(WeightTimeSeries(np.arange(5.0), np.tile([0.2, 0.3, 0.5], (5, 1))))
        np.testing.assert_array_equal(estimate.gamma_hat, 0.0)
        assert estimate.n_clipped == 0

    def test_negative_estimates_are_clipped(self):
        # the first two log-weights move together
        ws = WeightTimeSeries([0.0, 1.0], [[0.2, 0.2, 0.6], [0.25, 0.25, 0.5]])
        estimate = estimate_gamma(ws)
        assert estimate.gamma_hat[0, 1] == 0.0
        assert estimate.n_clipped == 1
        np.testing.assert_array_equal(estimate.gamma_hat, estimate.gamma_hat.T)

    def test_boundary_observation(self):
        with pytest.raises(DomainError):
            estimate_gamma(WeightTimeSeries([0.0, 1.0], [[0.5, 0.5], [0.0, 1.0]]))
        with pytest.raises(DomainError):
            estimate_gamma(WeightTimeSeries([0.0], [[0.5, 0.5]]))

    def test_recovers_simulated_gamma(self, vsm_series_d3):
        estimate = estimate_gamma(vsm_series_d3)
        off = ~np.eye(3, dtype=bool)
        np.testing.assert_allclose(estimate.gamma_hat[off], 1.0, rtol=0.05)
        assert np.all(estimate.stderr[off] < 0.05)

    def test_short_series_error_bars(self):
        # five years sampled every 1e-3 leave a sampling error of several percent on each gamma_ij
        estimate = estimate_gamma(simulated_series(2.0, 3, 5.0, 1e-3, seed=107))
        off = ~np.eye(3, dtype=bool)
        assert np.all(estimate.stderr[off] > 0.025)
        assert np.all(np.abs(estimate.gamma_hat[off] - 1.0) < 3 * estimate.stderr[off])


class TestDrift:
    def test_split_is_canonical(self):
        params = vsm(0.5, 3)
        beta, B = split_drift_matrix(drift_matrix(params.beta, params.B))
        np.testing.assert_allclose(beta, params.beta)
        np.testing.assert_allclose(B, params.B, atol=1e-15)

    def test_split_is_idempotent(self, rng):
        for d in (2, 3, 4):
            params = random_admissible_params(rng, d)
            B_hat = drift_matrix(params.beta, params.B)
            beta, B = split_drift_matrix(B_hat)
            np.testing.assert_allclose(drift_matrix(beta, B), B_hat, atol=1e-14)
            np.testing.assert_allclose(split_drift_matrix(drift_matrix(beta, B))[0], beta, atol=1e-14)
            assert check_simplex_params(beta, B, params.gamma).ok

    def test_exact_on_noiseless_data(self, rng):
        for d in (2, 3, 4):
            params = random_admissible_params(rng, d)
            B_hat = drift_matrix(params.beta, params.B)
            dt = 0.01
            mu = [rng.dirichlet(np.full(d, 2.0))]
            for _ in range(60):
                mu.append(mu[-1] + B_hat @ mu[-1] * dt)
            ws = WeightTimeSeries(np.arange(61) * dt, np.array(mu))
            estimate = estimate_drift(ws, params.gamma)
            np.testing.assert_allclose(estimate.drift_matrix, B_hat, atol=1e-8)

    def test_inadmissible_fit_is_projected(self):
        # columns sum to zero but mu_1 is pushed out along mu_2
        B_hat = np.array([[-0.6, -0.2, 0.5], [0.3, 0.2, 0.4], [0.3, 0.0, -0.9]])
        dt = 0.01
        mu = [np.array([0.4, 0.2, 0.4])]
        for _ in range(60):
            mu.append(mu[-1] + B_hat @ mu[-1] * dt)
        ws = WeightTimeSeries(np.arange(61) * dt, np.array(mu))
        estimate = estimate_drift(ws, np.ones((3, 3)) - np.eye(3))
        assert estimate.projected
        off = ~np.eye(3, dtype=bool)
        assert np.all(estimate.drift_matrix[off] >= 0.0)
        np.testing.assert_allclose(estimate.drift_matrix.sum(axis=0), 0.0, atol=1e-12)
        assert check_simplex_params(estimate.beta, estimate.B, np.ones((3, 3)) - np.eye(3)).ok

    def test_rank_deficient(self):
        # a series resting at one point cannot identify the drift
        ws = WeightTimeSeries(np.arange(4.0), np.tile([0.5, 0.5], (4, 1)))
        with pytest.raises(RankDeficientError):
            estimate_drift(ws, np.ones((2, 2)) - np.eye(2))

    def test_twenty_years_error_bars(self):
        # at twenty years the sampling error of beta is comparable to 20 % of its value
        ws = simulated_series(2.0, 2, 20.0, 1e-3, seed=109)
        estimate = estimate_drift(ws, estimate_gamma(ws).gamma_hat)
        assert np.all(estimate.beta_stderr > 0.0)
        assert np.all(np.abs(estimate.beta - 1.5) < np.maximum(0.3, 3 * estimate.beta_stderr))
        assert check_simplex_params(estimate.beta, estimate.B, np.ones((2, 2)) - np.eye(2)).ok

    def test_recovers_simulated_drift(self):
        ws = simulated_series(2.0, 2, 400.0, 4e-3, seed=103)
        estimate = estimate_drift(ws, estimate_gamma(ws).gamma_hat)
        np.testing.assert_allclose(estimate.beta, 1.5, atol=0.3)
        assert check_simplex_params(estimate.beta, estimate.B, np.ones((2, 2)) - np.eye(2)).ok


class TestCalibrate:
    def test_output_is_admissible(self, vsm_series_d3):
        result = calibrate(vsm_series_d3)
        assert check_simplex_params(result.params.beta, result.params.B, result.params.gamma).ok
        sidecar = result.sidecar()
        assert sidecar["span"] == pytest.approx(40.0)
        assert len(sidecar["beta_stderr"]) == 3


class TestReadCsv:
    def test_caps(self, caps_csv):
        ts = read_cap_csv(caps_csv, time_scale=1.0 / 86400.0)
        assert isinstance(ts, CapTimeSeries)
        assert ts.caps.shape == (4, 3)
        np.testing.assert_allclose(np.diff(ts.timestamps), [1.0, 2.0, 1.0])
        np.testing.assert_allclose(ts.caps[1], [101.0, 199.0, 302.0])

    def test_years(self, caps_csv):
        ts = read_cap_csv(caps_csv, time_scale=1.0 / SECONDS_PER_YEAR)
        assert ts.timestamps[1] - ts.timestamps[0] == pytest.approx(1.0 / 365.25)

    def test_weights(self, tmp_path):
        path = tmp_path / "weights.csv"
        path.write_text("time,mu_1,mu_2\n0,0.4,0.6000001\n1,0.5,0.5\n")
        ws = read_cap_csv(path)
        assert isinstance(ws, WeightTimeSeries)
        np.testing.assert_allclose(ws.weights.sum(axis=1), 1.0, atol=1e-14)

    def test_first_path_only(self, tmp_path):
        path = tmp_path / "paths.csv"
        path.write_text("path,step,time,mu_1,mu_2\n0,0,0.0,0.4,0.6\n0,1,1.0,0.5,0.5\n1,0,0.0,0.4,0.6\n1,1,1.0,0.3,0.7\n")
        ws = read_cap_csv(path)
        np.testing.assert_allclose(ws.weights[-1], [0.5, 0.5])

    @pytest.mark.parametrize(
        "content",
        ["t,cap_1,cap_2\n0,1,2\n", "time,cap_1,mu_2\n0,1,0.5\n", "time,value\n0,1\n", ""],
    )
    def test_bad_files(self, tmp_path, content):
        path = tmp_path / "bad.csv"
        path.write_text(content)
        with pytest.raises(DataIOError):
            read_cap_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            read_cap_csv(tmp_path / "missing.csv")
