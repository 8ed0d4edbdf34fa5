import numpy as np
import pytest

from simplex_market.exceptions import DomainError, HypothesisError, ParameterValidationError
from simplex_market.model_params import (
    TotalCapParams,
    Violation,
    VSMSpec,
    boundary_attained,
    check_simplex_params,
    classify_nupbr_arbitrage,
    driftless,
    excess_growth_lower_bound,
    excess_growth_rate,
    joint_characteristics,
    log_covariances,
    non_attainment_margin,
    prop_main_characteristics,
    prop_main_weight_characteristics,
    sigma_strictly_positive,
    validate_joint_spec,
    validate_prop_main_spec,
    validate_simplex_params,
    vsm_to_params,
    zero_face_drift_indices,
)

from .fixtures import random_joint_spec, random_params, random_simplex_points, rng, vsm, vsm_params

ONES_3 = np.ones((3, 3)) - np.eye(3)


class TestValidation:
    def test_vsm_is_admissible(self):
        params = vsm(0.5, 3)
        assert check_simplex_params(params.beta, params.B, params.gamma).ok

    def test_all_violations_reported(self):
        gamma = np.array([[0.5, 1.0, -1.0], [2.0, 0.0, 1.0], [-1.0, 1.0, 0.0]])
        report = check_simplex_params(np.zeros(3), np.zeros((3, 3)), gamma)
        assert [v.indices for v in report.of_kind(Violation.GAMMA_NONZERO_DIAGONAL)] == [(0, 0)]
        assert [v.indices for v in report.of_kind(Violation.GAMMA_NOT_SYMMETRIC)] == [(0, 1)]
        assert len(report.of_kind(Violation.GAMMA_NEGATIVE_OFF_DIAGONAL)) == 2

    def test_column_sum(self):
        with pytest.raises(ParameterValidationError) as e:
            validate_simplex_params(np.full(3, 0.1), np.zeros((3, 3)), ONES_3)
        assert {v.violation for v in e.value.report.violations} == {Violation.DRIFT_COLUMN_SUM}
        assert e.value.exit_code == 1

    def test_drift_not_inward(self):
        B = np.array([[-1.0, 1.0], [1.0, -1.0]]) * -1.0
        report = check_simplex_params(np.zeros(2), B, np.ones((2, 2)) - np.eye(2))
        assert {v.indices for v in report.of_kind(Violation.DRIFT_NOT_INWARD)} == {(0, 1), (1, 0)}

    @pytest.mark.parametrize(
        "beta, B, gamma",
        [
            (np.zeros(3), np.zeros((2, 2)), ONES_3),
            (np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1))),
            (np.array([np.nan, 0.0, 0.0]), np.zeros((3, 3)), ONES_3),
        ],
    )
    def test_malformed(self, beta, B, gamma):
        report = check_simplex_params(beta, B, gamma)
        assert not report.ok
        assert report.violations[0].violation in (Violation.SHAPE_MISMATCH, Violation.NON_FINITE)

    def test_negative_alpha(self):
        with pytest.raises(ParameterValidationError):
            vsm_to_params(VSMSpec(-0.1, 3))

    def test_joint_negative_kappa(self):
        with pytest.raises(ParameterValidationError) as e:
            validate_joint_spec(vsm(0.0, 2), TotalCapParams(kappa=-1.0))
        assert e.value.report.violations[0].violation == Violation.NEGATIVE_KAPPA

    def test_sigma_strictly_positive(self):
        assert sigma_strictly_positive(TotalCapParams(kappa=1.0, phi=2.0))
        assert not sigma_strictly_positive(TotalCapParams(kappa=0.4, phi=1.0))


class TestClassifier:
    @pytest.mark.parametrize("alpha, d", [(0.0, 2), (0.5, 3), (1.0, 4)])
    def test_vsm_arbitrage(self, alpha, d):
        params = vsm(alpha, d)
        assert classify_nupbr_arbitrage(params)
        assert not any(boundary_attained(params, i) for i in range(d))
        assert zero_face_drift_indices(params) == []

    def test_vsm_margins(self):
        assert non_attainment_margin(vsm(0.5, 3), 0) == pytest.approx(0.5)
        assert non_attainment_margin(vsm(0.0, 2), 1) == pytest.approx(0.0)

    def test_driftless(self):
        params = driftless(vsm(0.5, 3))
        assert not classify_nupbr_arbitrage(params)
        assert zero_face_drift_indices(params) == [0, 1, 2]
        assert all(boundary_attained(params, i) for i in range(3))

    def test_attained_boundary(self):
        params = validate_simplex_params(np.full(3, 0.2), -0.6 * np.eye(3), ONES_3)
        assert not classify_nupbr_arbitrage(params)
        assert non_attainment_margin(params, 0) == pytest.approx(-0.6)

    def test_requires_positive_gamma(self):
        gamma = ONES_3.copy()
        gamma[0, 1] = gamma[1, 0] = 0.0
        with pytest.raises(HypothesisError):
            classify_nupbr_arbitrage(validate_simplex_params(np.zeros(3), np.zeros((3, 3)), gamma))

    def test_face_index(self):
        with pytest.raises(DomainError):
            non_attainment_margin(vsm(0.0, 2), 2)

    def test_excess_growth_bound(self, rng):
        params = vsm(0.5, 3)
        assert excess_growth_lower_bound(params) == pytest.approx(1.0)
        for mu in random_simplex_points(rng, 100, 3):
            assert excess_growth_rate(params, mu) >= excess_growth_lower_bound(params) - 1e-12

    def test_excess_growth_uniform_gamma(self, rng):
        # with gamma = 1 the excess growth rate is (d - 1) / 2 everywhere
        for mu in random_simplex_points(rng, 10, 4):
            assert excess_growth_rate(vsm(0.0, 4), mu) == pytest.approx(1.5)


class TestDiffusion:
    def test_rows_sum_to_zero(self, random_params, rng):
        for params in random_params:
            mus = random_simplex_points(rng, 50, params.d)
            np.testing.assert_allclose(params.diffusion_many(mus).sum(axis=2), 0.0, atol=1e-14)
            np.testing.assert_allclose(params.drift_many(mus).sum(axis=1), 0.0, atol=1e-12)

    def test_psd_and_rank(self, random_params, rng):
        for params in random_params:
            for mu in random_simplex_points(rng, 20, params.d):
                eigenvalues = np.linalg.eigvalsh(params.diffusion(mu))
                assert eigenvalues.min() > -1e-14
                reduced = np.linalg.eigvalsh(params.diffusion(mu)[:-1, :-1])
                assert reduced.min() > 0.0

    def test_gamma_floor(self, random_params, rng):
        for params in random_params:
            gamma_min = params.off_diagonal_gamma().min()
            for mu in random_simplex_points(rng, 20, params.d):
                head = mu[:-1]
                a = np.diag(head) - np.outer(head, head)
                gap = params.diffusion(mu)[:-1, :-1] - gamma_min * a
                assert np.linalg.eigvalsh(gap).min() >= -1e-10


class TestJointCharacteristics:
    def test_consistency(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 6))
            spec = random_joint_spec(rng, d)
            for mu in random_simplex_points(rng, 50, d):
                Sigma = rng.uniform(0.1, 10.0)
                ch = joint_characteristics(spec, mu, Sigma)
                assert ch.b_S.sum() == pytest.approx(ch.b_Sigma, abs=1e-10, rel=1e-10)
                assert ch.c_S.sum() == pytest.approx(ch.c_Sigma, abs=1e-10, rel=1e-10)
                np.testing.assert_allclose(ch.c_Sigma_S, ch.c_S.sum(axis=0), rtol=1e-10, atol=1e-10)
                assert np.all(ch.c_Sigma_mu == 0.0)

    @pytest.mark.parametrize("alpha, d", [(0.0, 2), (0.5, 3), (2.0, 5)])
    def test_vsm_weight_cap_covariance(self, rng, alpha, d):
        spec = vsm_to_params(VSMSpec(alpha, d))
        for mu in random_simplex_points(rng, 20, d):
            Sigma = rng.uniform(0.1, 10.0)
            S = mu * Sigma
            c_mu_S = joint_characteristics(spec, mu, Sigma).c_mu_S
            np.testing.assert_allclose(np.diag(c_mu_S), S * (1.0 - mu), rtol=1e-12)
            off = ~np.eye(d, dtype=bool)
            np.testing.assert_allclose(c_mu_S[off], -np.outer(mu, S)[off], rtol=1e-12)

    def test_nonpositive_sigma(self):
        with pytest.raises(DomainError):
            joint_characteristics(vsm_to_params(VSMSpec(0.0, 2)), [0.5, 0.5], 0.0)

    def test_log_covariances(self):
        spec = vsm_to_params(VSMSpec(0.0, 3))
        mu = np.array([0.2, 0.3, 0.5])
        c = log_covariances(spec, mu, 2.0)
        # correlation structure -gamma_ij + sigma^2 (+ phi / Sigma, here 0)
        assert c[0, 1] == pytest.approx(-1.0 + 1.0)
        assert c[0, 0] == pytest.approx((1.0 - mu[0]) / mu[0] + 1.0)


class TestPropMain:
    def test_black_scholes_reduction(self, rng):
        params = vsm(0.0, 3)
        spec = validate_prop_main_spec(params, 0.5, np.full(3, 0.25))
        joint = spec.to_joint_if_black_scholes()
        for S in rng.uniform(0.5, 2.0, size=(20, 3)):
            b_S, c_S = prop_main_characteristics(spec, S)
            ch = joint_characteristics(joint, S / S.sum(), S.sum())
            np.testing.assert_allclose(b_S, ch.b_S, atol=1e-12)
            np.testing.assert_allclose(c_S, ch.c_S, atol=1e-12)

    def test_not_black_scholes(self):
        spec = validate_prop_main_spec(vsm(0.0, 3), 1.0, [0.1, 0.2, 0.3])
        with pytest.raises(DomainError):
            spec.to_joint_if_black_scholes()

    def test_invalid_cap_covariance(self):
        with pytest.raises(ParameterValidationError) as e:
            validate_prop_main_spec(vsm(0.0, 3), -3.0, np.zeros(3))
        kinds = {v.violation for v in e.value.report.violations}
        assert Violation.CAP_VARIANCE_NEGATIVE in kinds

    def test_weight_characteristics_consistent(self, rng):
        spec = validate_prop_main_spec(vsm(0.5, 3), 1.0, [0.1, 0.2, 0.3])
        for S in rng.uniform(0.5, 2.0, size=(20, 3)):
            ch = prop_main_weight_characteristics(spec, S)
            np.testing.assert_allclose(ch.c_mu_S.sum(axis=1), ch.c_Sigma_mu, atol=1e-12)
            np.testing.assert_allclose(ch.c_mu.sum(axis=1), 0.0, atol=1e-14)
            _, c_S = prop_main_characteristics(spec, S)
            assert c_S.sum() == pytest.approx(ch.c_Sigma, rel=1e-12)
