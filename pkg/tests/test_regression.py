import math

import numpy as np
import pytest

from svshrink.exceptions import RankDeficiencyError
from svshrink.matnorm import ModelSpec, replication_rng
from svshrink.priors import Svs, log_prior
from svshrink.regression import (CovariancePairGeneral, RegressionProblem, build_a_star,
                                 koba_superharmonicity_check, orthonormal_design, prior_koba_eval, reduce,
                                 simulate_reduced_rank)

SPEC = ModelSpec(4, 2)


def random_spd(k, rng):
    a = rng.standard_normal((k, k))
    return a @ a.T + 0.5 * np.eye(k)


def sample_points(count, rng):
    return [2.0 * rng.standard_normal((4, 2)) for _ in range(count)]


class TestReduce:
    def test_identity_design(self, rng):
        y = rng.standard_normal((4, 2))
        y1, cov, y2 = reduce(RegressionProblem(np.eye(4), y))
        np.testing.assert_allclose(y1, y, atol=1e-14)
        np.testing.assert_allclose(y2, 0.0, atol=1e-14)

    def test_orthonormal_design(self, rng):
        x = orthonormal_design(12, 4, rng)
        y = rng.standard_normal((12, 2))
        y1, cov, _ = reduce(RegressionProblem(x, y, noise_var=2.5))
        np.testing.assert_allclose(y1, x.T @ y, atol=1e-12)
        np.testing.assert_allclose(cov, 2.5 * np.eye(4), atol=1e-12)

    def test_normal_equations(self, rng):
        x = rng.standard_normal((30, 5))
        y = rng.standard_normal((30, 3)) * 10
        _, _, y2 = reduce(RegressionProblem(x, y))
        assert np.max(np.abs(x.T @ y2)) < 1e-9

    def test_idempotent(self, rng):
        x = rng.standard_normal((15, 4))
        y = rng.standard_normal((15, 2))
        y1, _, y2 = reduce(RegressionProblem(x, y))
        z1, _, z2 = reduce(RegressionProblem(x, x @ y1 + y2))
        np.testing.assert_allclose(z1, y1, atol=1e-9)
        np.testing.assert_allclose(z2, y2, atol=1e-9)

    def test_stacked_responses(self, rng):
        x = rng.standard_normal((10, 4))
        y = rng.standard_normal((3, 10, 2))
        y1, _, _ = reduce(RegressionProblem(x, y))
        for k in range(3):
            np.testing.assert_allclose(y1[k], reduce(RegressionProblem(x, y[k]))[0], atol=1e-12)

    def test_singular_design(self, rng):
        x = rng.standard_normal((10, 3))
        x = np.hstack([x, x[:, :1]])
        with pytest.raises(RankDeficiencyError):
            reduce(RegressionProblem(x, rng.standard_normal((10, 2))))

    def test_requires_p_at_least_q(self, rng):
        with pytest.raises(ValueError):
            RegressionProblem(rng.standard_normal((10, 2)), rng.standard_normal((10, 3)))


class TestCovariancePair:
    def test_validation(self, rng):
        a = random_spd(4, rng)
        with pytest.raises(ValueError):
            CovariancePairGeneral(a + np.triu(np.ones((4, 4)), 1), a)
        with pytest.raises(ValueError):
            CovariancePairGeneral(-a, a)

    def test_from_regression(self, rng):
        x = orthonormal_design(10, 4, rng)
        xf = 2.0 * orthonormal_design(6, 4, rng)
        prob = RegressionProblem(x, rng.standard_normal((10, 2)), 1.5, xf, 2.0)
        pair = CovariancePairGeneral.from_regression(prob)
        np.testing.assert_allclose(pair.obs_cov, 1.5 * np.eye(8), atol=1e-12)
        np.testing.assert_allclose(pair.fut_cov, 0.5 * np.eye(8), atol=1e-12)


class TestAStar:
    @pytest.mark.parametrize("v1,v2", [(1.0, 1.0), (2.0, 3.0), (0.3, 7.0)])
    def test_isotropic(self, v1, v2):
        a = build_a_star(CovariancePairGeneral(v1 * np.eye(8), v2 * np.eye(8)))
        np.testing.assert_allclose(a, v1 / math.sqrt(v1 + v2) * np.eye(8), atol=1e-10)

    def test_limits_of_isotropic_form(self):
        # v1 / sqrt(v1 + v2) tends to sqrt(v1) as v2 -> 0 and to 0 as v2 -> infinity
        a = build_a_star(CovariancePairGeneral(2.0 * np.eye(6), 1e-8 * np.eye(6)))
        np.testing.assert_allclose(a, math.sqrt(2.0) * np.eye(6), atol=1e-7)
        a = build_a_star(CovariancePairGeneral(2.0 * np.eye(6), 1e8 * np.eye(6)))
        np.testing.assert_allclose(a, 0.0, atol=1e-3)

    def test_gram_identity_and_eigen_bound(self, rng):
        for _ in range(10):
            s2, sf = random_spd(8, rng), random_spd(8, rng)
            a = build_a_star(CovariancePairGeneral(s2, sf))
            s1 = np.linalg.inv(np.linalg.inv(s2) + np.linalg.inv(sf))
            np.testing.assert_allclose(a @ a.T, s2 - s1, atol=1e-9 * np.abs(s2).max())
            w, q = np.linalg.eigh(s1)
            h = (q * np.sqrt(w)) @ q.T
            assert np.linalg.eigvalsh(h @ np.linalg.inv(s2) @ h).max() < 1.0

    def test_deterministic(self, rng):
        s2, sf = random_spd(6, rng), random_spd(6, rng)
        pair = CovariancePairGeneral(s2, sf)
        np.testing.assert_array_equal(build_a_star(pair), build_a_star(pair))


class TestPriorKoba:
    def test_identity_transform(self, rng):
        m = rng.standard_normal((4, 2))
        assert prior_koba_eval(np.eye(8), SPEC, m) == pytest.approx(log_prior(Svs, SPEC, m))

    def test_scaled_identity(self, rng):
        m = rng.standard_normal((4, 2))
        c = 2.5
        # det(M^T M / c^2)^{-1/2} = c^{q(p-q-1)} det(M^T M)^{-1/2}
        expect = log_prior(Svs, SPEC, m) + 2 * 1 * math.log(c)
        assert prior_koba_eval(c * np.eye(8), SPEC, m) == pytest.approx(expect)

    def test_origin(self):
        assert prior_koba_eval(np.eye(8), SPEC, np.zeros((4, 2))) == math.inf


class TestKobaCheck:
    def test_passes_for_constructed_transform(self, rng):
        a = build_a_star(CovariancePairGeneral(random_spd(8, rng), random_spd(8, rng)))
        rep = koba_superharmonicity_check(a, SPEC, sample_points(50, rng))
        assert rep.passed and rep.near_zero.all() and rep.laplacians.size + len(rep.excluded) == 50

    def test_regularized_strictly_negative(self, rng):
        a = build_a_star(CovariancePairGeneral(random_spd(8, rng), random_spd(8, rng)))
        rep = koba_superharmonicity_check(a, SPEC, sample_points(20, rng), regularize_k=5)
        assert np.all(rep.laplacians < 0)

    def test_negative_control_fails(self, rng):
        wrong = rng.standard_normal((8, 8))
        rep = koba_superharmonicity_check(np.eye(8), SPEC, sample_points(50, rng), compose_with=wrong)
        assert not rep.passed and rep.violations.any()

    def test_degenerate_point_excluded(self, rng):
        pts = [np.zeros((4, 2)), rng.standard_normal((4, 2))]
        rep = koba_superharmonicity_check(np.eye(8), SPEC, pts)
        assert rep.excluded[0][0] == 0 and rep.laplacians.size == 1


class TestReducedRank:
    def test_svs_beats_mle(self):
        res = simulate_reduced_rank(replications=500, seed=3)
        assert res.flagged == 0
        assert res.mle_risk - res.svs_risk > 3 * res.diff_se
        assert abs(res.mle_risk - 15.0) < 3 * res.mle_se
