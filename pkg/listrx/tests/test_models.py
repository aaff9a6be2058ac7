"""
Testing the propensity and outcome nuisance models
"""
import json
import unittest
from dataclasses import replace

import numpy as np
from scipy.special import expit, softmax
from hypothesis import given, settings, strategies as st

from listrx.data import Dataset
from listrx.models import PropensitySpec, OutcomeSpec, fit_propensity, \
    fit_outcome, lasso_cd, lambda_grid, soft_threshold, score_contributions, \
    feature_map, subject_weights
from listrx.utils import RankDeficiencyError, OutcomeFitError


def make_data(n=200, m=2, seed=0, kind="continuous", p=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    A = rng.permutation(np.arange(n) % m)
    if kind == "binary":
        Y = (rng.uniform(size=n) < expit(0.5 * X[:, 0] - 0.5 * A))
        Y = Y.astype(float)
    else:
        Y = 1.0 + X[:, 0] + A * X[:, 1] + rng.standard_normal(n)
    return Dataset(X, A, Y, kind)


def mean_score(fit, data, params):
    scores, _ = score_contributions(fit, data, params=params)
    return scores.mean(axis=0)


def numerical_hessian(fit, data, params, h=1e-5):
    d = params.size
    H = np.zeros((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        H[:, k] = -(mean_score(fit, data, params + e) -
                    mean_score(fit, data, params - e)) / (2 * h)
    return H


class TestPropensity(unittest.TestCase):
    def test_sample_proportion(self):
        rng = np.random.default_rng(1)
        A = np.array([0] * 300 + [1] * 200)
        data = Dataset(rng.standard_normal((500, 2)), A, rng.random(500))
        fit = fit_propensity(data, PropensitySpec("sample-proportion"))
        self.assertAlmostEqual(fit.gamma[0, 0], np.log(300 / 200.0),
                               places=6)
        probs = fit.predict(data.X[:5])
        self.assertTrue(np.allclose(probs, [[0.6, 0.4]] * 5))
        self.assertAlmostEqual(fit.neg_hessian[0, 0], 0.24, places=6)
        balanced = Dataset(data.X, np.arange(500) % 2, data.Y)
        fit = fit_propensity(balanced, PropensitySpec("sample-proportion"))
        self.assertTrue(np.allclose(fit.predict(balanced.X), 0.5))

    def test_generate_and_refit(self):
        rng = np.random.default_rng(7)
        n = 2000
        X = rng.standard_normal((n, 2))
        gamma = np.array([[0.5, 1.0, -0.5], [-0.3, 0.2, 0.8]])
        eta = np.hstack([feature_map(X, "linear") @ gamma.T,
                         np.zeros((n, 1))])
        probs = softmax(eta, axis=1)
        A = (rng.random(n)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        data = Dataset(X, A, np.zeros(n))
        fit = fit_propensity(data)
        se = np.sqrt(np.diag(np.linalg.inv(fit.neg_hessian)) / n)
        self.assertTrue(np.all(np.abs(fit.gamma.ravel() - gamma.ravel())
                               < 4 * se))
        self.assertTrue(np.max(np.abs(mean_score(fit, data, None))) <= 1e-6)

    def test_probabilities(self):
        data = make_data(m=3, seed=2)
        fit = fit_propensity(data)
        X = np.random.default_rng(3).standard_normal((1000, 3)) * 3
        probs = fit.predict(X, clip=False)
        self.assertTrue(np.allclose(probs.sum(axis=1), 1.0))
        self.assertTrue(np.all(fit.predict(X) >= 1e-3))
        self.assertEqual(fit.to_dict()["reference_arm"], 2)
        json.dumps(fit.to_dict())

    def test_hessian_matches_finite_differences(self):
        data = make_data(m=3, seed=4)
        fit = fit_propensity(data)
        params = fit.gamma.ravel()
        H = numerical_hessian(fit, data, params)
        self.assertTrue(np.allclose(H, fit.neg_hessian, rtol=1e-4,
                                    atol=1e-8))

    def test_clipped_derivative(self):
        data = make_data(m=2, seed=5)
        fit = fit_propensity(data)
        steep = replace(fit, gamma=np.full_like(fit.gamma, 5.0))
        X = np.array([[0.0, 0.0, 0.0], [3.0, 3.0, 3.0], [-3.0, 0.0, 0.0]])
        low = steep.predict(X, clip=False) < 1e-3
        self.assertTrue(low.any() and not low.all())
        raw, flat = steep.dprob(X), steep.dprob(X, clip=True)
        self.assertTrue(np.all(flat[low] == 0.0))
        self.assertTrue(np.array_equal(flat[~low], raw[~low]))
        self.assertTrue(np.any(raw[low] != 0.0))


    def test_fixed(self):
        data = make_data(m=2)
        fit = fit_propensity(data, PropensitySpec("fixed", (0.3, 0.7)))
        self.assertTrue(np.allclose(fit.predict(data.X), [0.3, 0.7]))
        self.assertEqual(fit.dprob(data.X).shape, (data.n, 2, 0))
        scores, H = fit.score_contributions(data)
        self.assertEqual((scores.shape, H.shape), ((data.n, 0), (0, 0)))
        with self.assertRaises(ValueError):
            fit_propensity(data, PropensitySpec("fixed", (0.3, 0.3)))
        with self.assertRaises(ValueError):
            PropensitySpec("fixed")
        with self.assertRaises(ValueError):
            PropensitySpec("probit")

    def test_rank_deficient(self):
        data = make_data()
        X = np.column_stack([data.X[:, 0], data.X[:, 0]])
        with self.assertRaises(RankDeficiencyError):
            fit_propensity(Dataset(X, data.A, data.Y))

    def test_weights(self):
        with self.assertRaises(ValueError):
            subject_weights([1.0, -1.0], 2)
        self.assertListEqual(subject_weights(None, 3).tolist(),
                             [1.0, 1.0, 1.0])


class TestOutcome(unittest.TestCase):
    def test_intercept_only(self):
        data = make_data(m=2)
        fit = fit_outcome(data, OutcomeSpec(features="intercept"))
        for a in range(2):
            self.assertAlmostEqual(fit.beta[a, 0],
                                   data.Y[data.A == a].mean(), places=8)

    def test_identity_glm(self):
        data = make_data(m=3, seed=5)
        fit = fit_outcome(data)
        Z = feature_map(data.X, "linear")
        for a in range(3):
            rows = data.A == a
            ols = np.linalg.lstsq(Z[rows], data.Y[rows], rcond=None)[0]
            self.assertTrue(np.allclose(fit.beta[a], ols, atol=1e-8))
        H = fit.neg_hessian
        r = fit.r
        for a in range(3):
            for b in range(3):
                if a != b:
                    self.assertTrue(np.all(H[a * r:(a + 1) * r,
                                             b * r:(b + 1) * r] == 0))
        self.assertTrue(np.max(np.abs(mean_score(fit, data, None))) <= 1e-6)

    def test_logistic_glm(self):
        data = make_data(n=400, m=2, seed=6, kind="binary")
        fit = fit_outcome(data)
        self.assertEqual(fit.link, "logit")
        for trace in fit.loglik_trace:
            self.assertTrue(np.all(np.diff(trace) >= -1e-12))
        self.assertTrue(np.max(np.abs(mean_score(fit, data, None))) <= 1e-6)
        H = numerical_hessian(fit, data, fit.beta.ravel())
        self.assertTrue(np.allclose(H, fit.neg_hessian, rtol=1e-4,
                                    atol=1e-8))
        mu = fit.predict(data.X)
        self.assertTrue(np.all((mu > 0) & (mu < 1)))

    def test_weights_duplicate_rows(self):
        data = make_data(m=2, seed=8)
        w = np.ones(data.n)
        w[0] = 2.0
        rows = np.concatenate([[0], np.arange(data.n)])
        weighted = fit_outcome(data, weights=w)
        duplicated = fit_outcome(data.subset(rows))
        self.assertTrue(np.allclose(weighted.beta, duplicated.beta,
                                    atol=1e-8))

    def test_null_model(self):
        data = make_data()
        fit = fit_outcome(data, OutcomeSpec(kind="null"))
        self.assertEqual(fit.n_params, 0)
        self.assertTrue(np.all(fit.predict(data.X) == 0))
        self.assertEqual(fit.selected_covariates(), frozenset())

    def test_spec_validation(self):
        with self.assertRaises(ValueError):
            OutcomeSpec(penalty="ridge")
        with self.assertRaises(ValueError):
            OutcomeSpec(penalty="lasso", features="intercept")
        with self.assertRaises(ValueError):
            OutcomeSpec(link="probit")
        with self.assertRaises(ValueError):
            OutcomeSpec(link="logit").resolve_link("continuous")

    def test_rank_deficient_arm(self):
        X = np.arange(12.0).reshape(6, 2)
        data = Dataset(X, [0, 0, 0, 0, 0, 1], np.arange(6.0))
        with self.assertRaises(RankDeficiencyError):
            fit_outcome(data)


class TestLasso(unittest.TestCase):
    def test_soft_threshold(self):
        self.assertEqual(soft_threshold(3.0, 1.0), 2.0)
        self.assertEqual(soft_threshold(-3.0, 1.0), -2.0)
        self.assertEqual(soft_threshold(0.5, 1.0), 0.0)

    def test_kkt(self):
        rng = np.random.default_rng(9)
        n = 40
        D = np.column_stack([np.ones(n), rng.standard_normal((n, 3))])
        y = D @ np.array([1.0, 2.0, 0.0, -0.1]) + rng.standard_normal(n)
        G, c = D.T @ D / n, D.T @ y / n
        penalized = np.array([False, True, True, True])
        lam = 0.2
        b, _ = lasso_cd(G, c, lam, penalized)
        g = c - G @ b
        self.assertTrue(abs(g[0]) <= 1e-6)
        for j in range(1, 4):
            if b[j] != 0:
                self.assertTrue(abs(g[j] - lam * np.sign(b[j])) <= 1e-6)
            else:
                self.assertTrue(abs(g[j]) <= lam + 1e-6)

    @settings(max_examples=40, derandomize=True, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2,
                    max_size=12), st.data())
    def test_orthogonal_path_grows(self, c, data):
        # with a diagonal Gram the solution is a coordinatewise soft threshold
        d = len(c)
        diag = np.array(data.draw(st.lists(st.floats(0.5, 4), min_size=d,
                                           max_size=d)))
        G, c = np.diag(diag), np.array(c)
        penalized = np.ones(d, dtype=bool)
        penalized[0] = False
        grid = lambda_grid(float(np.abs(c).max()) + 1.0, 30, 1e-3)
        beta, counts = None, []
        for lam in grid:
            beta, _ = lasso_cd(G, c, lam, penalized, beta0=beta)
            shrunk = np.sign(c) * np.maximum(np.abs(c) - lam * penalized, 0)
            self.assertTrue(np.allclose(beta, shrunk / diag, atol=1e-9))
            counts.append(int(np.count_nonzero(beta[penalized])))
        self.assertEqual(counts[0], 0)
        self.assertTrue(all(b >= a for a, b in zip(counts, counts[1:])))


    def test_lambda_grid(self):
        grid = lambda_grid(2.0, 50, 1e-3)
        self.assertEqual(grid.size, 50)
        self.assertAlmostEqual(grid[0], 2.0)
        self.assertAlmostEqual(grid[-1], 2e-3)
        self.assertTrue(np.all(np.diff(grid) < 0))
        with self.assertRaises(OutcomeFitError):
            lambda_grid(1.0, 0)

    def test_full_shrinkage(self):
        data = make_data(m=2, seed=10)
        fit = fit_outcome(data, OutcomeSpec(penalty="lasso"), lam=1e6)
        self.assertTrue(np.all(fit.beta[:, 1:] == 0))
        for a in range(2):
            self.assertAlmostEqual(fit.beta[a, 0],
                                   data.Y[data.A == a].mean(), places=8)
        self.assertEqual(fit.selected_covariates(), frozenset())

    def test_unpenalized_limit(self):
        data = make_data(m=2, seed=11)
        lasso = fit_outcome(data, OutcomeSpec(penalty="lasso"), lam=0.0)
        glm = fit_outcome(data)
        self.assertTrue(np.allclose(lasso.beta, glm.beta, atol=1e-5))

    def test_cross_validation(self):
        data = make_data(n=300, m=2, seed=12)
        spec = OutcomeSpec(penalty="lasso", cv_folds=5, seed=3)
        fit = fit_outcome(data, spec)
        self.assertEqual(len(fit.lambdas), 50)
        self.assertEqual(len(fit.cv_errors), 50)
        self.assertTrue(fit.selected_lambda in fit.lambdas)
        self.assertEqual(fit.selected_lambda,
                         fit.lambdas[int(np.argmin(fit.cv_errors))])
        self.assertEqual(len(fit.path_nonzero), 50)
        self.assertTrue(fit.path_nonzero[0] <= 1)
        # three main effects plus three arm-1 interactions are penalized
        self.assertTrue(max(fit.path_nonzero) <= 6)
        # x1 drives the outcome in both arms
        self.assertTrue(0 in fit.selected_covariates())
        again = fit_outcome(data, spec)
        self.assertEqual(again.selected_lambda, fit.selected_lambda)
        reused = fit_outcome(data, spec, lam=fit.selected_lambda)
        self.assertTrue(np.allclose(reused.beta, fit.beta, rtol=0,
                                    atol=1e-12))
        self.assertEqual(fit.to_dict()["lambda"], fit.selected_lambda)

    def test_logistic_lasso(self):
        data = make_data(n=300, m=2, seed=13, kind="binary")
        spec = OutcomeSpec(penalty="lasso", cv_folds=5)
        fit = fit_outcome(data, spec)
        mu = fit.predict(data.X)
        self.assertTrue(np.all((mu > 0) & (mu < 1)))
        self.assertTrue(fit.selected_lambda > 0)

    def test_explicit_lambdas(self):
        data = make_data(m=2, seed=14)
        spec = OutcomeSpec(penalty="lasso", lambdas=(0.01, 0.1), cv_folds=3)
        fit = fit_outcome(data, spec)
        self.assertEqual(fit.lambdas, (0.1, 0.01))
        with self.assertRaises(OutcomeFitError):
            fit_outcome(data, OutcomeSpec(penalty="lasso", lambdas=()))


if __name__ == "__main__":
    unittest.main()
