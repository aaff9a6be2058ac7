"""
Testing the benchmark settings and study drivers
"""
import os
import unittest

import numpy as np

from listrx.regime import Condition, DecisionList
from listrx.control import RegimeLearner
from listrx.simlab import get_setting, generate, optimal_regime, \
    optimal_actions, true_value, best_constant_value, selection_rates, \
    q_linear, draw_test_covariates, mean_outcome, run_study, list_cutoffs, \
    has_correct_form, consistency_probe, alpha_sensitivity, SimSetting
from listrx.utils import validate_document

SLOW = os.environ.get("LISTRX_SLOW_TESTS") == "1"
QUICK = {"penalty": "none", "l_max": 3, "log_level": "WARNING"}


class TestSettings(unittest.TestCase):
    def test_covariance(self):
        cov = get_setting("I").covariance()
        self.assertEqual(cov.shape, (10, 10))
        self.assertAlmostEqual(cov[0, 0], 4.0)
        self.assertAlmostEqual(cov[0, 1], 0.8)
        self.assertAlmostEqual(cov[3, 1], 0.16)
        self.assertTrue(np.allclose(cov, cov.T))

    def test_default_n(self):
        self.assertEqual(get_setting("I").default_n, 500)
        self.assertEqual(get_setting("V").default_n, 750)
        self.assertEqual(get_setting("II", outcome_kind="bin").default_n,
                         1000)
        self.assertEqual(get_setting("vii", outcome_kind="binary").default_n,
                         1500)

    def test_get_setting(self):
        setting = get_setting("III", p=50, outcome_kind="bin")
        self.assertEqual((setting.id, setting.p, setting.outcome_kind),
                         ("III", 50, "binary"))
        self.assertEqual(len(setting.noise), 48)
        self.assertTrue(get_setting(setting) is setting)
        with self.assertRaises(KeyError):
            get_setting("VIII")
        with self.assertRaises(ValueError):
            get_setting("I", p=5)
        self.assertEqual(set(get_setting("VI").to_dict()["signals"]),
                         {"x1", "x2"})
        self.assertTrue(isinstance(get_setting("IV"), SimSetting))

    def test_optimal_regime(self):
        for sid in ("I", "V"):
            setting = get_setting(sid)
            X = draw_test_covariates(setting, 5000, seed=2)
            rec = optimal_regime(sid).recommend(X)
            self.assertTrue(np.array_equal(rec, optimal_actions(setting, X)))
        with self.assertRaises(ValueError):
            optimal_regime("II")

    def test_mean_outcome(self):
        X = np.zeros((1, 10))
        X[0, 0] = 2.0
        mu = mean_outcome(get_setting("I"), X)
        self.assertTrue(np.allclose(mu, [[4.0, 3.0]]))
        mu = mean_outcome(get_setting("I", outcome_kind="bin"), X)
        self.assertTrue(np.all((mu > 0) & (mu < 1)))


class TestGenerate(unittest.TestCase):
    def test_deterministic(self):
        a = generate("V", n=300, seed=5, stream=2)
        b = generate("V", n=300, seed=5, stream=2)
        c = generate("V", n=300, seed=5, stream=3)
        self.assertTrue(np.array_equal(a.X, b.X))
        self.assertTrue(np.array_equal(a.Y, b.Y))
        self.assertFalse(np.array_equal(a.X, c.X))

    def test_shapes(self):
        data = generate("V")
        self.assertEqual((data.n, data.p, data.m), (750, 10, 3))
        self.assertEqual(data.covariate_names[0], "x1")
        self.assertEqual(data.treatment_labels, ("1", "2", "3"))
        self.assertTrue(np.all(data.arm_counts() > 150))
        binary = generate(get_setting("I", outcome_kind="bin"), n=200)
        self.assertEqual(set(np.unique(binary.Y)), {0.0, 1.0})

    def test_sample_moments(self):
        data = generate("I", n=20000, seed=1)
        cov = np.cov(data.X, rowvar=False)
        self.assertTrue(np.allclose(cov[:3, :3],
                                    get_setting("I").covariance()[:3, :3],
                                    atol=0.15))


class TestMetrics(unittest.TestCase):
    def test_true_value(self):
        setting = get_setting("I")
        X = draw_test_covariates(setting, 20000, seed=4)
        pi = optimal_regime(setting)
        v = true_value(pi, setting, X=X)
        self.assertAlmostEqual(v, true_value(pi.recommend(X), setting, X=X))
        self.assertTrue(v > best_constant_value(setting, X=X))
        everyone = DecisionList((), 1)
        self.assertAlmostEqual(true_value(everyone, setting, X=X),
                               float(np.mean(mean_outcome(setting, X)[:, 1])))
        with self.assertRaises(ValueError):
            true_value(pi, setting, test_n=0)

    def test_selection_rates(self):
        setting = get_setting("I")
        self.assertEqual(selection_rates({0, 5}, setting), (0.5, 0.125))
        self.assertEqual(selection_rates(set(), setting), (0.0, 0.0))
        self.assertEqual(selection_rates(range(10), setting), (1.0, 1.0))

    def test_cutoffs(self):
        pi = optimal_regime("I")
        self.assertEqual(list_cutoffs(pi), {0: [1.0], 1: [-0.6]})
        self.assertTrue(has_correct_form(pi, "I"))
        self.assertTrue(has_correct_form(optimal_regime("V"), "V"))
        one = DecisionList(((Condition.from_form(1, 0, 1.0), 1),), 0)
        self.assertFalse(has_correct_form(one, "I"))
        two = DecisionList(((Condition.from_form(1, 0, 1.0), 1),
                            (Condition.from_form(10, 0, 2.0), 0),
                            (Condition.from_form(10, 1, -0.6), 1)), 0)
        self.assertFalse(has_correct_form(two, "I"))

    def test_q_linear(self):
        setting = get_setting("II")
        data = generate(setting, n=2000, seed=8)
        spec = RegimeLearner(penalty="none", log_level="WARNING"
                             ).outcome_spec()
        outcome, recommend = q_linear(data, spec)
        X = draw_test_covariates(setting, 5000, seed=9)
        agree = np.mean(recommend(X) == optimal_actions(setting, X))
        self.assertTrue(agree > 0.85)
        self.assertEqual(len(outcome.selected_covariates()), 10)


class TestStudies(unittest.TestCase):
    def test_run_study(self):
        metrics = run_study("I", reps=2, estimator="both", n=300,
                            test_n=2000, seed=1, learner_kwargs=QUICK)
        self.assertEqual([m.estimator for m in metrics],
                         ["decision-list", "q-linear"])
        for m in metrics:
            self.assertEqual((m.setting, m.n, m.p, m.reps, m.n_failed),
                             ("I", 300, 10, 2, 0))
            self.assertTrue(m.loss >= -1e-9)
            self.assertAlmostEqual(m.loss, m.optimal_value - m.value)
            self.assertTrue(0 <= m.tpr <= 1 and 0 <= m.fpr <= 1)
            self.assertTrue(0 <= m.pr_best <= 1)
            self.assertTrue(m.corrected_coverage is None)
        doc = {"version": "0", "config": {}, "study": "table",
               "setting": get_setting("I").to_dict(),
               "results": {"metrics": [m.to_dict() for m in metrics]}}
        validate_document(doc, "study")

    def test_run_study_deterministic(self):
        first = run_study("V", reps=2, n=300, test_n=1000, seed=3,
                          learner_kwargs=QUICK)
        second = run_study("V", reps=2, n=300, test_n=1000, seed=3,
                           learner_kwargs=QUICK)
        self.assertEqual(first[0].to_dict(), second[0].to_dict())

    def test_bad_studies(self):
        with self.assertRaises(ValueError):
            run_study("I", reps=0)
        with self.assertRaises(ValueError):
            run_study("I", reps=1, estimator="forest", test_n=10)
        with self.assertRaises(ValueError):
            consistency_probe("II", reps=1, test_n=10)
        with self.assertRaises(ValueError):
            alpha_sensitivity("I", levels=(0.95,), reps=1, test_n=10)

    def test_consistency_probe(self):
        rows = consistency_probe("I", n_values=(400,), reps=2, test_n=2000,
                                 seed=2, learner_kwargs=QUICK)
        self.assertEqual(len(rows), 1)
        row = rows[0]
        self.assertEqual((row["n"], row["reps"]), (400, 2))
        self.assertTrue(row["loss"] >= -1e-9)
        self.assertTrue(0 <= row["correct"] <= 1)
        self.assertTrue("mse1_n" in row and "mse2_n" in row)

    def test_alpha_sensitivity(self):
        out = alpha_sensitivity("I", levels=(0.9, 0.99), reps=2, n=300,
                                test_n=2000, seed=2, learner_kwargs=QUICK)
        agreement = np.array(out["agreement"])
        self.assertEqual(agreement.shape, (2, 2))
        self.assertTrue(np.allclose(np.diag(agreement), 1.0))
        self.assertAlmostEqual(agreement[0, 1], agreement[1, 0])
        self.assertEqual([r["level"] for r in out["per_level"]], [0.9, 0.99])

    @unittest.skipUnless(SLOW, "set LISTRX_SLOW_TESTS=1 to run")
    def test_lists_beat_linear_q_on_list_settings(self):
        metrics = run_study("I", reps=20, estimator="both", test_n=20000,
                            seed=6, learner_kwargs={"log_level": "WARNING"})
        lists, linear = metrics
        self.assertTrue(lists.value > linear.value)
        self.assertTrue(lists.tpr > 0.9)

    @unittest.skipUnless(SLOW, "set LISTRX_SLOW_TESTS=1 to run")
    def test_lists_beat_best_constant(self):
        for setting in ("I", "II", "III", "IV", "V", "VI", "VII"):
            with self.subTest(setting=setting):
                lists = run_study(setting, reps=20, test_n=20000, seed=7,
                                  learner_kwargs={"log_level": "WARNING"})[0]
                best = best_constant_value(setting, test_n=20000, seed=7)
                self.assertTrue(lists.value >= best - 2 * lists.value_se)


if __name__ == "__main__":
    unittest.main()
