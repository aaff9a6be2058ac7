"""
Running the bundled examples
"""
import unittest

from listrx.examples.basic import fit_example
from listrx.examples.complex import run


class TestExamples(unittest.TestCase):
    def test_basic(self):
        fit = fit_example(cv_folds=5, log_level="WARNING")
        self.assertEqual(fit.data.treatment_labels, ("T", "C"))
        self.assertTrue(fit.text().splitlines()[-1].startswith(
            ("else", "Everyone")))

    def test_complex(self):
        fit, report, scored = run(n_bootstraps=5)
        self.assertEqual(len(scored), 3)
        self.assertEqual(report.n_bootstraps, 5)
        for label, names in scored:
            self.assertTrue(label in fit.data.treatment_labels)
            self.assertTrue(set(names) <= set(fit.data.covariate_names))


if __name__ == "__main__":
    unittest.main()
