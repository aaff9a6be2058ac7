"""
Testing the listrx command line
"""
import io
import os
import json
import shutil
import tempfile
import unittest
from contextlib import redirect_stdout

import numpy as np
import pandas as pd

from listrx import DecisionList, load_csv
from listrx.cli import main, EXIT_OK, EXIT_INVALID, EXIT_IO
from listrx.utils import validate_document

test_dir = os.path.dirname(os.path.abspath(__file__))
example_csv = os.path.join(test_dir, "..", "examples", "data", "example.csv")
DATA = ["--data", example_csv, "--treatment-col", "a", "--outcome-col", "y",
        "--log-level", "WARNING"]
QUICK = ["--propensity", "sample-proportion", "--penalty", "none"]


def run(argv):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(argv)
    return code, out.getvalue()


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def path(self, name):
        return os.path.join(self.tmp, name)

    def fit(self, name="regime.json", extra=()):
        code, _ = run(["fit"] + DATA + QUICK + ["--out", self.path(name),
                                                 "--text", self.path("t")] +
                      list(extra))
        self.assertEqual(code, EXIT_OK)
        with open(self.path(name)) as f:
            return json.load(f)

    def test_usage_errors(self):
        code, _ = run(["fit", "--data", example_csv, "--treatment-col", "a"])
        self.assertEqual(code, EXIT_INVALID)
        code, _ = run(["fit", "--data", example_csv, "--treatment-col", "b",
                       "--outcome-col", "y", "--log-level", "ERROR"])
        self.assertEqual(code, EXIT_INVALID)
        code, _ = run(["fit", "--data", self.path("missing.csv"),
                       "--treatment-col", "a", "--outcome-col", "y",
                       "--log-level", "ERROR"])
        self.assertEqual(code, EXIT_IO)
        code, _ = run(["--version"])
        self.assertEqual(code, EXIT_OK)

    def test_fit(self):
        doc = self.fit(extra=["--trace", self.path("trace.json")])
        validate_document(doc, "fit")
        self.assertEqual(doc["data"]["covariates"], ["x1", "x2", "x3", "x4"])
        self.assertEqual(doc["config"]["penalty"], "none")
        with open(self.path("t")) as f:
            self.assertEqual(f.read().strip(), doc["text"])
        with open(self.path("trace.json")) as f:
            validate_document(json.load(f), "trace")

    def test_constant_regime(self):
        doc = self.fit(extra=["--l-max", "0"])
        self.assertEqual(doc["regime"]["length"], 0)
        self.assertEqual(doc["regime"]["clauses"], [])
        self.assertEqual(doc["cost"], 0.0)

    def test_deterministic(self):
        self.fit("first.json", ["--seed", "1"])
        self.fit("second.json", ["--seed", "1"])
        with open(self.path("first.json"), "rb") as f:
            first = f.read()
        with open(self.path("second.json"), "rb") as f:
            self.assertEqual(first, f.read())

    def test_score(self):
        doc = self.fit()
        code, _ = run(["score", "--data", example_csv, "--regime",
                       self.path("regime.json"), "--out",
                       self.path("scores.csv"), "--log-level", "WARNING"])
        self.assertEqual(code, EXIT_OK)
        scores = pd.read_csv(self.path("scores.csv"), dtype=str,
                             keep_default_na=False)
        data = load_csv(example_csv, "a", "y")
        pi = DecisionList.from_dict(doc["regime"], data.covariate_names,
                                    data.treatment_labels)
        expected = [data.treatment_labels[a] for a in pi.recommend(data.X)]
        self.assertEqual(list(scores["recommendation"]), expected)
        self.assertEqual(len(scores), data.n)

    def test_mincost(self):
        self.fit()
        with open(self.path("costs.txt"), "w") as f:
            f.write("x1,5\nx2,0.5\n")
        code, _ = run(["mincost", "--data", example_csv, "--regime",
                       self.path("regime.json"), "--cost-file",
                       self.path("costs.txt"), "--out",
                       self.path("cheap.json"), "--log-level", "WARNING"])
        self.assertEqual(code, EXIT_OK)
        with open(self.path("cheap.json")) as f:
            doc = json.load(f)
        validate_document(doc["regime"], "regime")
        self.assertTrue(doc["cost"] <= doc["original_cost"] + 1e-12)

    def test_evaluate(self):
        self.fit()
        code, text = run(["evaluate"] + DATA + QUICK +
                         ["--regime", self.path("regime.json")])
        self.assertEqual(code, EXIT_OK)
        doc = json.loads(text)
        self.assertEqual(doc["mode"], "plug-in")
        self.assertEqual(doc["report"]["bias"], 0.0)
        validate_document(doc["report"], "report")

        code, text = run(["evaluate"] + DATA + QUICK +
                         ["--bootstrap", "5", "--out",
                          self.path("report.json")])
        self.assertEqual(code, EXIT_OK)
        with open(self.path("report.json")) as f:
            doc = json.load(f)
        self.assertEqual(doc["mode"], "bootstrap")
        self.assertEqual(len(doc["report"]["replicates"]), 5)
        validate_document(doc["report"], "report")
        lo, hi = doc["report"]["interval"]
        self.assertTrue(lo < hi)
        self.assertTrue(np.isfinite(doc["report"]["corrected"]))

    def test_simulate(self):
        code, _ = run(["simulate", "--setting", "I", "--reps", "2", "--n",
                       "300", "--test-n", "1000", "--estimator", "both",
                       "--out", self.path("study.json"), "--csv",
                       self.path("study.csv"), "--log-level", "WARNING"])
        self.assertEqual(code, EXIT_OK)
        with open(self.path("study.json")) as f:
            doc = json.load(f)
        validate_document(doc, "study")
        self.assertEqual(len(doc["results"]["metrics"]), 2)
        self.assertEqual(len(pd.read_csv(self.path("study.csv"))), 2)


if __name__ == "__main__":
    unittest.main()
