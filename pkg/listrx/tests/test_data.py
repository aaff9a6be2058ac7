"""
Testing dataset ingestion, cutoff grids and binning
"""
import os
import shutil
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from listrx.data import Dataset, CutoffGrid, load_csv, load_covariates, \
    build_grid, bin_covariates, parse_grid_policy
from listrx.regime import Atom
from listrx.simlab import generate
from listrx.utils import DataValidationError, MissingColumnError, \
    MissingValueError, NonNumericError, UnknownTreatmentError

test_dir = os.path.dirname(os.path.abspath(__file__))

CSV = """x1,x2,a,y
0.5,1.0,T,2.0
1.5,2.0,C,1.0
2.5,3.0,T,0.5
3.5,4.0,C,3.0
"""


class TestDataset(unittest.TestCase):
    def test_validation(self):
        X = np.arange(8.0).reshape(4, 2)
        data = Dataset(X, [0, 1, 0, 1], [1.0, 0.0, 1.0, 1.0], "binary")
        self.assertEqual((data.n, data.p, data.m), (4, 2, 2))
        self.assertEqual(data.covariate_names, ("x1", "x2"))
        self.assertEqual(data.treatment_labels, ("1", "2"))
        self.assertListEqual(data.arm_counts().tolist(), [2, 2])
        with self.assertRaises(ValueError):
            data.X[0, 0] = 1.0
        with self.assertRaises(DataValidationError):
            Dataset(X, [0, 0, 0, 0], [1.0, 0.0, 1.0, 1.0])
        with self.assertRaises(DataValidationError):
            Dataset(X, [0, 1, 0, 1], [1.0, 0.5, 1.0, 1.0], "binary")
        with self.assertRaises(DataValidationError):
            Dataset(X, [0, 1, 0], [1.0, 0.0, 1.0])
        with self.assertRaises(DataValidationError):
            Dataset(X, [0, 2, 0, 2], [1.0, 0.0, 1.0, 1.0],
                    treatment_labels=("a", "b", "c"))
        with self.assertRaises(ValueError):
            Dataset(X, [0, 1, 0, 1], [1.0, 0.0, 1.0, 1.0], "count")

    def test_subset(self):
        X = np.arange(8.0).reshape(4, 2)
        data = Dataset(X, [0, 1, 0, 1], [1.0, 2.0, 3.0, 4.0],
                       treatment_labels=("C", "T"))
        sub = data.subset([0, 1])
        self.assertEqual(sub.n, 2)
        self.assertEqual(sub.treatment_labels, ("C", "T"))
        self.assertEqual(data.covariate_index("x2"), 1)
        with self.assertRaises(MissingColumnError):
            data.covariate_index("x9")


class TestLoadCsv(unittest.TestCase):
    def setUp(self):
        self.dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.dir)

    def write(self, text):
        path = os.path.join(self.dir, "data.csv")
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_load(self):
        data = load_csv(self.write(CSV), "a", "y")
        self.assertEqual(data.covariate_names, ("x1", "x2"))
        self.assertEqual(data.treatment_labels, ("T", "C"))
        self.assertListEqual(data.A.tolist(), [0, 1, 0, 1])
        self.assertTrue(np.allclose(data.Y, [2.0, 1.0, 0.5, 3.0]))
        fixed = load_csv(self.write(CSV), "a", "y", covariates=["x2"],
                         treatment_labels=["C", "T"])
        self.assertListEqual(fixed.A.tolist(), [1, 0, 1, 0])
        self.assertEqual(fixed.p, 1)

    def test_errors(self):
        with self.assertRaises(MissingColumnError):
            load_csv(self.write(CSV), "a", "outcome")
        with self.assertRaises(MissingColumnError):
            load_csv(self.write(CSV), "a", None)
        with self.assertRaises(UnknownTreatmentError):
            load_csv(self.write(CSV), "a", "y", treatment_labels=["T", "D"])
        with self.assertRaises(MissingValueError) as ctx:
            load_csv(self.write(CSV.replace("2.5,3.0", "2.5,")), "a", "y")
        self.assertEqual((ctx.exception.row, ctx.exception.col), (2, "x2"))
        with self.assertRaises(NonNumericError):
            load_csv(self.write(CSV.replace("3.5", "abc")), "a", "y")
        with self.assertRaises(DataValidationError):
            load_csv(self.write(CSV.replace(",C,", ",T,")), "a", "y")

    def test_load_covariates(self):
        X, frame = load_covariates(self.write(CSV), ["x2", "x1"])
        self.assertTrue(np.allclose(X[0], [1.0, 0.5]))
        self.assertEqual(len(frame), 4)

    def test_example_file(self):
        path = os.path.join(test_dir, "..", "examples", "data", "example.csv")
        data = load_csv(path, "a", "y")
        self.assertEqual((data.n, data.p, data.m), (200, 4, 2))
        self.assertEqual(sorted(data.treatment_labels), ["C", "T"])


class TestGrid(unittest.TestCase):
    def test_percentiles(self):
        X = np.arange(1.0, 11.0).reshape(-1, 1)
        grid = build_grid(X, "percentiles:9")
        expected = [1.9, 2.8, 3.7, 4.6, 5.5, 6.4, 7.3, 8.2, 9.1]
        self.assertTrue(np.allclose(grid.cutoffs[0], expected))
        self.assertListEqual(grid.sizes.tolist(), [9])
        self.assertTrue(np.allclose(build_grid(X, 9).cutoffs[0], expected))

    def test_deciles_of_large_sample(self):
        data = generate("I", n=100000, seed=0)
        grid = build_grid(data, "percentiles:9")
        theory = 2.0 * norm.ppf(np.arange(1, 10) / 10.0)
        self.assertTrue(np.all(np.abs(grid.cutoffs[0] - theory) < 0.05))

    def test_constant_covariate(self):
        X = np.column_stack([np.ones(20), np.arange(20.0)])
        grid = build_grid(X, "percentiles:4")
        self.assertListEqual(grid.cutoffs[0].tolist(), [1.0])
        self.assertTrue(any("constant" in w for w in grid.warnings))
        self.assertEqual(grid.cutoffs[1].size, 4)

    def test_explicit_and_file(self):
        X = np.column_stack([np.arange(10.0), np.arange(10.0)])
        grid = build_grid(X, [[2.0, 5.0, 50.0], [1.0]])
        self.assertListEqual(grid.cutoffs[0].tolist(), [2.0, 5.0])
        self.assertTrue(any("outside" in w for w in grid.warnings))
        tmp = tempfile.mkdtemp()
        try:
            path = os.path.join(tmp, "cutoffs.txt")
            with open(path, "w") as f:
                f.write("3.0,1.0\n\n4.5\n")
            grid = build_grid(X, "file:" + path)
            self.assertListEqual(grid.cutoffs[0].tolist(), [1.0, 3.0])
            self.assertEqual(grid.policy, "file:" + path)
            with self.assertRaises(DataValidationError):
                build_grid(np.arange(10.0).reshape(-1, 1), "file:" + path)
        finally:
            shutil.rmtree(tmp)

    def test_parse_policy(self):
        self.assertEqual(parse_grid_policy("percentiles:4"),
                         ("percentiles", 4))
        self.assertEqual(parse_grid_policy("file:a.txt"), ("file", "a.txt"))
        for bad in ("percentiles:0", "percentiles:x", "deciles", "file:"):
            with self.assertRaises(ValueError):
                parse_grid_policy(bad)
        with self.assertRaises(DataValidationError):
            CutoffGrid(([],))

    def test_bins(self):
        grid = CutoffGrid(([1.0, 2.0],))
        X = np.array([0.5, 1.0, 1.5, 2.0, 3.0]).reshape(-1, 1)
        bins = bin_covariates(X, grid)
        self.assertListEqual(bins.codes[:, 0].tolist(), [0, 0, 1, 1, 2])
        self.assertEqual((bins.n, bins.p), (5, 1))
        with self.assertRaises(ValueError):
            bin_covariates(np.ones((3, 2)), grid)

    @settings(max_examples=50, derandomize=True, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=3, max_size=40),
           st.integers(1, 6))
    def test_bins_agree_with_atoms(self, values, k):
        X = np.array(values, dtype=float).reshape(-1, 1) / 4.0
        grid = build_grid(X, k)
        codes = bin_covariates(X, grid).codes[:, 0]
        for t, tau in enumerate(grid.cutoffs[0]):
            atom = Atom(0, tau)
            self.assertTrue(np.array_equal(atom.holds(X), codes <= t))


if __name__ == "__main__":
    unittest.main()
