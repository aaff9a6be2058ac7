"""
Testing the clause search and the greedy list search
"""
import os
import unittest

import numpy as np

from listrx.data import Dataset, build_grid, bin_covariates
from listrx.models import PropensitySpec, OutcomeSpec, FittedModels, \
    fit_propensity, fit_outcome
from listrx.regime import Condition
from listrx.search import SearchConfig, best_clause, find_list, \
    complexity_probe, STOP_GATE, STOP_LMAX
from listrx.simlab import generate, true_value, best_constant_value
from listrx.utils import NoAdmissibleClauseError, validate_document, \
    convert_native
from listrx.value import InfluenceRecord

SLOW = os.environ.get("LISTRX_SLOW_TESTS") == "1"


def exhaustive_clause(active, xi, X, grid, min_region):
    """Score every (form, covariates, cutoffs, actions) directly."""
    idx = np.flatnonzero(active)
    Xo, xo = X[idx], xi[idx]
    m, p = xi.shape[1], X.shape[1]
    need = max(1, min_region)
    best = None
    candidates = []
    for j in range(p):
        for t, tau in enumerate(grid.cutoffs[j]):
            for form in (1, 10):
                candidates.append(((form, j, -1, t, -1),
                                   Condition.from_form(form, j, tau)))
    for j in range(p):
        for l in range(j + 1, p):
            for t1, tau1 in enumerate(grid.cutoffs[j]):
                for t2, tau2 in enumerate(grid.cutoffs[l]):
                    for form in range(2, 10):
                        candidates.append((
                            (form, j, l, t1, t2),
                            Condition.from_form(form, j, tau1, l, tau2)))
    for head, cond in candidates:
        mask = cond.holds(Xo)
        if mask.sum() < need or (~mask).sum() < need:
            continue
        s_in, s_out = xo[mask].sum(axis=0), xo[~mask].sum(axis=0)
        for a in range(m):
            for b in range(m):
                score = s_in[a] + s_out[b]
                key = head + (a, b)
                if best is None or score > best[0] or \
                        (score == best[0] and key < best[1]):
                    best = (score, key)
    return best


class TestBestClause(unittest.TestCase):
    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 41))
            p = int(rng.integers(1, 4))
            m = int(rng.integers(2, 4))
            s = int(rng.integers(1, 4))
            X = rng.integers(-3, 4, size=(n, p)).astype(float)
            xi = rng.integers(-5, 6, size=(n, m)).astype(float)
            grid = build_grid(X, s)
            bins = bin_covariates(X, grid)
            active = rng.random(n) < 0.8
            if not active.any():
                active[0] = True
            min_region = int(rng.choice([0, 1, 3]))
            config = SearchConfig(min_region=min_region)
            oracle = exhaustive_clause(active, xi, X, grid, min_region)
            if oracle is None:
                with self.assertRaises(NoAdmissibleClauseError):
                    best_clause(active, xi, bins, grid, config)
                continue
            choice = best_clause(active, xi, bins, grid, config)
            self.assertEqual(choice.score, oracle[0])
            self.assertEqual(choice.key, oracle[1])
            caught = active & choice.condition.holds(X)
            self.assertEqual(choice.n_in, int(caught.sum()))
            self.assertEqual(choice.n_out, int(active.sum() - caught.sum()))
            self.assertEqual(choice.in_sums[choice.action_in] +
                             choice.out_sums[choice.action_out], choice.score)

    def test_simple_split(self):
        X = np.arange(10.0).reshape(-1, 1)
        xi = np.zeros((10, 2))
        xi[:4, 1] = 1.0
        xi[4:, 0] = 1.0
        grid = build_grid(X, [[1.0, 3.0, 5.0]])
        choice = best_clause(np.ones(10, dtype=bool), xi,
                             bin_covariates(X, grid), grid)
        self.assertEqual(choice.condition.form, 1)
        self.assertEqual(choice.condition.atoms[0].threshold, 3.0)
        self.assertEqual((choice.action_in, choice.action_out), (1, 0))
        self.assertEqual(choice.score, 10.0)

    def test_single_open_subject(self):
        X = np.arange(4.0).reshape(-1, 1)
        grid = build_grid(X, 3)
        bins = bin_covariates(X, grid)
        active = np.array([True, False, False, False])
        with self.assertRaises(NoAdmissibleClauseError):
            best_clause(active, np.ones((4, 2)), bins, grid)
        with self.assertRaises(ValueError):
            best_clause(np.zeros(4, dtype=bool), np.ones((4, 2)), bins, grid)

    def test_config(self):
        self.assertAlmostEqual(SearchConfig(alpha=0.05).gate_z, 1.6448536,
                               places=6)
        for bad in ({"l_max": -1}, {"alpha": 0.0}, {"alpha": 1.0},
                    {"min_region": 1.5}):
            with self.assertRaises(ValueError):
                SearchConfig(**bad)


class TestFindList(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.data = generate("I", n=2000, seed=3)
        cls.fits = FittedModels(
            fit_propensity(cls.data, PropensitySpec("sample-proportion")),
            fit_outcome(cls.data))
        cls.record = InfluenceRecord(cls.data, cls.fits)

    def test_constant_list(self):
        pi, trace = find_list(self.data, self.record,
                              config=SearchConfig(l_max=0))
        self.assertEqual(len(pi), 0)
        means = self.record.xi.xi.mean(axis=0)
        self.assertEqual(pi.default, int(np.argmax(means)))
        self.assertEqual(trace.nodes[0]["stop"], STOP_LMAX)
        self.assertAlmostEqual(pi.metadata["value"], means.max())

    def test_strict_gate(self):
        rng = np.random.default_rng(5)
        data = Dataset(rng.standard_normal((300, 3)), np.arange(300) % 2,
                       rng.standard_normal(300))
        fits = FittedModels(
            fit_propensity(data, PropensitySpec("fixed", (0.5, 0.5))),
            fit_outcome(data, OutcomeSpec(kind="null")))
        pi, trace = find_list(data, fits, config=SearchConfig(alpha=1e-12))
        self.assertEqual(len(pi), 0)
        self.assertEqual(trace.nodes[0]["stop"], STOP_GATE)
        cand = trace.nodes[0]["candidate"]
        self.assertTrue(cand["delta"] < cand["threshold"] or
                        cand["delta"] <= 0)

    def test_search(self):
        pi, trace = find_list(self.data, self.record)
        self.assertTrue(len(pi) >= 1)
        values = [f["value"] for f in trace.finals]
        self.assertEqual(pi.metadata["value"], max(values))
        self.assertEqual(trace.finals[trace.chosen]["value"], max(values))
        self.assertEqual(values.index(max(values)), trace.chosen)
        for f in trace.finals:
            rec = f["list"].recommend(self.data.X)
            self.assertAlmostEqual(f["value"], self.record.value(rec))
        for node in trace.nodes:
            if node["stop"] == "expanded":
                cand = node["candidate"]
                self.assertTrue(cand["delta"] >= cand["threshold"])
                self.assertTrue(cand["delta"] > 0)
                self.assertEqual(len(node["children"]), 2)
                kids = [trace.nodes[c]["representation"]
                        for c in node["children"]]
                self.assertListEqual(kids, ["clause", "negated"])
        gain = true_value(pi, "I", test_n=100000, seed=1) - \
            best_constant_value("I", test_n=100000, seed=1)
        self.assertTrue(gain > 0.25)
        doc = convert_native(trace.to_dict(self.data.covariate_names,
                                           self.data.treatment_labels))
        validate_document(doc, "trace")

    def test_representations_agree(self):
        pi, trace = find_list(self.data, self.record,
                              config=SearchConfig(l_max=1))
        recs = [f["list"].recommend(self.data.X) for f in trace.finals]
        if len(trace.finals) == 2:
            self.assertTrue(np.array_equal(recs[0], recs[1]))
            c1 = trace.finals[0]["list"].clauses[0][0]
            c2 = trace.finals[1]["list"].clauses[0][0]
            self.assertEqual(c2.form, 11 - c1.form)

    def test_tiny_problem(self):
        rng = np.random.default_rng(4)
        X = rng.integers(0, 3, size=(30, 3)).astype(float)
        A = np.arange(30) % 2
        Y = (X[:, 0] > 0) * A + rng.standard_normal(30) * 0.1
        data = Dataset(X, A, Y)
        fits = FittedModels(
            fit_propensity(data, PropensitySpec("fixed", (0.5, 0.5))),
            fit_outcome(data, OutcomeSpec(kind="null")))
        grid = build_grid(data, 3)
        pi, trace = find_list(data, fits, grid, config=SearchConfig(l_max=2))
        self.assertTrue(len(pi) <= 2)
        self.assertTrue(trace.nodes[0]["stop"] in ("expanded", STOP_GATE))


class TestComplexity(unittest.TestCase):
    def test_probe_smoke(self):
        report = complexity_probe(n=200, p_values=(2, 4), n_values=(200, 400),
                                  repeats=1)
        self.assertEqual(len(report["p_sweep"]["seconds"]), 2)
        self.assertTrue(np.isfinite(report["n_sweep"]["exponent"]))

    @unittest.skipUnless(SLOW, "set LISTRX_SLOW_TESTS=1 to run")
    def test_scaling(self):
        report = complexity_probe(repeats=5)
        self.assertTrue(1.3 < report["p_sweep"]["exponent"] < 2.7)
        self.assertTrue(0.65 < report["n_sweep"]["exponent"] < 1.35)


if __name__ == "__main__":
    unittest.main()
