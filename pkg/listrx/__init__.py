"""
listrx estimates interpretable treatment regimes written as decision lists.

A regime is fit from observational or randomized data with a doubly robust
value estimator and a greedy, variance-gated list search, then rewritten into a
cheapest-to-apply equivalent list. Bootstrap bias correction gives prediction
intervals for the value of the fitted regime, and the simulation lab replays
the benchmark settings used to study the method.
"""
__author__ = "The listrx developers"
__version__ = "0.1.0"

from listrx.data import Dataset, CutoffGrid, load_csv, build_grid, \
    bin_covariates
from listrx.regime import Atom, Condition, DecisionList, CostModel
from listrx.control import RegimeLearner
