"""
Minimal-cost rewriting of a decision list.

A fitted list can often be reordered or re-expressed so that fewer covariates
are measured on average while every sample subject keeps its recommendation.
The rewrite searches lists built from the atoms of the fitted list by depth
first branch-and-bound on the empirical cost.
"""
from dataclasses import dataclass

import numpy as np

from listrx.regime import Atom, Condition, DecisionList, CostModel, LE, \
    empirical_cost
from listrx.utils import get_logger

__author__ = "The listrx developers"

logger = get_logger("listrx.costmin")

TIE_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class AtomPool:
    """
    The distinct atoms x_j <= tau of a list and every legal condition over at
    most two of them: both senses of each atom, and the eight two-atom forms
    for each pair of atoms on different covariates.

    Args:
        atoms (tuple): "<=" atoms sorted by (covariate, threshold).
        conditions (tuple): The candidate conditions.
        masks (np.ndarray): n_conditions x n, which subjects satisfy each.
    """
    atoms: tuple
    conditions: tuple
    masks: np.ndarray

    @classmethod
    def from_list(cls, pi, X):
        """
        Build the pool of a list.

        Args:
            pi (DecisionList): The list whose atoms seed the pool.
            X (np.ndarray): n x p covariates the masks are evaluated on.

        Returns:
            (AtomPool)
        """
        atoms = sorted({Atom(a.j, a.threshold, LE)
                        for c, _ in pi.clauses for a in c.atoms})
        conditions, seen = [], set()

        def add(cond):
            key = (cond.form, tuple((a.j, a.threshold) for a in cond.atoms))
            if key not in seen:
                seen.add(key)
                conditions.append(cond)

        for atom in atoms:
            add(Condition.from_form(1, atom.j, atom.threshold))
            add(Condition.from_form(10, atom.j, atom.threshold))
        for u, first in enumerate(atoms):
            for second in atoms[u + 1:]:
                if first.j == second.j:
                    continue
                lo, hi = sorted((first, second), key=lambda a: a.j)
                for form in range(2, 10):
                    add(Condition.from_form(form, lo.j, lo.threshold, hi.j,
                                            hi.threshold))
        X = np.asarray(X, dtype=float)
        masks = np.array([c.holds(X) for c in conditions], dtype=bool) \
            .reshape(len(conditions), X.shape[0])
        return cls(tuple(atoms), tuple(conditions), masks)


class _Search(object):
    """One depth-first pass over the pool lists."""

    def __init__(self, pool, target, costs, l_max, n):
        self.pool, self.target, self.costs = pool, target, costs
        self.l_max, self.n = l_max, n
        self.visited = 0
        self.incumbents = []
        self.best_cost = np.inf
        self.best = None
        self.best_key = None
        self.terminals = []

    def run(self, mode, cap=np.inf):
        """
        Args:
            mode (str): "bound" (prune when bound >= incumbent), "ties"
                (prune when bound > cap, keep the smallest canonical form among
                terminals within cap) or "exhaustive" (no pruning, keep every
                terminal).
            cap (float): Cost cap for "ties".
        """
        self.mode, self.cap = mode, cap
        self._visit(np.ones(self.n, dtype=bool), frozenset(), 0.0, 0.0, [])

    def _visit(self, open_rows, measured, level_cost, acc, clauses):
        self.visited += 1
        bound = acc + level_cost * np.count_nonzero(open_rows) / self.n
        if self.mode == "bound" and bound >= self.best_cost:
            return
        if self.mode == "ties" and bound > self.cap:
            return
        labels = self.target[open_rows]
        if labels.min() == labels.max():
            self._terminal(bound, DecisionList(tuple(clauses), labels[0]))
            return
        if len(clauses) >= self.l_max:
            return
        for cond, mask in zip(self.pool.conditions, self.pool.masks):
            caught = open_rows & mask
            if not caught.any():
                continue
            caught_labels = self.target[caught]
            action = caught_labels[0]
            if np.any(caught_labels != action):
                continue
            now = measured | cond.covariates
            now_cost = self.costs.set_cost(now)
            self._visit(open_rows & ~caught, now,
                        now_cost, acc + now_cost * np.count_nonzero(caught) /
                        self.n, clauses + [(cond, action)])

    def _terminal(self, cost, pi):
        if self.mode == "bound":
            self.best_cost, self.best = cost, pi
            self.incumbents.append(cost)
            logger.debug("new incumbent cost {:.6f} (length {})"
                         "".format(cost, len(pi)))
        elif self.mode == "ties":
            key = pi.canonical()
            if self.best_key is None or key < self.best_key:
                self.best, self.best_key, self.best_cost = pi, key, cost
        else:
            self.terminals.append((cost, pi))


def min_cost_equivalent(pi_tilde, data, costs=None, l_max=None, prune=True):
    """
    The cheapest list over the atom pool of pi_tilde that recommends the same
    treatment as pi_tilde to every sample subject.

    Candidate clauses must catch a non-empty set of open subjects sharing one
    recommendation. A partial list is abandoned once its lower bound
        sum_l N_l P(R_l) + N_j P(still open)
    reaches the incumbent cost. A second pass then collects every list within
    1e-12 of the optimum and returns the smallest canonical serialization.

    Args:
        pi_tilde (DecisionList): The list to rewrite.
        data (Dataset or np.ndarray): Subjects (or covariates).
        costs (CostModel): Covariate costs; unit costs if None.
        l_max (int): Longest list considered; defaults to len(pi_tilde).
        prune (bool): False enumerates every list (for checking the bound).

    Returns:
        (DecisionList) The rewritten list; metadata holds "cost",
            "original_cost", "nodes_visited" and "incumbents".
    """
    X = np.asarray(getattr(data, "X", data), dtype=float)
    n = X.shape[0]
    costs = costs or CostModel.uniform(X.shape[1])
    l_max = len(pi_tilde) if l_max is None else int(l_max)
    original = empirical_cost(pi_tilde, X, costs)
    target = pi_tilde.recommend(X)
    pool = AtomPool.from_list(pi_tilde, X)

    search = _Search(pool, target, costs, l_max, n)
    if prune:
        search.run("bound")
        if search.best is None:
            logger.warning("No pool list of length <= {} reproduces the "
                           "recommendations; keeping the input list"
                           "".format(l_max))
            return pi_tilde.with_metadata(cost=original,
                                          original_cost=original,
                                          nodes_visited=search.visited,
                                          incumbents=[])
        optimum = search.best_cost
        incumbents = list(search.incumbents)
        ties = _Search(pool, target, costs, l_max, n)
        ties.run("ties", optimum + TIE_EPS)
        best, visited = ties.best, search.visited + ties.visited
    else:
        search.run("exhaustive")
        if not search.terminals:
            return pi_tilde.with_metadata(cost=original,
                                          original_cost=original,
                                          nodes_visited=search.visited,
                                          incumbents=[])
        optimum = min(c for c, _ in search.terminals)
        best = min((pi for c, pi in search.terminals
                    if c <= optimum + TIE_EPS), key=lambda pi: pi.canonical())
        incumbents, visited = [optimum], search.visited
    cost = empirical_cost(best, X, costs)
    logger.info("Minimal-cost rewrite: cost {:.6f} -> {:.6f}, length {} -> "
                "{}, {} nodes visited".format(original, cost, len(pi_tilde),
                                              len(best), visited))
    meta = dict(pi_tilde.metadata)
    meta.update(cost=cost, original_cost=original, nodes_visited=visited,
                incumbents=incumbents)
    return DecisionList(best.clauses, best.default, meta)


def sample_equivalence_check(pi_a, pi_b, data):
    """
    Whether two lists recommend the same treatment to every subject.

    Args:
        pi_a, pi_b (DecisionList): The lists.
        data (Dataset or np.ndarray): Subjects (or covariates).

    Returns:
        (bool)
    """
    X = getattr(data, "X", data)
    return bool(np.array_equal(pi_a.recommend(X), pi_b.recommend(X)))
