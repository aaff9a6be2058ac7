"""
The greedy decision-list search.

best_clause scans every legal condition over the cutoff grid for the subjects
still open at a node, using per-pair count tables of the bin codes and their
2-d prefix sums, so each covariate pair costs O(n m + m s^2). find_list grows
lists clause by clause, stops a branch when the value gain fails the variance
gate, keeps both representations (clause, negated clause) of every accepted
split, and returns the best finished list.
"""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from listrx.data import build_grid, bin_covariates
from listrx.regime import Condition, DecisionList
from listrx.utils import get_logger, NoAdmissibleClauseError, rng_stream
from listrx.value import influence_record

__author__ = "The listrx developers"

logger = get_logger("listrx.search")

STOP_GATE = "variance-gate"
STOP_LMAX = "l_max"
STOP_LEAF = "leaf"
EXPANDED = "expanded"


@dataclass(frozen=True)
class SearchConfig:
    """
    Args:
        l_max (int): Maximum number of clauses (0 gives a constant list).
        alpha (float): One-sided level of the variance gate.
        min_region (int): Minimum number of open subjects on each side of a
            candidate clause.
    """
    l_max: int = 10
    alpha: float = 0.05
    min_region: int = 0

    def __post_init__(self):
        if int(self.l_max) != self.l_max or self.l_max < 0:
            raise ValueError("l_max must be a nonnegative integer, not {}"
                             "".format(self.l_max))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1), not {}"
                             "".format(self.alpha))
        if int(self.min_region) != self.min_region or self.min_region < 0:
            raise ValueError("min_region must be a nonnegative integer, not "
                             "{}".format(self.min_region))

    @property
    def gate_z(self):
        return float(norm.ppf(1.0 - self.alpha))


@dataclass(frozen=True, eq=False)
class ClauseChoice:
    """
    The best clause at a node: subjects satisfying condition get action_in,
    the rest of the open subjects get action_out.
    """
    condition: Condition
    action_in: int
    action_out: int
    score: float
    in_sums: np.ndarray
    out_sums: np.ndarray
    n_in: int
    n_out: int
    key: tuple


class _Best(object):
    """Running argmax with the lexicographic key as tie-breaker."""

    def __init__(self):
        self.score = -np.inf
        self.key = None
        self.info = None

    def offer(self, score, key, info):
        if self.key is None or score > self.score or \
                (score == self.score and key < self.key):
            self.score, self.key, self.info = score, key, info


def _scan(best, form, j1, j2, in_sums, in_counts, total, n_open, need):
    """
    Offer the best admissible cell of one form's table of in-region sums.
    in_sums has shape (m,) + cells, in_counts has shape cells.
    """
    out_sums = total.reshape((-1,) + (1,) * (in_sums.ndim - 1)) - in_sums
    out_counts = n_open - in_counts
    ok = (in_counts >= need) & (out_counts >= need)
    if not np.any(ok):
        return
    score = np.where(ok, in_sums.max(axis=0) + out_sums.max(axis=0), -np.inf)
    flat = int(np.argmax(score))
    cell = np.unravel_index(flat, score.shape)
    s = float(score[cell])
    a_in = int(np.argmax(in_sums[(slice(None),) + cell]))
    a_out = int(np.argmax(out_sums[(slice(None),) + cell]))
    t1 = int(cell[0])
    t2 = int(cell[1]) if len(cell) == 2 else -1
    best.offer(s, (form, j1, j2, t1, t2, a_in, a_out),
               (in_sums[(slice(None),) + cell].copy(),
                out_sums[(slice(None),) + cell].copy(),
                int(in_counts[cell]), int(out_counts[cell])))


def best_clause(active, xi, bins, grid, config=None):
    """
    Find the clause maximizing
        sum_{i open, c(X_i)} xi[i, a] + sum_{i open, not c(X_i)} xi[i, a']
    over the ten condition forms, every covariate (pair), every grid cutoff
    (pair) and every pair of actions. Ties go to the lexicographically
    smallest (form, j1, j2, t1, t2, a, a').

    Args:
        active (np.ndarray): Boolean mask or indices of the open subjects.
        xi (np.ndarray): n x m pseudo-outcomes.
        bins (BinIndex): Interval codes of the covariates.
        grid (CutoffGrid): The cutoffs the codes refer to.
        config (SearchConfig): Supplies min_region.

    Returns:
        (ClauseChoice) The best clause.
    """
    config = config or SearchConfig()
    active = np.asarray(active)
    idx = np.flatnonzero(active) if active.dtype == bool else active
    if idx.size == 0:
        raise ValueError("best_clause needs at least one open subject.")
    xi = np.asarray(getattr(xi, "xi", xi), dtype=float)
    X, B = xi[idx], bins.codes[idx]
    n_open, m = X.shape
    p = B.shape[1]
    sizes = bins.sizes
    need = max(1, int(config.min_region))
    total = X.sum(axis=0)
    best = _Best()

    for k in range(p):
        s = sizes[k]
        sums = np.stack([np.bincount(B[:, k], weights=X[:, a], minlength=s + 1)
                         for a in range(m)])
        below = np.cumsum(sums, axis=1)[:, :s]
        counts = np.cumsum(np.bincount(B[:, k], minlength=s + 1))[:s]
        _scan(best, 1, k, -1, below, counts, total, n_open, need)
        _scan(best, 10, k, -1, total[:, None] - below, n_open - counts,
              total, n_open, need)

    for k in range(p):
        sk = sizes[k]
        for l in range(k + 1, p):
            sl = sizes[l]
            cells = B[:, k] * (sl + 1) + B[:, l]
            shape = (sk + 1, sl + 1)
            D = np.stack([np.bincount(cells, weights=X[:, a],
                                      minlength=shape[0] * shape[1])
                          for a in range(m)]).reshape((m,) + shape)
            Dn = np.bincount(cells, minlength=shape[0] * shape[1]).reshape(
                shape)
            C = np.cumsum(np.cumsum(D, axis=1), axis=2)
            Cn = np.cumsum(np.cumsum(Dn, axis=0), axis=1)
            both = C[:, :sk, :sl]
            first = C[:, :sk, sl][:, :, None]
            second = C[:, sk, :sl][:, None, :]
            tot = total[:, None, None]
            both_n = Cn[:sk, :sl]
            first_n = Cn[:sk, sl][:, None]
            second_n = Cn[sk, :sl][None, :]
            tables = {
                2: (both, both_n),
                3: (first - both, first_n - both_n),
                4: (second - both, second_n - both_n),
                5: (tot - first - second + both,
                    n_open - first_n - second_n + both_n),
            }
            # forms 6..9 are the complements of 5..2
            for f in (5, 4, 3, 2):
                s_in, c_in = tables[f]
                tables[11 - f] = (tot - s_in, n_open - c_in)
            for f in range(2, 10):
                s_in, c_in = tables[f]
                _scan(best, f, k, l, s_in, c_in, total, n_open, need)

    if best.key is None:
        raise NoAdmissibleClauseError(
            "No clause leaves at least {} open subjects on each side "
            "({} open).".format(need, n_open))
    form, j1, j2, t1, t2, a_in, a_out = best.key
    tau2 = grid.cutoffs[j2][t2] if j2 >= 0 else None
    condition = Condition.from_form(form, j1, grid.cutoffs[j1][t1],
                                    j2 if j2 >= 0 else None, tau2)
    in_sums, out_sums, n_in, n_out = best.info
    return ClauseChoice(condition, a_in, a_out, best.score, in_sums,
                        out_sums, n_in, n_out, best.key)


@dataclass
class SearchTrace:
    """
    Record of a list search: one entry per visited node and the finished
    candidate lists.

    Each node holds its parent, the representation it was reached by
    ("root", "clause" or "negated"), its depth, the candidate clause with its
    value gain, gain variance and gate threshold when one was scored, the stop
    reason ("expanded", "variance-gate", "l_max" or "leaf") and its children.
    """
    nodes: list = field(default_factory=list)
    finals: list = field(default_factory=list)
    chosen: int = -1
    gate_z: float = float("nan")

    def final_lists(self):
        return [f["list"] for f in self.finals]

    def to_dict(self, names, labels):
        nodes = []
        for node in self.nodes:
            doc = {k: v for k, v in node.items() if k != "candidate"}
            cand = node.get("candidate")
            if cand is not None:
                c = cand["condition"]
                doc["candidate"] = {
                    "form": c.form,
                    "condition": c.render(names),
                    "action_in": labels[cand["action_in"]],
                    "action_out": labels[cand["action_out"]],
                    "delta": cand["delta"],
                    "variance": cand["variance"],
                    "threshold": cand["threshold"]}
            nodes.append(doc)
        finals = [{"node": f["node"], "value": f["value"],
                   "list": f["list"].to_dict(names, labels),
                   "text": f["list"].render(names, labels)}
                  for f in self.finals]
        return {"gate_z": self.gate_z, "nodes": nodes, "finals": finals,
                "chosen": self.chosen}


def find_list(data, fits, grid=None, bins=None, config=None):
    """
    Estimate a decision-list regime.

    The constant list with the best arm starts the search. At every node the
    best clause over the open subjects is accepted only if its value gain
    delta satisfies delta >= z_{1-alpha} * sqrt(Var(delta)) and delta > 0;
    otherwise, at depth l_max, or when no clause is admissible, the node's
    list is finished. An accepted clause spawns two children, the clause with
    its action and the negated clause with the other action; both recommend
    the same treatments. The finished list with the largest estimated value
    is returned, the first one found winning ties.

    Args:
        data (Dataset): The data.
        fits (FittedModels or InfluenceRecord): Nuisance fits.
        grid (CutoffGrid): Candidate cutoffs; the default decile grid if None.
        bins (BinIndex): Precomputed bin codes of data under grid.
        config (SearchConfig): Search settings.

    Returns:
        (DecisionList, SearchTrace) The chosen list and the search record.
    """
    config = config or SearchConfig()
    record = influence_record(data, fits)
    grid = grid if grid is not None else build_grid(data)
    bins = bins if bins is not None else bin_covariates(data, grid)
    xi = record.xi.xi
    n = xi.shape[0]
    z = config.gate_z
    trace = SearchTrace(gate_z=z)

    def finish(node, clauses, default, rec, reason):
        pi = DecisionList(tuple(clauses), default)
        v = record.value(rec)
        node["stop"] = reason
        node["value"] = v
        trace.finals.append({"node": node["id"], "value": v, "list": pi})
        logger.debug("node {} finished ({}), length {}, value {:.6f}"
                     "".format(node["id"], reason, len(pi), v))

    def visit(parent, representation, clauses, default, open_rows, rec):
        node = {"id": len(trace.nodes), "parent": parent,
                "representation": representation, "depth": len(clauses),
                "children": []}
        trace.nodes.append(node)
        if len(clauses) >= config.l_max:
            return finish(node, clauses, default, rec, STOP_LMAX)
        try:
            choice = best_clause(open_rows, xi, bins, grid, config)
        except NoAdmissibleClauseError:
            return finish(node, clauses, default, rec, STOP_LEAF)
        caught = open_rows & choice.condition.holds(data.X)
        rest = open_rows & ~caught
        child_rec = rec.copy()
        child_rec[caught] = choice.action_in
        child_rec[rest] = choice.action_out
        delta = (choice.score - xi[open_rows, default].sum()) / n
        variance = record.variance_difference(child_rec, rec)
        threshold = z * np.sqrt(variance)
        node["candidate"] = {"condition": choice.condition,
                             "action_in": choice.action_in,
                             "action_out": choice.action_out,
                             "delta": float(delta),
                             "variance": float(variance),
                             "threshold": float(threshold)}
        if delta < threshold or delta <= 0:
            return finish(node, clauses, default, rec, STOP_GATE)
        node["stop"] = EXPANDED
        children = (
            ("clause", choice.condition, choice.action_in, choice.action_out,
             caught),
            ("negated", choice.condition.negate(), choice.action_out,
             choice.action_in, rest))
        for rep, cond, action, child_default, fired in children:
            node["children"].append(len(trace.nodes))
            visit(node["id"], rep, clauses + [(cond, action)], child_default,
                  open_rows & ~fired, child_rec)

    a0 = int(np.argmax(xi.mean(axis=0)))
    visit(None, "root", [], a0, np.ones(n, dtype=bool), np.full(n, a0))

    chosen = 0
    for k, f in enumerate(trace.finals):
        if f["value"] > trace.finals[chosen]["value"]:
            chosen = k
    trace.chosen = chosen
    best = trace.finals[chosen]
    pi = best["list"].with_metadata(value=best["value"],
                                    n_candidates=len(trace.finals),
                                    n_nodes=len(trace.nodes))
    logger.info("List search visited {} nodes, finished {} lists; chosen "
                "length {}, value {:.6f}".format(len(trace.nodes),
                                                 len(trace.finals), len(pi),
                                                 best["value"]))
    return pi, trace


def _time_best_clause(n, p, m, s, repeats, seed):
    rng = rng_stream(seed, n, p)
    X = rng.standard_normal((n, p))
    xi = rng.standard_normal((n, m))
    grid = build_grid(X, "percentiles:{}".format(s))
    bins = bin_covariates(X, grid)
    active = np.ones(n, dtype=bool)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        best_clause(active, xi, bins, grid)
        times.append(time.perf_counter() - start)
    return min(times)


def complexity_probe(n=2000, p=10, m=2, s=9, l_max=10,
                     p_values=(10, 20, 40, 80),
                     n_values=(40000, 80000, 160000, 320000),
                     repeats=3, seed=0):
    """
    Measure how the clause search scales with the number of covariates and
    the number of subjects. One node of the search is timed (the best of
    `repeats` runs); a full search repeats it at most 2^l_max times.

    Args:
        n (int): Subjects while sweeping p.
        p (int): Covariates while sweeping n.
        m (int): Number of arms.
        s (int): Percentile cutoffs per covariate.
        l_max (int): List length bound used in the reported worst case.
        p_values (tuple): The covariate sweep.
        n_values (tuple): The subject sweep.
        repeats (int): Timings per point.
        seed (int): Seeds the synthetic inputs.

    Returns:
        (dict) Timings and fitted log-log exponents, JSON-ready.
    """
    p_times = [_time_best_clause(n, pv, m, s, repeats, seed)
               for pv in p_values]
    n_times = [_time_best_clause(nv, p, m, s, repeats, seed)
               for nv in n_values]
    p_slope = float(np.polyfit(np.log(p_values), np.log(p_times), 1)[0])
    n_slope = float(np.polyfit(np.log(n_values), np.log(n_times), 1)[0])
    logger.info("Complexity probe: p exponent {:.2f}, n exponent {:.2f}"
                "".format(p_slope, n_slope))
    return {"m": m, "s": s, "l_max": l_max, "repeats": repeats,
            "p_sweep": {"n": n, "p": list(p_values), "seconds": p_times,
                        "exponent": p_slope},
            "n_sweep": {"p": p, "n": list(n_values), "seconds": n_times,
                        "exponent": n_slope},
            "node_bound": "O(m p^2 (n + s^2))",
            "search_bound": "O(2^l_max m p^2 (n + s^2))"}
