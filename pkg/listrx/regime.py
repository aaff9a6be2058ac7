"""
Decision lists: atoms, the ten condition forms, clauses, evaluation, negation,
regions, measurement cost, text rendering and JSON serialization.

Condition forms, for atoms on covariates j1 < j2:

    1   x_j1 <= t1                     10  x_j1 > t1
    2   x_j1 <= t1 and x_j2 <= t2      9   x_j1 > t1  or x_j2 > t2
    3   x_j1 <= t1 and x_j2 > t2       8   x_j1 > t1  or x_j2 <= t2
    4   x_j1 > t1  and x_j2 <= t2      7   x_j1 <= t1 or x_j2 > t2
    5   x_j1 > t1  and x_j2 > t2       6   x_j1 <= t1 or x_j2 <= t2

Each row pairs a form with its negation.
"""
import json
from dataclasses import dataclass, field

import numpy as np

__author__ = "The listrx developers"

LE = "<="
GT = ">"
SENSES = (LE, GT)

SINGLE = "single"
AND = "and"
OR = "or"

# (connective, sense of first atom, sense of second atom) -> form tag
_FORMS = {
    (SINGLE, LE, None): 1,
    (AND, LE, LE): 2,
    (AND, LE, GT): 3,
    (AND, GT, LE): 4,
    (AND, GT, GT): 5,
    (OR, LE, LE): 6,
    (OR, LE, GT): 7,
    (OR, GT, LE): 8,
    (OR, GT, GT): 9,
    (SINGLE, GT, None): 10,
}
FORM_SHAPES = {v: k for k, v in _FORMS.items()}
NEGATED_FORM = {f: 11 - f for f in range(1, 11)}


@dataclass(frozen=True, order=True)
class Atom:
    """
    A single-covariate threshold test.

    Args:
        j (int): Zero-based covariate index.
        threshold (float): The cutoff tau.
        sense (str): "<=" or ">".
    """
    j: int
    threshold: float
    sense: str = LE

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError("Atom sense must be one of {}, not {}"
                             "".format(SENSES, self.sense))
        object.__setattr__(self, "j", int(self.j))
        object.__setattr__(self, "threshold", float(self.threshold))

    def negate(self):
        return Atom(self.j, self.threshold, GT if self.sense == LE else LE)

    def holds(self, X):
        x = np.asarray(X, dtype=float)[..., self.j]
        if self.sense == LE:
            return x <= self.threshold
        return x > self.threshold

    def render(self, names):
        return "{} {} {}".format(names[self.j], self.sense,
                                 format_threshold(self.threshold))


@dataclass(frozen=True)
class Condition:
    """
    One of the ten legal conditions: a single atom, or two atoms on distinct
    covariates joined by "and" or "or". Atoms are stored with j1 < j2.

    Args:
        atoms (tuple): One or two Atoms.
        connective (str): "single", "and" or "or".
    """
    atoms: tuple
    connective: str = SINGLE

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if self.connective == SINGLE:
            if len(atoms) != 1:
                raise ValueError("A single condition has exactly one atom.")
        elif self.connective in (AND, OR):
            if len(atoms) != 2:
                raise ValueError("A compound condition has exactly two atoms.")
            if atoms[0].j == atoms[1].j:
                raise ValueError("Compound conditions need two distinct "
                                 "covariates, got {} twice.".format(atoms[0].j))
            atoms = tuple(sorted(atoms, key=lambda a: a.j))
        else:
            raise ValueError("Unknown connective {}".format(self.connective))
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_form(cls, form, j1, t1, j2=None, t2=None):
        """
        Build a condition from its form tag and atom data.

        Args:
            form (int): The form tag, 1..10.
            j1, t1: Covariate index and threshold of the first atom.
            j2, t2: Covariate index and threshold of the second atom (pair
                forms only). Must satisfy j1 < j2.

        Returns:
            (Condition)
        """
        if form not in FORM_SHAPES:
            raise ValueError("Form tags run from 1 to 10, got {}".format(form))
        connective, s1, s2 = FORM_SHAPES[form]
        if connective == SINGLE:
            return cls((Atom(j1, t1, s1),), SINGLE)
        if not j1 < j2:
            raise ValueError("Pair forms need j1 < j2, got {} and {}"
                             "".format(j1, j2))
        return cls((Atom(j1, t1, s1), Atom(j2, t2, s2)), connective)

    @property
    def form(self):
        s2 = self.atoms[1].sense if len(self.atoms) == 2 else None
        return _FORMS[(self.connective, self.atoms[0].sense, s2)]

    @property
    def covariates(self):
        return frozenset(a.j for a in self.atoms)

    def negate(self):
        """
        De Morgan negation: flip every atom and swap "and" with "or".

        Returns:
            (Condition) The complement condition.
        """
        connective = {SINGLE: SINGLE, AND: OR, OR: AND}[self.connective]
        return Condition(tuple(a.negate() for a in self.atoms), connective)

    def holds(self, X):
        """
        Evaluate the condition.

        Args:
            X (np.ndarray): One covariate vector (p,) or a matrix (n, p).

        Returns:
            (bool or np.ndarray) Whether each row satisfies the condition.
        """
        first = self.atoms[0].holds(X)
        if self.connective == SINGLE:
            return first
        second = self.atoms[1].holds(X)
        if self.connective == AND:
            return first & second
        return first | second

    def render(self, names):
        joiner = " {} ".format(self.connective)
        return joiner.join(a.render(names) for a in self.atoms)

    def key(self):
        """Canonical sort key: form, covariates, thresholds."""
        js = [a.j for a in self.atoms]
        ts = [a.threshold for a in self.atoms]
        return (self.form, js, ts)


@dataclass(frozen=True)
class DecisionList:
    """
    An ordered list of clauses (condition, action) and a default action.
    pi(x) is the action of the first clause whose condition holds, else the
    default. Actions are treatment codes 0..m-1.

    Args:
        clauses (tuple): ((Condition, int), ...).
        default (int): The default action a0.
        metadata (dict): Provenance such as the estimated value.
    """
    clauses: tuple = ()
    default: int = 0
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        clauses = tuple((c, int(a)) for c, a in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        object.__setattr__(self, "default", int(self.default))

    def __len__(self):
        return len(self.clauses)

    @property
    def actions(self):
        return [a for _, a in self.clauses] + [self.default]

    def covariates(self):
        out = set()
        for c, _ in self.clauses:
            out |= c.covariates
        return frozenset(out)

    def with_metadata(self, **kwargs):
        meta = dict(self.metadata)
        meta.update(kwargs)
        return DecisionList(self.clauses, self.default, meta)

    def regions(self, X):
        """
        The clause that fires for every row.

        Args:
            X (np.ndarray): n x p covariates.

        Returns:
            (np.ndarray) Length-n ints, l in 1..L for clause l, 0 for default.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        out = np.zeros(X.shape[0], dtype=int)
        open_rows = np.ones(X.shape[0], dtype=bool)
        for l, (c, _) in enumerate(self.clauses, start=1):
            fire = open_rows & c.holds(X)
            out[fire] = l
            open_rows &= ~fire
        return out

    def recommend(self, X):
        """
        Recommended treatment codes for every row of X.

        Args:
            X (np.ndarray): n x p covariates.

        Returns:
            (np.ndarray) Length-n treatment codes.
        """
        lookup = np.array([self.default] + [a for _, a in self.clauses],
                          dtype=int)
        return lookup[self.regions(X)]

    def evaluate(self, x):
        """
        The recommendation for a single covariate vector.

        Args:
            x (array-like): Length-p covariates.

        Returns:
            (int) The treatment code.
        """
        x = np.asarray(x, dtype=float)
        for c, a in self.clauses:
            if c.holds(x):
                return a
        return self.default

    def level_covariates(self):
        """Covariates measured after evaluating clauses 1..l, l = 0..L."""
        seen, out = set(), [frozenset()]
        for c, _ in self.clauses:
            seen |= c.covariates
            out.append(frozenset(seen))
        return out

    def render(self, names, labels):
        """
        Human-readable if / else if / else text.

        Args:
            names ([str]): Covariate names.
            labels ([str]): Treatment labels by code.

        Returns:
            (str) The rendered list, one clause per line.
        """
        if not self.clauses:
            return "Everyone {}".format(labels[self.default])
        lines = []
        for l, (c, a) in enumerate(self.clauses):
            lead = "If" if l == 0 else "else if"
            lines.append("{} {} then {}".format(lead, c.render(names),
                                                labels[a]))
        lines.append("else {}".format(labels[self.default]))
        return "\n".join(lines)

    def to_dict(self, names, labels):
        """
        JSON-ready document with column names and original labels.

        Args:
            names ([str]): Covariate names.
            labels ([str]): Treatment labels by code.

        Returns:
            (dict)
        """
        clauses = []
        for c, a in self.clauses:
            clauses.append({
                "form": c.form,
                "connective": c.connective,
                "atoms": [{"col": names[t.j], "op": t.sense,
                           "threshold": t.threshold} for t in c.atoms],
                "action": labels[a]})
        doc = {"clauses": clauses, "default": labels[self.default],
               "length": len(self)}
        if self.metadata:
            doc["metadata"] = dict(self.metadata)
        return doc

    @classmethod
    def from_dict(cls, doc, names, labels):
        """
        Rebuild a list from its JSON document.

        Args:
            doc (dict): Output of to_dict.
            names ([str]): Covariate names of the target data.
            labels ([str]): Treatment labels by code.

        Returns:
            (DecisionList)
        """
        names, labels = list(names), [str(l) for l in labels]
        clauses = []
        for cl in doc["clauses"]:
            atoms = []
            for at in cl["atoms"]:
                if at["col"] not in names:
                    raise KeyError("Unknown covariate {}; choose from {}"
                                   "".format(at["col"], names))
                atoms.append(Atom(names.index(at["col"]), at["threshold"],
                                  at["op"]))
            connective = cl.get("connective") or \
                FORM_SHAPES[int(cl["form"])][0]
            clauses.append((Condition(tuple(atoms), connective),
                            _label_code(cl["action"], labels)))
        return cls(tuple(clauses), _label_code(doc["default"], labels),
                   dict(doc.get("metadata", {})))

    def canonical(self):
        """
        Canonical serialization in terms of covariate indices and codes;
        equal strings mean structurally equal lists.

        Returns:
            (str)
        """
        body = [[c.form, [[t.j, t.sense, t.threshold] for t in c.atoms], a]
                for c, a in self.clauses]
        return json.dumps([body, self.default], separators=(",", ":"))


@dataclass(frozen=True)
class CostModel:
    """
    Per-covariate measurement costs (default 1 each).

    Args:
        costs (np.ndarray): Nonnegative cost of measuring each covariate.
    """
    costs: tuple

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        if any(c < 0 or not np.isfinite(c) for c in costs):
            raise ValueError("Covariate costs must be finite and nonnegative.")
        object.__setattr__(self, "costs", costs)

    @classmethod
    def uniform(cls, p):
        return cls((1.0,) * p)

    @classmethod
    def from_file(cls, path, names):
        """
        Read "covariate,cost" lines; unlisted covariates cost 1.

        Args:
            path (str): The cost file.
            names ([str]): Covariate names of the data.

        Returns:
            (CostModel)
        """
        names = list(names)
        costs = [1.0] * len(names)
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                name, _, cost = line.rpartition(",")
                name = name.strip()
                if name not in names:
                    raise KeyError("Unknown covariate {} in cost file {}"
                                   "".format(name, path))
                costs[names.index(name)] = float(cost)
        return cls(tuple(costs))

    def set_cost(self, covariates):
        return float(sum(self.costs[j] for j in covariates))

    def level_costs(self, pi):
        """
        Cost N_l of the distinct covariates in clauses 1..l, for l = 0..L.

        Args:
            pi (DecisionList): The list.

        Returns:
            (np.ndarray) Length L+1, non-decreasing, starting at 0.
        """
        return np.array([self.set_cost(s) for s in pi.level_covariates()])


def empirical_cost(pi, data, costs=None):
    """
    Sample version of the expected measurement cost of applying a list.

    Subjects caught by clause l pay N_l, subjects that reach the default pay
    N_L.

    Args:
        pi (DecisionList): The list.
        data (Dataset or np.ndarray): Subjects (or covariates) to average over.
        costs (CostModel): Covariate costs; unit costs if None.

    Returns:
        (float) The average incurred cost.
    """
    X = getattr(data, "X", data)
    X = np.asarray(X, dtype=float)
    costs = costs or CostModel.uniform(X.shape[1])
    per_level = costs.level_costs(pi)
    regions = pi.regions(X)
    incurred = per_level[np.where(regions == 0, len(pi), regions)]
    return float(np.mean(incurred))


def needed_covariates(pi, X):
    """
    The covariates that must be measured to reach each row's recommendation.

    Args:
        pi (DecisionList): The list.
        X (np.ndarray): n x p covariates.

    Returns:
        ([frozenset]) Covariate indices per row.
    """
    levels = pi.level_covariates()
    regions = pi.regions(X)
    return [levels[len(pi) if r == 0 else r] for r in regions]


def format_threshold(t):
    return repr(float(t))


def _label_code(label, labels):
    label = str(label)
    if label not in labels:
        raise KeyError("Unknown treatment label {}; choose from {}"
                       "".format(label, labels))
    return labels.index(label)


def _find_all(text, token):
    start = text.find(token)
    while start >= 0:
        yield start
        start = text.find(token, start + 1)


def _parse_atom(text, names):
    """An Atom if text reads "<name> <op> <threshold>" exactly, else None."""
    for sense in SENSES:
        token = " {} ".format(sense)
        for start in _find_all(text, token):
            col, thr = text[:start], text[start + len(token):]
            if col not in names or not thr or " " in thr:
                continue
            try:
                return Atom(names.index(col), float(thr), sense)
            except ValueError:
                continue
    return None


def _parse_condition(text, names):
    atom = _parse_atom(text, names)
    if atom is not None:
        return Condition((atom,), SINGLE)
    for joiner in (AND, OR):
        token = " {} ".format(joiner)
        for start in _find_all(text, token):
            first = _parse_atom(text[:start], names)
            if first is None:
                continue
            second = _parse_atom(text[start + len(token):], names)
            if second is not None and second.j != first.j:
                return Condition((first, second), joiner)
    return None


def _parse_clause(line, names, labels):
    # covariate names and labels may themselves contain "and", "or", "then"
    for lead in ("If ", "else if "):
        if line.startswith(lead):
            body = line[len(lead):]
            break
    else:
        raise ValueError("Cannot parse clause line {!r}".format(line))
    for label in sorted(labels, key=len, reverse=True):
        tail = " then " + label
        if body.endswith(tail):
            cond = _parse_condition(body[:-len(tail)], names)
            if cond is not None:
                return cond, labels.index(label)
    _, sep, label = body.rpartition(" then ")
    if sep and label not in labels:
        _label_code(label, labels)
    raise ValueError("Cannot parse clause line {!r}".format(line))


def parse(text, names, labels):
    """
    Inverse of DecisionList.render. Covariate names and treatment labels are
    matched against the given vocabularies, so they may contain spaces and
    the words of the rendered grammar.

    Args:
        text (str): Rendered list.
        names ([str]): Covariate names.
        labels ([str]): Treatment labels by code.

    Returns:
        (DecisionList)
    """
    names, labels = [str(n) for n in names], [str(l) for l in labels]
    lines = [l.strip() for l in text.strip().splitlines() if l.strip()]
    if len(lines) == 1 and lines[0].startswith("Everyone "):
        return DecisionList((), _label_code(lines[0][len("Everyone "):],
                                            labels))
    if not lines or not lines[-1].startswith("else "):
        raise ValueError("A rendered list ends with an 'else' line.")
    clauses = [_parse_clause(line, names, labels) for line in lines[:-1]]
    default = _label_code(lines[-1][len("else "):], labels)
    return DecisionList(tuple(clauses), default)
