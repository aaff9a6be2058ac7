"""
Dataset ingestion, cutoff grids, and covariate binning.

Treatments are coded 0..m-1 in order of first appearance; the original labels
are kept on the Dataset and used for every rendered output.
"""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from listrx.utils import get_logger, DataValidationError, \
    MissingColumnError, NonNumericError, MissingValueError, \
    UnknownTreatmentError

__author__ = "The listrx developers"

OUTCOME_KINDS = ("continuous", "binary")

logger = get_logger("listrx.data")


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Observed data {(X_i, A_i, Y_i)}.

    Args:
        X (np.ndarray): n x p covariate matrix.
        A (np.ndarray): Length-n treatment codes in 0..m-1.
        Y (np.ndarray): Length-n outcomes, higher is better.
        outcome_kind (str): "continuous" or "binary".
        covariate_names ([str]): Column names of X.
        treatment_labels ([str]): Original label of each treatment code.
        treatment_name (str): Name of the treatment column.
        outcome_name (str): Name of the outcome column.
    """
    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    outcome_kind: str = "continuous"
    covariate_names: tuple = None
    treatment_labels: tuple = None
    treatment_name: str = "a"
    outcome_name: str = "y"

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        A = np.array(self.A).astype(int).ravel()
        Y = np.array(self.Y, dtype=float).ravel()
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataValidationError(
                "A dataset needs at least one row and one covariate, got "
                "{} x {}.".format(n, p))
        if A.shape[0] != n or Y.shape[0] != n:
            raise DataValidationError(
                "Covariates, treatments and outcomes must have the same number"
                " of rows ({}, {}, {}).".format(n, A.shape[0], Y.shape[0]))
        if self.outcome_kind not in OUTCOME_KINDS:
            raise ValueError("outcome_kind must be one of {}, not {}"
                             "".format(OUTCOME_KINDS, self.outcome_kind))
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataValidationError("Covariates and outcomes must be finite.")
        labels = self.treatment_labels
        if labels is None:
            labels = tuple(str(a + 1) for a in range(int(A.max()) + 1))
        labels = tuple(str(l) for l in labels)
        m = len(labels)
        if m < 2:
            raise DataValidationError("At least two treatments are required.")
        if A.min() < 0 or A.max() >= m:
            raise DataValidationError(
                "Treatment codes must lie in 0..{}.".format(m - 1))
        counts = np.bincount(A, minlength=m)
        if np.any(counts == 0):
            empty = [labels[a] for a in np.flatnonzero(counts == 0)]
            raise DataValidationError(
                "Every treatment arm needs at least one subject; empty arms: "
                "{}".format(empty))
        if self.outcome_kind == "binary" and not np.all((Y == 0) | (Y == 1)):
            raise DataValidationError("Binary outcomes must be exactly 0 or 1.")
        names = self.covariate_names
        if names is None:
            names = tuple("x{}".format(j + 1) for j in range(p))
        names = tuple(str(c) for c in names)
        if len(names) != p:
            raise DataValidationError(
                "Got {} covariate names for {} covariates.".format(len(names),
                                                                  p))
        for k, v in (("X", X), ("A", A), ("Y", Y),
                     ("treatment_labels", labels), ("covariate_names", names)):
            object.__setattr__(self, k, v)
        X.setflags(write=False)
        A.setflags(write=False)
        Y.setflags(write=False)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def m(self):
        return len(self.treatment_labels)

    def arm_counts(self):
        return np.bincount(self.A, minlength=self.m)

    def with_outcomes(self, Y):
        """A copy of this dataset with new outcomes."""
        return Dataset(self.X, self.A, Y, self.outcome_kind,
                       self.covariate_names, self.treatment_labels,
                       self.treatment_name, self.outcome_name)

    def subset(self, rows):
        """A dataset restricted to the given rows (treatment coding kept)."""
        return Dataset(self.X[rows], self.A[rows], self.Y[rows],
                       self.outcome_kind, self.covariate_names,
                       self.treatment_labels, self.treatment_name,
                       self.outcome_name)

    def covariate_index(self, name):
        """
        Look up a covariate column by name.

        Args:
            name (str): Covariate column name.

        Returns:
            (int) The zero-based column index.
        """
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise MissingColumnError(
                "Unknown covariate {}; choose from {}"
                "".format(name, list(self.covariate_names)))


@dataclass(frozen=True, eq=False)
class CutoffGrid:
    """
    Candidate thresholds for every covariate.

    Args:
        cutoffs (tuple): One strictly increasing float array per covariate.
        policy (str): How the grid was built, e.g. "percentiles:9".
        warnings (tuple): Degenerate-covariate messages raised while building.
    """
    cutoffs: tuple
    policy: str = "explicit"
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        cutoffs = []
        for j, c in enumerate(self.cutoffs):
            c = np.unique(np.asarray(c, dtype=float).ravel())
            if c.size == 0:
                raise DataValidationError(
                    "Covariate {} has no cutoffs.".format(j))
            c.setflags(write=False)
            cutoffs.append(c)
        object.__setattr__(self, "cutoffs", tuple(cutoffs))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def p(self):
        return len(self.cutoffs)

    @property
    def sizes(self):
        return np.array([c.size for c in self.cutoffs], dtype=int)

    def to_bytes(self):
        return b"".join(c.tobytes() for c in self.cutoffs)

    def to_dict(self, names=None):
        names = names or ["x{}".format(j + 1) for j in range(self.p)]
        return {"policy": self.policy,
                "cutoffs": {names[j]: c.tolist()
                            for j, c in enumerate(self.cutoffs)},
                "warnings": list(self.warnings)}

    @classmethod
    def from_file(cls, path):
        """
        Read explicit cutoffs: one line per covariate, comma-separated reals.

        Args:
            path (str): The cutoff file.

        Returns:
            (CutoffGrid)
        """
        cutoffs = []
        with open(path) as f:
            for lineno, line in enumerate(f):
                line = line.strip()
                if not line:
                    continue
                try:
                    cutoffs.append([float(v) for v in line.split(",")
                                    if v.strip()])
                except ValueError:
                    raise NonNumericError(
                        "Cutoff file {} line {} is not a list of reals."
                        "".format(path, lineno + 1))
        return cls(tuple(cutoffs), policy="file:{}".format(path))


@dataclass(frozen=True, eq=False)
class BinIndex:
    """
    Interval codes b_ij in 0..s_j of every covariate value.

    b_ij = k means tau_{j,k-1} < x_ij <= tau_{j,k} (0-based cutoffs, with open
    ends), so the atom x_j <= tau_{j,t} holds exactly when b_ij <= t.
    """
    codes: np.ndarray
    sizes: np.ndarray

    @property
    def n(self):
        return self.codes.shape[0]

    @property
    def p(self):
        return self.codes.shape[1]


def load_csv(path, treatment_col, outcome_col, outcome_kind="continuous",
             covariates=None, treatment_labels=None):
    """
    Read and validate a dataset from a CSV file with a header row.

    Args:
        path (str): The CSV file.
        treatment_col (str): Column holding the treatment labels.
        outcome_col (str): Column holding the outcome.
        outcome_kind (str): "continuous" or "binary".
        covariates ([str]): Covariate columns; None means every other column.
        treatment_labels ([str]): A fixed treatment coding (scoring mode).
            Labels not in this list raise UnknownTreatmentError. None codes
            labels by order of first appearance.

    Returns:
        (Dataset) The validated dataset.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False,
                        skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]
    for col in (treatment_col, outcome_col):
        if col is None:
            raise MissingColumnError("Treatment and outcome columns must be "
                                     "named.")
        if col not in frame.columns:
            raise MissingColumnError(
                "Column {} not found in {}; columns are {}"
                "".format(col, path, list(frame.columns)))
    if covariates is None:
        covariates = [c for c in frame.columns
                      if c not in (treatment_col, outcome_col)]
    if not covariates:
        raise MissingColumnError("No covariate columns in {}".format(path))
    X = numeric_columns(frame, covariates)
    Y = numeric_columns(frame, [outcome_col])[:, 0]

    raw = frame[treatment_col].str.strip()
    missing = np.flatnonzero((raw == "").to_numpy())
    if missing.size:
        raise MissingValueError(int(missing[0]), treatment_col)
    if treatment_labels is None:
        treatment_labels = list(pd.unique(raw))
    treatment_labels = [str(l) for l in treatment_labels]
    coding = {l: a for a, l in enumerate(treatment_labels)}
    unknown = sorted(set(raw) - set(coding))
    if unknown:
        raise UnknownTreatmentError(
            "Treatment levels {} were not in the fixed coding {}"
            "".format(unknown, treatment_labels))
    A = raw.map(coding).to_numpy(dtype=int)
    data = Dataset(X, A, Y, outcome_kind, tuple(covariates),
                   tuple(treatment_labels), treatment_col, outcome_col)
    logger.info("Loaded {}: n={}, p={}, m={} ({})".format(
        path, data.n, data.p, data.m,
        ", ".join("{}: {}".format(l, c) for l, c in
                  zip(data.treatment_labels, data.arm_counts()))))
    return data


def load_covariates(path, covariates):
    """
    Read only the named covariate columns of a CSV file, e.g. for scoring.

    Args:
        path (str): The CSV file.
        covariates ([str]): Columns to read, in order.

    Returns:
        (np.ndarray, pd.DataFrame) The n x p matrix and the raw frame.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False,
                        skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]
    return numeric_columns(frame, covariates), frame


def numeric_columns(frame, columns):
    """
    Parse string columns of a frame as floats, reporting the first bad cell.

    Args:
        frame (pd.DataFrame): Frame of strings.
        columns ([str]): Columns to parse.

    Returns:
        (np.ndarray) The n x len(columns) float matrix.
    """
    out = np.empty((len(frame), len(columns)), dtype=float)
    for k, col in enumerate(columns):
        if col not in frame.columns:
            raise MissingColumnError(
                "Column {} not found; columns are {}"
                "".format(col, list(frame.columns)))
        raw = frame[col].str.strip()
        missing = np.flatnonzero((raw == "").to_numpy())
        if missing.size:
            raise MissingValueError(int(missing[0]), col)
        parsed = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            raise NonNumericError(
                "Cell row={}, col={} holds {!r}, which is not a finite real "
                "number.".format(int(bad[0]), col, raw.iloc[bad[0]]))
        out[:, k] = parsed
    return out


def parse_grid_policy(policy):
    """
    Split a grid policy string into its kind and argument.

    Args:
        policy (str): "percentiles:k" or "file:<path>".

    Returns:
        (str, int or str) ("percentiles", k) or ("file", path).
    """
    kind, _, arg = str(policy).partition(":")
    if kind == "percentiles":
        try:
            k = int(arg)
        except ValueError:
            raise ValueError("Bad percentile count in grid policy {}"
                             "".format(policy))
        if k < 1:
            raise ValueError("The percentile count must be >= 1, got {}"
                             "".format(k))
        return kind, k
    elif kind == "file" and arg:
        return kind, arg
    raise ValueError("Grid policy must be 'percentiles:k' or 'file:<path>', "
                     "not {}".format(policy))


def build_grid(data, policy="percentiles:9"):
    """
    Build the candidate cutoffs for every covariate.

    The percentile policy uses the k quantiles at probabilities 1/(k+1), ...,
    k/(k+1) with linear (type 7) interpolation, deduplicated. A constant
    covariate keeps a single cutoff at its value and is reported in the
    grid's warnings.

    Args:
        data (Dataset or np.ndarray): The data, or a bare covariate matrix.
        policy (str, int, or sequence): "percentiles:k", "file:<path>", an
            int k (percentiles), or one explicit cutoff sequence per
            covariate.

    Returns:
        (CutoffGrid) The grid.
    """
    X = data.X if isinstance(data, Dataset) else np.array(data, ndmin=2,
                                                          dtype=float)
    names = data.covariate_names if isinstance(data, Dataset) else \
        ["x{}".format(j + 1) for j in range(X.shape[1])]
    if isinstance(policy, (int, np.integer)):
        policy = "percentiles:{}".format(int(policy))
    if isinstance(policy, str):
        kind, arg = parse_grid_policy(policy)
        if kind == "file":
            grid = CutoffGrid.from_file(arg)
        else:
            probs = np.arange(1, arg + 1) / (arg + 1.0)
            quantiles = np.quantile(X, probs, axis=0, method="linear")
            grid = CutoffGrid(tuple(quantiles.T), policy=policy)
    else:
        grid = CutoffGrid(tuple(policy), policy="explicit")

    if grid.p != X.shape[1]:
        raise DataValidationError(
            "The cutoff grid covers {} covariates but the data has {}."
            "".format(grid.p, X.shape[1]))
    cutoffs, warnings = [], list(grid.warnings)
    for j, c in enumerate(grid.cutoffs):
        lo, hi = X[:, j].min(), X[:, j].max()
        inside = c[(c >= lo) & (c <= hi)]
        if inside.size < c.size:
            warnings.append("covariate {}: {} cutoffs outside the data range "
                            "[{}, {}] dropped".format(names[j],
                                                      c.size - inside.size,
                                                      lo, hi))
        if inside.size == 0:
            inside = np.array([hi])
        if lo == hi:
            warnings.append("covariate {} is constant at {}; single "
                            "degenerate cutoff".format(names[j], lo))
        cutoffs.append(inside)
    for w in warnings[len(grid.warnings):]:
        logger.warning(w)
    return CutoffGrid(tuple(cutoffs), policy=grid.policy,
                      warnings=tuple(warnings))


def bin_covariates(data, grid):
    """
    Code each covariate value by the grid interval that contains it.

    Intervals are closed on the right, so a value equal to a cutoff falls in
    the interval ending at that cutoff.

    Args:
        data (Dataset or np.ndarray): The data, or a bare covariate matrix.
        grid (CutoffGrid): Cutoffs for every covariate.

    Returns:
        (BinIndex) The n x p interval codes.
    """
    X = data.X if isinstance(data, Dataset) else np.array(data, ndmin=2,
                                                          dtype=float)
    if grid.p != X.shape[1]:
        raise ValueError("Grid has {} covariates, data has {}."
                         "".format(grid.p, X.shape[1]))
    codes = np.empty(X.shape, dtype=np.intp)
    for j, c in enumerate(grid.cutoffs):
        codes[:, j] = np.searchsorted(c, X[:, j], side="left")
    codes.setflags(write=False)
    return BinIndex(codes=codes, sizes=grid.sizes)
