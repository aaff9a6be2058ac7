"""
Simulation lab: the seven benchmark generative models, Monte Carlo study
drivers and their metrics, and a linear Q-learning baseline.

Covariates are mean-zero Gaussian with cov(X_k, X_l) = 4 (1/5)^|k - l|,
treatments are uniform over the m arms, and the outcome mean is
    2 + x1 + x3 + x5 + x7 + phi(x, a),
normal with unit variance for continuous outcomes and passed through the
inverse logit for binary ones. The optimal regime is argmax_a phi(x, a).
"""
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import expit

from listrx.data import Dataset
from listrx.regime import Condition, DecisionList, empirical_cost
from listrx.models import fit_outcome
from listrx.search import SearchConfig, find_list
from listrx.costmin import min_cost_equivalent
from listrx.control import RegimeLearner
from listrx.utils import get_logger, rng_stream, FitError, BootstrapError, \
    StudyError

__author__ = "The listrx developers"

logger = get_logger("listrx.simlab")

DATA_STREAM = 11
TEST_STREAM = 12
ESTIMATORS = ("decision-list", "q-linear")
MAX_FAILURE_FRACTION = 0.05
STUDY_DEFAULTS = {"propensity": "sample-proportion", "penalty": "lasso",
                  "threads": 1}


def _phi_1(X):
    out = np.zeros((X.shape[0], 2))
    out[:, 1] = 3.0 * ((X[:, 0] <= 1) & (X[:, 1] > -0.6)) - 1.0
    return out


def _phi_2(X):
    out = np.zeros((X.shape[0], 2))
    out[:, 1] = X[:, 0] + X[:, 1] - 1.0
    return out


def _phi_3(X):
    out = np.zeros((X.shape[0], 2))
    out[:, 1] = np.arctan(np.exp(1.0 + X[:, 0]) - 3.0 * X[:, 1] - 5.0)
    return out


def _phi_4(X):
    out = np.zeros((X.shape[0], 2))
    out[:, 1] = X[:, 0] - X[:, 1] + X[:, 2] - X[:, 3]
    return out


def _phi_5(X):
    out = np.zeros((X.shape[0], 3))
    low = X[:, 0] <= 1
    out[:, 1] = 4.0 * ~low - 2.0
    out[:, 2] = low * (2.0 * (X[:, 1] <= -0.3) - 1.0)
    return out


def _phi_6(X):
    out = np.zeros((X.shape[0], 3))
    out[:, 1] = 2.0 * X[:, 0]
    out[:, 2] = -X[:, 0] * X[:, 1]
    return out


def _phi_7(X):
    out = np.zeros((X.shape[0], 3))
    out[:, 1] = X[:, 0] - X[:, 1]
    out[:, 2] = X[:, 2] - X[:, 3]
    return out


@dataclass(frozen=True)
class SimSetting:
    """
    One generative model.

    Args:
        id (str): "I" .. "VII".
        m (int): Number of treatments.
        contrast (callable): X -> n x m matrix phi(x, a).
        signals (tuple): Zero-based covariates phi depends on.
        form (str): Shape of the optimal regime: "decision list", "linear"
            or "nonlinear".
        p (int): Number of covariates.
        outcome_kind (str): "continuous" or "binary".
    """
    id: str
    m: int
    contrast: object
    signals: tuple
    form: str
    p: int = 10
    outcome_kind: str = "continuous"

    def __post_init__(self):
        if self.p < 7:
            raise ValueError("The outcome mean uses x1..x7; p must be >= 7.")

    @property
    def default_n(self):
        if self.outcome_kind == "continuous":
            return 500 if self.m == 2 else 750
        return 1000 if self.m == 2 else 1500

    @property
    def noise(self):
        return tuple(j for j in range(self.p) if j not in self.signals)

    def covariance(self):
        return linalg.toeplitz(4.0 * 0.2 ** np.arange(self.p))

    def with_options(self, p=None, outcome_kind=None):
        return replace(self, p=self.p if p is None else int(p),
                       outcome_kind=outcome_kind or self.outcome_kind)

    def to_dict(self):
        return {"id": self.id, "m": self.m, "p": self.p,
                "outcome_kind": self.outcome_kind, "form": self.form,
                "signals": ["x{}".format(j + 1) for j in self.signals],
                "default_n": self.default_n}


SETTINGS = {
    "I": SimSetting("I", 2, _phi_1, (0, 1), "decision list"),
    "II": SimSetting("II", 2, _phi_2, (0, 1), "linear"),
    "III": SimSetting("III", 2, _phi_3, (0, 1), "nonlinear"),
    "IV": SimSetting("IV", 2, _phi_4, (0, 1, 2, 3), "linear"),
    "V": SimSetting("V", 3, _phi_5, (0, 1), "decision list"),
    "VI": SimSetting("VI", 3, _phi_6, (0, 1), "nonlinear"),
    "VII": SimSetting("VII", 3, _phi_7, (0, 1, 2, 3), "linear"),
}

# cutoffs of the optimal lists, by covariate
OPTIMAL_CUTOFFS = {"I": {0: 1.0, 1: -0.6}, "V": {0: 1.0, 1: -0.3}}


def get_setting(setting, p=10, outcome_kind="continuous"):
    """
    Look up a setting by its roman numeral.

    Args:
        setting (str or SimSetting): "I" .. "VII", or a setting.
        p (int): Number of covariates.
        outcome_kind (str): "continuous" or "binary" ("cont"/"bin" accepted).

    Returns:
        (SimSetting)
    """
    if isinstance(setting, SimSetting):
        return setting
    key = str(setting).upper()
    if key not in SETTINGS:
        raise KeyError("Unknown setting {}; choose from {}"
                       "".format(setting, list(SETTINGS)))
    kind = {"cont": "continuous", "bin": "binary"}.get(outcome_kind,
                                                       outcome_kind)
    return SETTINGS[key].with_options(p, kind)


def draw_covariates(setting, n, rng):
    """Draw n covariate vectors through the Cholesky factor of the AR
    covariance."""
    chol = linalg.cholesky(setting.covariance(), lower=True)
    return rng.standard_normal((n, setting.p)) @ chol.T


def mean_outcome(setting, X):
    """
    E(Y | X, A = a) for every arm.

    Args:
        setting (SimSetting): The model.
        X (np.ndarray): n x p covariates.

    Returns:
        (np.ndarray) n x m conditional means.
    """
    X = np.asarray(X, dtype=float)
    base = 2.0 + X[:, 0] + X[:, 2] + X[:, 4] + X[:, 6]
    eta = base[:, None] + setting.contrast(X)
    return expit(eta) if setting.outcome_kind == "binary" else eta


def optimal_actions(setting, X):
    return np.argmax(setting.contrast(np.asarray(X, dtype=float)), axis=1)


def optimal_regime(setting):
    """
    The optimal regime as a decision list, for the settings where it is one.

    Args:
        setting (SimSetting or str): "I" or "V".

    Returns:
        (DecisionList)
    """
    setting = get_setting(setting)
    if setting.id == "I":
        return DecisionList(((Condition.from_form(3, 0, 1.0, 1, -0.6), 1),),
                            0)
    if setting.id == "V":
        return DecisionList(((Condition.from_form(10, 0, 1.0), 1),
                             (Condition.from_form(1, 1, -0.3), 2)), 0)
    raise ValueError("The optimal regime of setting {} is {}, not a decision "
                     "list.".format(setting.id, setting.form))


def generate(setting, n=None, seed=0, stream=0):
    """
    Draw a dataset from a setting.

    Args:
        setting (SimSetting or str): The model.
        n (int): Subjects; the setting's default size if None.
        seed (int): Run seed.
        stream (int): Replicate index; (seed, stream) fixes the draw.

    Returns:
        (Dataset)
    """
    setting = get_setting(setting)
    n = setting.default_n if n is None else int(n)
    rng = rng_stream(seed, DATA_STREAM, stream)
    X = draw_covariates(setting, n, rng)
    A = rng.integers(0, setting.m, size=n)
    mean = mean_outcome(setting, X)[np.arange(n), A]
    if setting.outcome_kind == "binary":
        Y = (rng.uniform(size=n) < mean).astype(float)
    else:
        Y = mean + rng.standard_normal(n)
    return Dataset(X, A, Y, outcome_kind=setting.outcome_kind,
                   covariate_names=tuple("x{}".format(j + 1)
                                         for j in range(setting.p)),
                   treatment_labels=tuple(str(a + 1)
                                          for a in range(setting.m)),
                   treatment_name="a", outcome_name="y")


def draw_test_covariates(setting, test_n=100000, seed=0):
    return draw_covariates(setting, int(test_n),
                           rng_stream(seed, TEST_STREAM))


def _value_of(rec, setting, X):
    return float(np.mean(mean_outcome(setting, X)[np.arange(X.shape[0]),
                                                  rec]))


def true_value(pi, setting, test_n=100000, seed=0, X=None):
    """
    Monte Carlo value of a regime, averaging the known conditional mean of
    the recommended arm over fresh covariate draws.

    Args:
        pi (DecisionList or np.ndarray): The regime, or its recommendations
            on X.
        setting (SimSetting or str): The model.
        test_n (int): Test draws (ignored when X is given).
        seed (int): Seeds the test draws.
        X (np.ndarray): Precomputed test covariates.

    Returns:
        (float)
    """
    setting = get_setting(setting)
    if test_n < 1:
        raise ValueError("test_n must be >= 1.")
    X = draw_test_covariates(setting, test_n, seed) if X is None else X
    rec = pi.recommend(X) if isinstance(pi, DecisionList) else \
        np.asarray(pi, dtype=int)
    return _value_of(rec, setting, X)


def best_constant_value(setting, test_n=100000, seed=0, X=None):
    """Value of the best single-treatment regime."""
    setting = get_setting(setting)
    X = draw_test_covariates(setting, test_n, seed) if X is None else X
    return float(np.max(mean_outcome(setting, X).mean(axis=0)))


def selection_rates(used, setting):
    """
    True and false positive rates of a covariate selection.

    Args:
        used (set): Zero-based covariates the estimate uses.
        setting (SimSetting): Defines the signal covariates.

    Returns:
        (float, float) TPR and FPR.
    """
    used = set(used)
    tpr = len(used & set(setting.signals)) / float(len(setting.signals))
    noise = setting.noise
    fpr = len(used & set(noise)) / float(len(noise)) if noise else 0.0
    return tpr, fpr


def q_linear(data, spec):
    """
    Linear Q-learning: recommend the arm with the largest fitted mean.

    Args:
        data (Dataset): Training data.
        spec (OutcomeSpec): The outcome model.

    Returns:
        (FittedOutcome, callable) The fit and X -> recommendations.
    """
    outcome = fit_outcome(data, spec)

    def recommend(X):
        return np.argmax(outcome.linear_predictor(X), axis=1)

    return outcome, recommend


@dataclass
class StudyMetrics:
    """
    Monte Carlo averages for one estimator on one setting.

    Args:
        setting (str), estimator (str), p (int), n (int), outcome_kind (str):
            What was studied.
        reps (int): Replicates requested.
        n_failed (int): Replicates whose fit failed.
        value (float): Mean true value of the estimated regimes.
        value_se (float): Monte Carlo standard error of value.
        cost (float): Mean expected measurement cost.
        tpr, fpr (float): Mean variable selection rates.
        loss (float): Optimal value minus value.
        pr_best (float): Mean agreement with the optimal regime.
        optimal_value (float): Value of the optimal regime.
        corrected_value (float): Mean bias-corrected estimate (coverage
            studies only).
        plain_coverage, corrected_coverage (float): Interval coverage of the
            true value (coverage studies only).
    """
    setting: str
    estimator: str
    p: int
    n: int
    outcome_kind: str
    reps: int
    n_failed: int
    value: float
    value_se: float
    cost: float
    tpr: float
    fpr: float
    loss: float
    pr_best: float
    optimal_value: float
    corrected_value: float = None
    plain_coverage: float = None
    corrected_coverage: float = None

    def to_dict(self):
        return dict(self.__dict__)


def _mean(values):
    return math.fsum(values) / len(values)


def _learner(seed, learner_kwargs):
    settings = dict(STUDY_DEFAULTS)
    settings.update(learner_kwargs or {})
    settings.setdefault("seed", seed)
    return RegimeLearner(**settings)


def _study_replicate(setting, rep, n, X_test, estimators, seed, coverage,
                     n_bootstraps, learner_kwargs):
    """
    One replicate of a study. Meant to be run in parallel in combination
    with joblib's delayed and Parallel utilities.
    """
    data = generate(setting, n, seed, rep)
    learner = _learner(seed, learner_kwargs)
    opt = optimal_actions(setting, X_test)
    out = {"rep": rep, "failed": False}
    try:
        if "decision-list" in estimators:
            fit = learner.fit(data)
            rec = fit.regime.recommend(X_test)
            tpr, fpr = selection_rates(fit.regime.covariates(), setting)
            row = {"value": _value_of(rec, setting, X_test),
                   "cost": empirical_cost(fit.regime, X_test),
                   "tpr": tpr, "fpr": fpr,
                   "pr_best": float(np.mean(rec == opt))}
            if coverage:
                report = learner.evaluate(fit, n_bootstraps=n_bootstraps,
                                          seed=seed * 100003 + rep)
                v = row["value"]
                row["corrected_value"] = report.corrected
                row["plain_covered"] = float(
                    report.plain_interval[0] <= v <= report.plain_interval[1])
                row["corrected_covered"] = float(
                    report.interval[0] <= v <= report.interval[1])
            out["decision-list"] = row
        if "q-linear" in estimators:
            outcome, recommend = q_linear(data, learner.outcome_spec())
            rec = recommend(X_test)
            used = outcome.selected_covariates()
            tpr, fpr = selection_rates(used, setting)
            out["q-linear"] = {"value": _value_of(rec, setting, X_test),
                               "cost": float(len(used)),
                               "tpr": tpr, "fpr": fpr,
                               "pr_best": float(np.mean(rec == opt))}
    except (FitError, BootstrapError) as e:
        return {"rep": rep, "failed": True, "reason": str(e)}
    return out


def _check_failures(results, reps, what):
    failed = [r for r in results if r["failed"]]
    for r in failed:
        logger.warning("{} replicate {} failed: {}".format(what, r["rep"],
                                                           r["reason"]))
    if len(failed) > MAX_FAILURE_FRACTION * reps:
        raise StudyError("{} of {} replicates of the {} failed"
                         "".format(len(failed), reps, what))
    return [r for r in results if not r["failed"]], len(failed)


def run_study(setting, reps=100, estimator="decision-list", n=None,
              p=None, outcome_kind=None, test_n=100000, seed=0, n_jobs=1,
              coverage=False, n_bootstraps=200, learner_kwargs=None):
    """
    Monte Carlo study of one setting.

    Every replicate draws a training set, fits the estimators, and scores
    them on a shared test draw using the known conditional means.

    Args:
        setting (SimSetting or str): The model.
        reps (int): Replicates.
        estimator (str): "decision-list", "q-linear" or "both".
        n (int): Training size; the setting default if None.
        p (int), outcome_kind (str): Override the setting's options.
        test_n (int): Test draws.
        seed (int): Run seed; replicate r uses the stream (seed, r).
        n_jobs (int): joblib workers over replicates.
        coverage (bool): Also bootstrap each decision-list fit and record
            interval coverage of the true value.
        n_bootstraps (int): Replicates per bootstrap when coverage is on.
        learner_kwargs (dict): RegimeLearner overrides.

    Returns:
        ([StudyMetrics]) One entry per estimator.
    """
    if reps < 1:
        raise ValueError("A study needs at least one replicate.")
    base = get_setting(setting)
    setting = base.with_options(p, outcome_kind) if (p or outcome_kind) \
        else base
    estimators = ESTIMATORS if estimator == "both" else (estimator,)
    for e in estimators:
        if e not in ESTIMATORS:
            raise ValueError("Unknown estimator {}; choose from {} or 'both'"
                             "".format(e, ESTIMATORS))
    n = setting.default_n if n is None else int(n)
    X_test = draw_test_covariates(setting, test_n, seed)
    optimal = _value_of(optimal_actions(setting, X_test), setting, X_test)

    logger.info("Study: setting {} ({}, p={}, n={}), {} replicates, "
                "estimators {}".format(setting.id, setting.outcome_kind,
                                       setting.p, n, reps, estimators))
    results = Parallel(n_jobs=n_jobs)(
        delayed(_study_replicate)(setting, rep, n, X_test, estimators, seed,
                                  coverage, n_bootstraps, learner_kwargs)
        for rep in range(reps))
    kept, n_failed = _check_failures(results, reps, "study")

    metrics = []
    for e in estimators:
        rows = [r[e] for r in kept]
        values = [r["value"] for r in rows]
        value = _mean(values)
        se = float(np.std(values, ddof=1) / np.sqrt(len(values))) \
            if len(values) > 1 else 0.0
        m = StudyMetrics(
            setting=setting.id, estimator=e, p=setting.p, n=n,
            outcome_kind=setting.outcome_kind, reps=reps, n_failed=n_failed,
            value=value, value_se=se,
            cost=_mean([r["cost"] for r in rows]),
            tpr=_mean([r["tpr"] for r in rows]),
            fpr=_mean([r["fpr"] for r in rows]),
            loss=optimal - value,
            pr_best=_mean([r["pr_best"] for r in rows]),
            optimal_value=optimal)
        if coverage and e == "decision-list":
            m.corrected_value = _mean([r["corrected_value"] for r in rows])
            m.plain_coverage = _mean([r["plain_covered"] for r in rows])
            m.corrected_coverage = _mean([r["corrected_covered"]
                                          for r in rows])
        logger.info("{} on setting {}: value {:.4f} (se {:.4f}), cost "
                    "{:.3f}, TPR {:.2f}, FPR {:.2f}".format(
                        e, setting.id, m.value, m.value_se, m.cost, m.tpr,
                        m.fpr))
        metrics.append(m)
    return metrics


def list_cutoffs(pi):
    """
    The thresholds a list uses, by covariate.

    Args:
        pi (DecisionList): The list.

    Returns:
        (dict) Covariate index -> sorted distinct thresholds.
    """
    out = {}
    for c, _ in pi.clauses:
        for a in c.atoms:
            out.setdefault(a.j, set()).add(a.threshold)
    return {j: sorted(t) for j, t in out.items()}


def has_correct_form(pi, setting):
    """
    Whether a list uses exactly the covariates of the optimal regime with a
    single cutoff on each, the way the optimal list does. Lists that differ
    only in clause order or representation count as correct.
    """
    setting = get_setting(setting)
    cutoffs = list_cutoffs(pi)
    return set(cutoffs) == set(OPTIMAL_CUTOFFS[setting.id]) and \
        all(len(t) == 1 for t in cutoffs.values())


def _consistency_replicate(setting, rep, n, X_test, seed, learner_kwargs):
    data = generate(setting, n, seed, rep)
    settings = dict(learner_kwargs or {})
    settings.setdefault("grid", "percentiles:{}".format(int(math.isqrt(n))))
    learner = _learner(seed, settings)
    try:
        fit = learner.fit(data)
    except FitError as e:
        return {"rep": rep, "failed": True, "reason": str(e)}
    rec = fit.regime.recommend(X_test)
    correct = has_correct_form(fit.regime, setting)
    errors = {}
    if correct:
        found = list_cutoffs(fit.regime)
        errors = {j: (found[j][0] - t) ** 2
                  for j, t in OPTIMAL_CUTOFFS[setting.id].items()}
    return {"rep": rep, "failed": False,
            "value": _value_of(rec, setting, X_test),
            "pr_best": float(np.mean(rec == optimal_actions(setting,
                                                            X_test))),
            "correct": float(correct), "errors": errors}


def consistency_probe(setting="I", n_values=(10000,), reps=100, p=10,
                      outcome_kind="continuous", test_n=100000, seed=0,
                      n_jobs=1, learner_kwargs=None):
    """
    Track how the estimated list approaches the optimal one as n grows.

    The cutoff grid has floor(sqrt(n)) percentiles, so grid resolution does
    not limit the cutoff error at rate 1/n.

    Args:
        setting (str): "I" or "V".
        n_values (tuple): Training sizes.
        reps (int): Replicates per size.
        p (int), outcome_kind (str): Setting options.
        test_n (int): Test draws.
        seed (int): Run seed.
        n_jobs (int): joblib workers.
        learner_kwargs (dict): RegimeLearner overrides.

    Returns:
        ([dict]) One row per n: loss, pr_best, correct, and n * MSE of each
            optimal cutoff over the correct replicates.
    """
    setting = get_setting(setting, p, outcome_kind)
    optimal_regime(setting)
    X_test = draw_test_covariates(setting, test_n, seed)
    optimal = _value_of(optimal_actions(setting, X_test), setting, X_test)
    rows = []
    for n in n_values:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_consistency_replicate)(setting, rep, int(n), X_test,
                                            seed, learner_kwargs)
            for rep in range(reps))
        kept, n_failed = _check_failures(results, reps, "consistency probe")
        row = {"setting": setting.id, "n": int(n), "p": setting.p,
               "outcome_kind": setting.outcome_kind, "reps": reps,
               "n_failed": n_failed,
               "loss": optimal - _mean([r["value"] for r in kept]),
               "pr_best": _mean([r["pr_best"] for r in kept]),
               "correct": _mean([r["correct"] for r in kept])}
        good = [r for r in kept if r["correct"]]
        for k, j in enumerate(sorted(OPTIMAL_CUTOFFS[setting.id]), start=1):
            row["mse{}_n".format(k)] = \
                int(n) * _mean([r["errors"][j] for r in good]) if good \
                else None
        logger.info("Consistency n={}: loss {:.4f}, Pr(best) {:.4f}, "
                    "correct {:.2f}".format(n, row["loss"], row["pr_best"],
                                            row["correct"]))
        rows.append(row)
    return rows


def _alpha_replicate(setting, rep, n, X_test, levels, seed, learner_kwargs):
    data = generate(setting, n, seed, rep)
    learner = _learner(seed, learner_kwargs)
    try:
        fit = learner.fit(data)
    except FitError as e:
        return {"rep": rep, "failed": True, "reason": str(e)}
    recs, rows = [], []
    for level in levels:
        config = SearchConfig(l_max=fit.search_config.l_max,
                              alpha=1.0 - level,
                              min_region=fit.search_config.min_region)
        pi, _ = find_list(data, fit.influence, fit.grid, fit.bins, config)
        if learner.config["mincost"]:
            pi = min_cost_equivalent(pi, data, fit.costs)
        rec = pi.recommend(X_test)
        tpr, fpr = selection_rates(pi.covariates(), setting)
        recs.append(rec)
        rows.append({"value": _value_of(rec, setting, X_test),
                     "cost": empirical_cost(pi, X_test),
                     "tpr": tpr, "fpr": fpr})
    k = len(levels)
    agreement = np.ones((k, k))
    for u in range(k):
        for v in range(u + 1, k):
            agreement[u, v] = agreement[v, u] = float(np.mean(recs[u] ==
                                                              recs[v]))
    return {"rep": rep, "failed": False, "agreement": agreement,
            "levels": rows}


def alpha_sensitivity(setting="I", levels=(0.9, 0.95, 0.99), reps=100,
                      n=None, p=10, outcome_kind="continuous",
                      test_n=100000, seed=0, n_jobs=1, learner_kwargs=None):
    """
    How much the estimated regime depends on the level of the variance gate.

    Each replicate fits the nuisance models once and reruns the list search
    at every gate level 1 - alpha.

    Args:
        setting (str): The model.
        levels (tuple): Gate levels, e.g. (0.9, 0.95, 0.99).
        reps (int): Replicates.
        n (int): Training size; the setting default if None.
        p (int), outcome_kind (str): Setting options.
        test_n (int): Test draws.
        seed (int): Run seed.
        n_jobs (int): joblib workers.
        learner_kwargs (dict): RegimeLearner overrides.

    Returns:
        (dict) The levels, the mean pairwise agreement matrix
            P{pi_u(X) = pi_v(X)}, and mean value, cost, TPR and FPR per level.
    """
    levels = tuple(float(l) for l in levels)
    if len(levels) < 2:
        raise ValueError("Compare at least two gate levels.")
    setting = get_setting(setting, p, outcome_kind)
    n = setting.default_n if n is None else int(n)
    X_test = draw_test_covariates(setting, test_n, seed)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_alpha_replicate)(setting, rep, n, X_test, levels, seed,
                                  learner_kwargs)
        for rep in range(reps))
    kept, n_failed = _check_failures(results, reps, "alpha sensitivity")
    k = len(levels)
    agreement = np.ones((k, k))
    for u in range(k):
        for v in range(u + 1, k):
            agreement[u, v] = agreement[v, u] = \
                _mean([r["agreement"][u, v] for r in kept])
    per_level = []
    for u, level in enumerate(levels):
        rows = [r["levels"][u] for r in kept]
        per_level.append({"level": level,
                          "value": _mean([r["value"] for r in rows]),
                          "cost": _mean([r["cost"] for r in rows]),
                          "tpr": _mean([r["tpr"] for r in rows]),
                          "fpr": _mean([r["fpr"] for r in rows])})
    logger.info("Gate-level agreement on setting {}: min {:.4f}"
                "".format(setting.id, float(agreement.min())))
    return {"setting": setting.id, "p": setting.p, "n": n,
            "outcome_kind": setting.outcome_kind, "reps": reps,
            "n_failed": n_failed, "levels": list(levels),
            "agreement": agreement.tolist(), "per_level": per_level}
