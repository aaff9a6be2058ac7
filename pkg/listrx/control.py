"""
A class to configure, run, and summarize regime estimation: nuisance fits,
list search, minimal-cost rewriting and value inference on one dataset.
"""
from dataclasses import dataclass, field

import numpy as np

import listrx
from listrx.data import build_grid, bin_covariates, parse_grid_policy
from listrx.models import PropensitySpec, OutcomeSpec, FittedModels, \
    fit_propensity, fit_outcome, PROPENSITY_KINDS, OUTCOME_KINDS, PENALTIES
from listrx.value import InfluenceRecord
from listrx.search import SearchConfig, SearchTrace, find_list
from listrx.costmin import min_cost_equivalent, sample_equivalence_check
from listrx.regime import DecisionList, CostModel, empirical_cost
from listrx.inference import BootstrapConfig, bootstrap_corrected_value, \
    plugin_report
from listrx.utils import get_logger, get_default_config, set_log_level

__author__ = "The listrx developers"

POSITIVE_INTS = ("n_lambdas", "cv_folds", "max_iter", "n_bootstraps",
                 "cd_max_sweeps", "threads")
NONNEGATIVE_INTS = ("l_max", "min_region", "max_halvings", "seed")
POSITIVE_FLOATS = ("tol", "cd_tol")
UNIT_INTERVAL = ("propensity_floor", "lambda_ratio", "alpha", "level")
BOOLEANS = ("mincost", "refit_cv")


@dataclass(eq=False)
class RegimeFit:
    """
    Everything one fit produced.

    Args:
        data (Dataset): The training data.
        grid (CutoffGrid): Candidate cutoffs.
        bins (BinIndex): Bin codes of the data under grid.
        fits (FittedModels): Propensity and outcome fits.
        influence (InfluenceRecord): Pseudo-outcomes and influence terms.
        searched (DecisionList): The list the search picked.
        trace (SearchTrace): The search record.
        regime (DecisionList): The reported list (the minimal-cost rewrite of
            searched, or searched itself).
        value (float): Estimated value of regime.
        variance (float): Plug-in variance of value.
        costs (CostModel): Covariate costs.
        search_config (SearchConfig): Search settings used.
        config (dict): The fully resolved configuration.
    """
    data: object
    grid: object
    bins: object
    fits: FittedModels
    influence: InfluenceRecord
    searched: DecisionList
    trace: SearchTrace
    regime: DecisionList
    value: float
    variance: float
    costs: CostModel
    search_config: SearchConfig
    config: dict = field(default_factory=dict)

    @property
    def sigma(self):
        return float(np.sqrt(self.variance))

    @property
    def cost(self):
        return empirical_cost(self.regime, self.data, self.costs)

    def text(self):
        return self.regime.render(self.data.covariate_names,
                                  self.data.treatment_labels)

    def to_dict(self):
        """
        The fit as a JSON-ready document, with the resolved configuration and
        the package version for the audit trail.
        """
        names, labels = self.data.covariate_names, self.data.treatment_labels
        return {"version": listrx.__version__,
                "config": dict(self.config),
                "regime": self.regime.to_dict(names, labels),
                "text": self.text(),
                "searched": self.searched.to_dict(names, labels),
                "value": self.value,
                "sigma": self.sigma,
                "cost": self.cost,
                "searched_cost": empirical_cost(self.searched, self.data,
                                                self.costs),
                "grid": self.grid.to_dict(names),
                "grid_warnings": list(self.grid.warnings),
                "models": {"propensity": self.fits.propensity.to_dict(),
                           "outcome": self.fits.outcome.to_dict()}}


class RegimeLearner:
    """
    A class for configuring and running decision-list regime estimation.

    Args:
        **kwargs: Configuration overrides, passed to configure.
    """

    def __init__(self, **kwargs):
        self.logger = get_logger("listrx")
        self.config = get_default_config()
        self.is_configured = False
        if kwargs:
            self.configure(**kwargs)

    def configure(self, **kwargs):
        """
        Set up the estimation config. Defaults can be found in defaults.yaml.

        Args:
            **kwargs: Keyword arguments for the pipeline. A full list of
                possible kwargs is given below:

                Cutoff grid:
                grid (str): "percentiles:k" or "file:/path/to/cutoffs".

                Propensity model:
                propensity (str): "multinomial-logistic", "sample-proportion"
                    or "fixed".
                propensity_floor (float): Lower bound applied to predicted
                    probabilities.
                propensity_probabilities (list): Known arm probabilities for
                    the "fixed" model.

                Outcome model:
                outcome_model (str): "glm", or "null" for mu == 0.
                penalty (str): "lasso" or "none".
                n_lambdas, lambda_ratio, cv_folds: The LASSO lambda grid and
                    its cross-validation.
                max_iter, max_halvings, tol, cd_tol, cd_max_sweeps: Solver
                    controls shared by all fits.

                List search:
                l_max (int): Maximum number of clauses.
                alpha (float): One-sided level of the variance gate.
                min_region (int): Minimum subjects on each side of a clause.
                mincost (bool): Replace the list by its minimal-cost
                    equivalent.

                Inference:
                n_bootstraps (int), level (float), refit_cv (bool),
                max_drop_fraction (float): Weighted bootstrap settings.

                Run control:
                seed (int), threads (int), log_level (str).

        Returns:
            None
        """
        config = dict(self.config)
        for kw in kwargs.keys():
            if kw not in config:
                raise KeyError(
                    "{} not a valid argument for configure. Choose from: {}"
                    "".format(kw, list(config.keys())))
            config[kw] = kwargs[kw]
        self._validate(config)
        self.config = config
        set_log_level(config["log_level"])
        self.is_configured = True
        self.logger.debug("listrx configuration: {}".format(config))

    @staticmethod
    def _validate(config):
        for k in POSITIVE_INTS:
            if int(config[k]) < 1:
                raise ValueError("{} must be a positive integer, got {}"
                                 "".format(k, config[k]))
        for k in NONNEGATIVE_INTS:
            if int(config[k]) < 0:
                raise ValueError("{} must be >= 0, got {}".format(k,
                                                                 config[k]))
        for k in POSITIVE_FLOATS:
            if not float(config[k]) > 0:
                raise ValueError("{} must be positive, got {}"
                                 "".format(k, config[k]))
        for k in UNIT_INTERVAL:
            if not 0 < float(config[k]) < 1:
                raise ValueError("{} must be in (0, 1), got {}"
                                 "".format(k, config[k]))
        for k in BOOLEANS:
            if not isinstance(config[k], bool):
                raise ValueError("{} must be True or False, got {}"
                                 "".format(k, config[k]))
        if not 0 <= float(config["max_drop_fraction"]) <= 1:
            raise ValueError("max_drop_fraction must be in [0, 1].")
        parse_grid_policy(config["grid"])
        choices = (("propensity", PROPENSITY_KINDS),
                   ("outcome_model", OUTCOME_KINDS),
                   ("penalty", PENALTIES))
        for k, allowed in choices:
            if config[k] not in allowed:
                raise ValueError("Invalid {}: {}. Choose from {}."
                                 "".format(k, config[k], allowed))
        if config["propensity"] == "fixed" and \
                not config["propensity_probabilities"]:
            raise ValueError("The fixed propensity model needs "
                             "propensity_probabilities.")
        if str(config["log_level"]).upper() not in \
                ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError("Unknown log level {}".format(config["log_level"]))

    def reset(self):
        """
        Restore the default configuration.

        Returns:
            None
        """
        self.config = get_default_config()
        self.is_configured = False
        self.logger.info("listrx configuration reset to defaults.")

    def propensity_spec(self):
        c = self.config
        probs = c["propensity_probabilities"]
        return PropensitySpec(kind=c["propensity"],
                              probabilities=tuple(probs) if probs else None,
                              floor=c["propensity_floor"],
                              max_iter=c["max_iter"],
                              max_halvings=c["max_halvings"], tol=c["tol"])

    def outcome_spec(self):
        c = self.config
        return OutcomeSpec(kind=c["outcome_model"], penalty=c["penalty"],
                           n_lambdas=c["n_lambdas"],
                           lambda_ratio=c["lambda_ratio"],
                           cv_folds=c["cv_folds"], seed=c["seed"],
                           max_iter=c["max_iter"],
                           max_halvings=c["max_halvings"], tol=c["tol"],
                           cd_tol=c["cd_tol"],
                           cd_max_sweeps=c["cd_max_sweeps"])

    def search_config(self):
        c = self.config
        return SearchConfig(l_max=c["l_max"], alpha=c["alpha"],
                            min_region=c["min_region"])

    def bootstrap_config(self, **kwargs):
        c = self.config
        settings = dict(n_bootstraps=c["n_bootstraps"], seed=c["seed"],
                        level=c["level"], refit_cv=c["refit_cv"],
                        max_drop_fraction=c["max_drop_fraction"],
                        n_jobs=c["threads"])
        settings.update(kwargs)
        return BootstrapConfig(**settings)

    def fit_models(self, data, weights=None):
        """
        Fit both nuisance models.

        Args:
            data (Dataset): The data.
            weights (np.ndarray): Subject weights; None means 1.

        Returns:
            (FittedModels)
        """
        prop = fit_propensity(data, self.propensity_spec(), weights)
        out = fit_outcome(data, self.outcome_spec(), weights)
        self.logger.info("Nuisance models fit: propensity {} ({} params), "
                         "outcome {}/{} ({} params)"
                         "".format(prop.spec.kind, prop.n_params,
                                   out.spec.kind, out.spec.penalty,
                                   out.n_params))
        return FittedModels(prop, out)

    def fit(self, data, grid=None, costs=None):
        """
        Estimate a decision-list regime from data.

        Args:
            data (Dataset): The data.
            grid (CutoffGrid): Candidate cutoffs; built from the configured
                policy if None.
            costs (CostModel): Covariate costs for the minimal-cost rewrite;
                unit costs if None.

        Returns:
            (RegimeFit) The fit.
        """
        grid = grid if grid is not None else build_grid(data,
                                                        self.config["grid"])
        bins = bin_covariates(data, grid)
        costs = costs or CostModel.uniform(data.p)
        fits = self.fit_models(data)
        record = InfluenceRecord(data, fits)
        search_config = self.search_config()
        searched, trace = find_list(data, record, grid, bins, search_config)
        regime = searched
        if self.config["mincost"]:
            regime = min_cost_equivalent(searched, data, costs)
            if not sample_equivalence_check(regime, searched, data):
                raise RuntimeError("The minimal-cost rewrite changed a "
                                   "recommendation.")
        rec = regime.recommend(data.X)
        fit = RegimeFit(data=data, grid=grid, bins=bins, fits=fits,
                        influence=record, searched=searched, trace=trace,
                        regime=regime, value=record.value(rec),
                        variance=record.variance(rec), costs=costs,
                        search_config=search_config,
                        config=dict(self.config))
        self.logger.info("Fitted regime (value {:.4f}, cost {:.3f}):\n{}"
                         "".format(fit.value, fit.cost, fit.text()))
        return fit

    def evaluate(self, fit, regime=None, **kwargs):
        """
        Value report for the fitted regime (bootstrap bias-corrected) or for
        any other list (plug-in interval, no correction).

        Args:
            fit (RegimeFit): A fit on the data to evaluate on.
            regime (DecisionList): A list to evaluate instead of fit.regime.
            **kwargs: BootstrapConfig overrides.

        Returns:
            (ValueReport)
        """
        config = self.bootstrap_config(**kwargs)
        if regime is None:
            return bootstrap_corrected_value(fit, config)
        transform = config.resolve_transform(fit.data.outcome_kind)
        return plugin_report(fit.influence, regime.recommend(fit.data.X),
                             config.level, transform)

    def summarize(self, fit):
        """
        Returns stats about a fit.

        Args:
            fit (RegimeFit): The fit.

        Returns:
            fmtstr (str): The formatted information, to print.
        """
        data = fit.data
        counts = ", ".join("{}: {}".format(l, c) for l, c in
                           zip(data.treatment_labels, data.arm_counts()))
        names = [data.covariate_names[j] for j in
                 sorted(fit.regime.covariates())]
        fmtstr = "\nData: {} subjects, {} covariates, {} treatments ({})\n" \
                 "Outcome: {} ({})\n" \
                 "Search: {} nodes, {} finished lists\n" \
                 "Regime ({} clauses, covariates used: {}):\n{}\n" \
                 "Estimated value: {:.4f} (se {:.4f})\n" \
                 "Expected measurement cost: {:.4f} (before rewrite {:.4f})\n" \
                 "".format(data.n, data.p, data.m, counts, data.outcome_name,
                           data.outcome_kind, len(fit.trace.nodes),
                           len(fit.trace.finals), len(fit.regime),
                           names or "none", fit.text(), fit.value, fit.sigma,
                           fit.cost, empirical_cost(fit.searched, data,
                                                    fit.costs))
        return fmtstr
