"""
Bootstrap bias correction of the estimated value of a fitted regime, and
prediction intervals.

The value of the list the search picks is optimistic, since the list was
chosen to maximize that same estimate. Each bootstrap replicate redraws
exponential subject weights, refits both nuisance models and the list search
on the weighted data, and measures how much the replicate's own estimate of
its list exceeds the original estimate of that list. The average excess is
subtracted from the original value.
"""
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit, logit
from scipy.stats import norm

from listrx.models import FittedModels, fit_propensity, fit_outcome
from listrx.value import InfluenceRecord
from listrx.search import find_list
from listrx.utils import get_logger, rng_stream, FitError, BootstrapError

__author__ = "The listrx developers"

logger = get_logger("listrx.inference")

TRANSFORMS = ("identity", "logit")
LOGIT_CLIP = 1e-6
BOOTSTRAP_STREAM = 101


@dataclass(frozen=True)
class BootstrapConfig:
    """
    Settings of the weighted bootstrap.

    Args:
        n_bootstraps (int): Number of replicates B.
        seed (int): Replicate b draws its weights from the stream (seed, b).
        level (float): Coverage of the prediction interval.
        transform (str): "identity" or "logit"; None picks logit for binary
            outcomes and identity otherwise.
        refit_cv (bool): Rerun the LASSO cross-validation in every replicate
            instead of reusing the original lambda.
        max_drop_fraction (float): Fraction of replicates allowed to fail.
        n_jobs (int): joblib workers.
        unit_weights (bool): Use W = 1 in every replicate. Each replicate
            then reproduces the original fit exactly.
    """
    n_bootstraps: int = 200
    seed: int = 0
    level: float = 0.95
    transform: str = None
    refit_cv: bool = False
    max_drop_fraction: float = 0.1
    n_jobs: int = 1
    unit_weights: bool = False

    def __post_init__(self):
        if int(self.n_bootstraps) < 1:
            raise ValueError("The bootstrap needs at least one replicate.")
        if not 0 < self.level < 1:
            raise ValueError("The interval level must be in (0, 1), got {}"
                             "".format(self.level))
        if self.transform is not None and self.transform not in TRANSFORMS:
            raise ValueError("Transform must be one of {}, not {}"
                             "".format(TRANSFORMS, self.transform))
        if not 0 <= self.max_drop_fraction <= 1:
            raise ValueError("max_drop_fraction must be in [0, 1].")

    def resolve_transform(self, outcome_kind):
        if self.transform is None:
            return "logit" if outcome_kind == "binary" else "identity"
        if self.transform == "logit" and outcome_kind != "binary":
            raise ValueError("The logit transform is only for binary "
                             "outcomes.")
        return self.transform


@dataclass
class ValueReport:
    """
    Estimated value of a regime with its bootstrap bias correction.

    Args:
        value (float): R(pi) on the original data.
        bias (float): Estimated optimism, value - corrected.
        corrected (float): Bias-corrected value.
        sigma (float): Plug-in standard error of value.
        level (float): Coverage of the intervals.
        interval (tuple): Prediction interval about the corrected value.
        plain_interval (tuple): The same interval about the uncorrected value.
        transform (str): Scale the correction and intervals were built on.
        sigma_scale (float): sigma on that scale.
        n_bootstraps (int): Replicates requested (0 for plug-in reports).
        n_dropped (int): Replicates whose weighted fit failed.
        replicates (list): Per-replicate records.
    """
    value: float
    bias: float
    corrected: float
    sigma: float
    level: float
    interval: tuple
    plain_interval: tuple
    transform: str = "identity"
    sigma_scale: float = None
    n_bootstraps: int = 0
    n_dropped: int = 0
    replicates: list = field(default_factory=list)

    def __post_init__(self):
        if self.sigma_scale is None:
            self.sigma_scale = self.sigma

    def to_dict(self):
        return {"value": self.value, "bias": self.bias,
                "corrected": self.corrected, "sigma": self.sigma,
                "level": self.level, "interval": list(self.interval),
                "plain_interval": list(self.plain_interval),
                "transform": self.transform,
                "sigma_scale": self.sigma_scale,
                "n_bootstraps": self.n_bootstraps,
                "n_dropped": self.n_dropped,
                "replicates": list(self.replicates)}


def _clip(v):
    return float(np.clip(v, LOGIT_CLIP, 1.0 - LOGIT_CLIP))


def _to_scale(v, transform):
    return float(logit(_clip(v))) if transform == "logit" else float(v)


def _from_scale(v, transform):
    return float(expit(v)) if transform == "logit" else float(v)


def _scale_sigma(value, sigma, transform):
    # delta method on the logit scale
    if transform == "logit":
        v = _clip(value)
        return float(sigma / (v * (1.0 - v)))
    return float(sigma)


def normal_interval(center, sigma, level=0.95, transform="identity"):
    """
    Symmetric normal interval on the transform scale, mapped back.

    Args:
        center (float): Interval center on the original scale.
        sigma (float): Standard error on the transform scale.
        level (float): Coverage.
        transform (str): "identity" or "logit".

    Returns:
        (float, float) Lower and upper endpoints on the original scale.
    """
    if not 0 < level < 1:
        raise ValueError("The interval level must be in (0, 1).")
    if sigma < 0:
        raise ValueError("The standard error must be nonnegative.")
    z = norm.ppf(0.5 + level / 2.0)
    c = _to_scale(center, transform)
    if sigma == 0 and transform == "identity":
        return float(center), float(center)
    return _from_scale(c - z * sigma, transform), \
        _from_scale(c + z * sigma, transform)


def prediction_interval(report, level=None):
    """
    The prediction interval of a report at a (possibly new) coverage level.

    Args:
        report (ValueReport): The report.
        level (float): Coverage; the report's level if None.

    Returns:
        (float, float) The interval about the corrected value.
    """
    level = report.level if level is None else level
    return normal_interval(report.corrected, report.sigma_scale, level,
                           report.transform)


def plugin_report(record, rec, level=0.95, transform="identity"):
    """
    Value report without bias correction for a fixed recommendation vector.

    Args:
        record (InfluenceRecord): Influence terms of the fit.
        rec (np.ndarray): Treatment codes the regime assigns to the subjects.
        level (float): Coverage.
        transform (str): "identity" or "logit".

    Returns:
        (ValueReport)
    """
    value = record.value(rec)
    sigma = float(np.sqrt(record.variance(rec)))
    sigma_scale = _scale_sigma(value, sigma, transform)
    interval = normal_interval(value, sigma_scale, level, transform)
    return ValueReport(value, 0.0, value, sigma, level, interval, interval,
                       transform, sigma_scale)


def _replicate(fit, b, config, lam, search_config):
    """
    One weighted refit of the whole pipeline. Meant to be run in parallel in
    combination with joblib's delayed and Parallel utilities.
    """
    data = fit.data
    if config.unit_weights:
        w = np.ones(data.n)
    else:
        w = rng_stream(config.seed, BOOTSTRAP_STREAM, b) \
            .standard_exponential(data.n)
    try:
        prop = fit_propensity(data, fit.fits.propensity.spec, w)
        out = fit_outcome(data, fit.fits.outcome.spec, w, lam=lam)
        record = InfluenceRecord(data, FittedModels(prop, out), w)
        pi_b, _ = find_list(data, record, fit.grid, fit.bins, search_config)
    except FitError as e:
        return {"b": b, "dropped": True, "reason": str(e)}
    rec = pi_b.recommend(data.X)
    return {"b": b, "dropped": False, "replicate_value": record.value(rec),
            "original_value": fit.influence.value(rec),
            "length": len(pi_b)}


def bootstrap_corrected_value(fit, config=None, search_config=None):
    """
    Bias-corrected value of a fitted regime and its prediction interval.

    Replicate b draws W_i ~ Exp(1), solves the W-weighted propensity and
    outcome score equations, rebuilds the pseudo-outcomes with weights W and
    reruns the list search on the original cutoff grid. The optimism is
        bias = mean_b [R*_b(pi*_b) - R(pi*_b)],
    computed on the logit scale for binary outcomes.

    Args:
        fit (RegimeFit): The fitted regime with its data, grid and fits.
        config (BootstrapConfig): Bootstrap settings.
        search_config (SearchConfig): List search settings; those of the fit
            if None.

    Returns:
        (ValueReport) The report.
    """
    config = config or BootstrapConfig()
    search_config = search_config or fit.search_config
    data = fit.data
    transform = config.resolve_transform(data.outcome_kind)
    lam = None if config.refit_cv else fit.fits.outcome.selected_lambda
    B = int(config.n_bootstraps)

    logger.info("Running {} bootstrap replicates on {} workers"
                "".format(B, config.n_jobs))
    replicates = Parallel(n_jobs=config.n_jobs)(
        delayed(_replicate)(fit, b, config, lam, search_config)
        for b in range(B))

    dropped = [r for r in replicates if r["dropped"]]
    for r in dropped:
        logger.warning("Bootstrap replicate {} dropped: {}"
                       "".format(r["b"], r["reason"]))
    if len(dropped) > config.max_drop_fraction * B or len(dropped) == B:
        raise BootstrapError(
            "{} of {} bootstrap replicates failed (allowed fraction {})"
            "".format(len(dropped), B, config.max_drop_fraction))
    kept = [r for r in replicates if not r["dropped"]]

    value = fit.influence.value(fit.regime.recommend(data.X))
    sigma = float(np.sqrt(fit.variance))
    excess = [_to_scale(r["replicate_value"], transform) -
              _to_scale(r["original_value"], transform) for r in kept]
    bias_scale = float(np.mean(excess))
    corrected = _from_scale(_to_scale(value, transform) - bias_scale,
                            transform)
    if transform == "identity":
        corrected = value - bias_scale
    sigma_scale = _scale_sigma(value, sigma, transform)
    report = ValueReport(
        value=value, bias=value - corrected, corrected=corrected,
        sigma=sigma, level=config.level, interval=None,
        plain_interval=normal_interval(value, sigma_scale, config.level,
                                       transform),
        transform=transform, sigma_scale=sigma_scale, n_bootstraps=B,
        n_dropped=len(dropped), replicates=replicates)
    report.interval = prediction_interval(report)
    logger.info("Bootstrap bias {:.6f}: value {:.6f} -> {:.6f}, interval "
                "[{:.6f}, {:.6f}]".format(report.bias, value, corrected,
                                          *report.interval))
    return report
