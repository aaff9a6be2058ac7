"""
Doubly robust (AIPW) pseudo-outcomes, the value estimator, and plug-in
influence-function variances for values and value differences.
"""
import functools
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from listrx.models import FittedModels, subject_weights, feature_map
from listrx.utils import SingularHessianError

__author__ = "The listrx developers"


@functools.total_ordering
class _Vacuous(object):
    """
    Value of a list with a clause that catches nobody. Compares below every
    real number and equal only to itself.
    """
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(_Vacuous, cls).__new__(cls)
        return cls._instance

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return other is not self

    def __hash__(self):
        return hash("listrx.VACUOUS")

    def __repr__(self):
        return "VACUOUS"

    def __reduce__(self):
        return (_Vacuous, ())


VACUOUS = _Vacuous()


@dataclass(frozen=True, eq=False)
class PseudoOutcomeMatrix:
    """
    xi[i, a] = W_i * [1{A_i = a} / omega(X_i, a) * (Y_i - mu(X_i, a))
                      + mu(X_i, a)]
    with omega floored. raw holds the unweighted matrix; weights is W.
    """
    xi: np.ndarray
    raw: np.ndarray
    omega: np.ndarray
    mu: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.xi.shape[0]

    @property
    def m(self):
        return self.xi.shape[1]


def pseudo_outcomes(data, propensity, outcome, weights=None):
    """
    The n x m matrix of AIPW pseudo-outcomes.

    Args:
        data (Dataset): The data.
        propensity (FittedPropensity): The propensity fit.
        outcome (FittedOutcome): The outcome fit.
        weights (np.ndarray): Subject weights W (bootstrap); None means 1.

    Returns:
        (PseudoOutcomeMatrix)
    """
    w = subject_weights(weights, data.n)
    omega = propensity.predict(data.X, clip=True)
    mu = outcome.predict(data.X)
    observed = np.eye(data.m)[data.A]
    raw = observed / omega * (data.Y[:, None] - mu) + mu
    return PseudoOutcomeMatrix(w[:, None] * raw, raw, omega, mu, w)


def _as_matrix(xi):
    return xi.xi if isinstance(xi, PseudoOutcomeMatrix) else \
        np.asarray(xi, dtype=float)


def value_of_recommendations(xi, rec):
    """Mean over subjects of xi[i, rec[i]]."""
    xi = _as_matrix(xi)
    return float(np.mean(xi[np.arange(xi.shape[0]), rec]))


def value(xi, pi, data):
    """
    Estimated value of a decision list: mean of xi[i, pi(X_i)].

    Args:
        xi (PseudoOutcomeMatrix or np.ndarray): Pseudo-outcomes.
        pi (DecisionList): The list.
        data (Dataset or np.ndarray): Subjects (or their covariates).

    Returns:
        (float or VACUOUS) VACUOUS when a clause catches no subject.
    """
    X = getattr(data, "X", data)
    regions = pi.regions(X)
    if len(pi) and np.any(np.bincount(regions, minlength=len(pi) + 1)[1:]
                          == 0):
        return VACUOUS
    return value_of_recommendations(xi, pi.recommend(X))


def _solve(H, S, what):
    if H.size == 0:
        return np.zeros_like(S)
    try:
        return linalg.solve(H, S.T, assume_a="sym").T
    except (linalg.LinAlgError, ValueError):
        raise SingularHessianError(
            "The averaged negative {} Hessian is singular.".format(what))


class InfluenceRecord(object):
    """
    Per-subject influence terms shared by every regime queried on one fit.

    phi_gamma and phi_beta are the influence functions of the nuisance
    parameters. gamma_terms[i, a] and beta_terms[i, a] are the derivatives of
    xi[i, a] with respect to gamma and to beta_a; averaging them over the
    subjects a regime sends to each arm gives the correction vectors.

    Args:
        data (Dataset): The data.
        fits (FittedModels): Propensity and outcome fits.
        weights (np.ndarray): Subject weights W; None means 1.
    """

    def __init__(self, data, fits, weights=None):
        self.data = data
        self.fits = fits
        self.weights = subject_weights(weights, data.n)
        prop, out = fits.propensity, fits.outcome
        self.xi = pseudo_outcomes(data, prop, out, self.weights)
        n, m = data.n, data.m
        w = self.weights
        observed = np.eye(m)[data.A]
        omega, mu = self.xi.omega, self.xi.mu

        s_gamma, h_gamma = prop.score_contributions(data, w)
        self.phi_gamma = _solve(h_gamma, s_gamma, "propensity")
        resid = observed * (data.Y[:, None] - mu) / omega ** 2
        self.gamma_terms = -(w[:, None] * resid)[:, :, None] * \
            prop.dprob(data.X, clip=True)

        s_beta, h_beta = out.score_contributions(data, w)
        r = out.r
        self.phi_beta = np.zeros((n, m, r))
        self.beta_terms = np.zeros((n, m, r))
        if r:
            for a, H in enumerate(out.arm_hessians()):
                block = slice(a * r, (a + 1) * r)
                self.phi_beta[:, a] = _solve(H, s_beta[:, block], "outcome")
            Z = feature_map(data.X, out.spec.features)
            factor = w[:, None] * (1.0 - observed / omega) * out.dmean(data.X)
            self.beta_terms = factor[:, :, None] * Z[:, None, :]

    @property
    def n(self):
        return self.data.n

    def value(self, rec):
        return value_of_recommendations(self.xi, rec)

    def corrections(self, rec):
        """
        The gamma and beta correction vectors for a recommendation vector.

        Args:
            rec (np.ndarray): Length-n treatment codes.

        Returns:
            (np.ndarray, np.ndarray) Length-d_gamma vector and m x r matrix.
        """
        rows = np.arange(self.n)
        c_gamma = self.gamma_terms[rows, rec].mean(axis=0)
        chosen = np.eye(self.data.m)[rec]
        c_beta = np.einsum("ia,iak->ak", chosen, self.beta_terms) / self.n
        return c_gamma, c_beta

    def phi(self, rec):
        """
        Plug-in influence function of the value of a recommendation vector.

        Args:
            rec (np.ndarray): Length-n treatment codes.

        Returns:
            (np.ndarray) Length-n influence values, mean zero.
        """
        rows = np.arange(self.n)
        chosen = self.xi.xi[rows, rec]
        c_gamma, c_beta = self.corrections(rec)
        phi = chosen - chosen.mean()
        if c_gamma.size:
            phi = phi + self.phi_gamma @ c_gamma
        if c_beta.size:
            phi = phi + np.einsum("iak,ak->i", self.phi_beta, c_beta)
        return phi

    def variance(self, rec):
        phi = self.phi(rec)
        return float(np.sum(phi ** 2) / self.n ** 2)

    def variance_difference(self, rec1, rec2):
        diff = self.phi(rec1) - self.phi(rec2)
        return float(np.sum(diff ** 2) / self.n ** 2)


def influence_record(data, fits, weights=None):
    """
    Build (or pass through) the influence record for a fit.

    Args:
        data (Dataset): The data.
        fits (FittedModels or InfluenceRecord): The fits.
        weights (np.ndarray): Subject weights.

    Returns:
        (InfluenceRecord)
    """
    if isinstance(fits, InfluenceRecord):
        return fits
    if not isinstance(fits, FittedModels):
        raise TypeError("Expected FittedModels or InfluenceRecord, got {}"
                        "".format(type(fits)))
    return InfluenceRecord(data, fits, weights)


def variance_of_value(pi, data, fits):
    """
    Plug-in variance of the estimated value of a list, n^-2 sum phi_R^2.

    Args:
        pi (DecisionList): The list.
        data (Dataset): The data.
        fits (FittedModels or InfluenceRecord): The fits.

    Returns:
        (float)
    """
    record = influence_record(data, fits)
    return record.variance(pi.recommend(data.X))


def variance_of_difference(pi1, pi2, data, fits):
    """
    Plug-in variance of R(pi1) - R(pi2), n^-2 sum (phi_R1 - phi_R2)^2.

    Args:
        pi1, pi2 (DecisionList): The lists.
        data (Dataset): The data.
        fits (FittedModels or InfluenceRecord): The fits.

    Returns:
        (float)
    """
    record = influence_record(data, fits)
    return record.variance_difference(pi1.recommend(data.X),
                                      pi2.recommend(data.X))
