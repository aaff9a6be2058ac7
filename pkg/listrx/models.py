"""
Nuisance models: the multinomial logistic propensity model and the per-arm
canonical-link outcome model, plain or LASSO-penalized, plus the per-subject
score contributions and averaged negative Hessians the influence functions
need.

All fits accept per-subject weights W; weights=None means W == 1 and runs the
exact same arithmetic, so an all-ones bootstrap replicate reproduces the
original fit bit for bit.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, logsumexp, softmax
from sklearn.model_selection import KFold
from sklearn.preprocessing import StandardScaler

from listrx.utils import get_logger, PropensityFitError, OutcomeFitError, \
    RankDeficiencyError, SingularHessianError

__author__ = "The listrx developers"

PROPENSITY_KINDS = ("multinomial-logistic", "sample-proportion", "fixed")
OUTCOME_KINDS = ("glm", "null")
PENALTIES = ("none", "lasso")
LINKS = ("identity", "logit")
FEATURE_MAPS = ("linear", "intercept")

logger = get_logger("listrx.models")


def subject_weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape[0] != n or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("Subject weights must be {} finite nonnegative "
                         "values.".format(n))
    return w


def feature_map(X, kind):
    """
    The design rows for a feature map.

    Args:
        X (np.ndarray): n x p covariates.
        kind (str): "linear" for (1, x), "intercept" for (1).

    Returns:
        (np.ndarray) n x q design.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    ones = np.ones((X.shape[0], 1))
    if kind == "linear":
        return np.hstack([ones, X])
    elif kind == "intercept":
        return ones
    raise ValueError("Unknown feature map {}; choose from {}"
                     "".format(kind, FEATURE_MAPS))


def _full_rank(Z):
    return Z.shape[0] >= Z.shape[1] and \
        np.linalg.matrix_rank(Z) == Z.shape[1]


def _converged(gnorm, step, beta, tol):
    return gnorm <= tol or \
        np.max(np.abs(step)) <= 1e-12 * (1.0 + np.max(np.abs(beta)))


@dataclass(frozen=True)
class PropensitySpec:
    """
    Propensity model omega(x, a) = P(A = a | X = x).

    Args:
        kind (str): "multinomial-logistic" (u(x) = (1, x)),
            "sample-proportion" (u(x) = 1) or "fixed" (known probabilities).
        probabilities (tuple): For "fixed": a length-m probability vector.
        floor (float): Predictions are floored at this value before any
            division.
        max_iter (int): Newton iterations.
        max_halvings (int): Step-halvings per Newton iteration.
        tol (float): Gradient sup-norm at convergence.
    """
    kind: str = "multinomial-logistic"
    probabilities: tuple = None
    floor: float = 1e-3
    max_iter: int = 100
    max_halvings: int = 30
    tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in PROPENSITY_KINDS:
            raise ValueError("Propensity kind must be one of {}, not {}"
                             "".format(PROPENSITY_KINDS, self.kind))
        if self.kind == "fixed" and self.probabilities is None:
            raise ValueError("Fixed propensities need probabilities.")
        if not 0 < self.floor < 1:
            raise ValueError("The propensity floor must be in (0, 1).")

    @property
    def features(self):
        return "linear" if self.kind == "multinomial-logistic" else "intercept"


@dataclass(frozen=True, eq=False)
class FittedPropensity:
    """
    A fitted propensity model. gamma holds one row of coefficients per
    non-reference arm; the last arm is the reference (eta = 0).
    """
    spec: PropensitySpec
    gamma: np.ndarray
    m: int
    neg_hessian: np.ndarray
    n_iter: int = 0
    loglik: float = float("nan")

    @property
    def n_params(self):
        return self.gamma.size

    def linear_predictor(self, X, gamma=None):
        gamma = self.gamma if gamma is None else gamma
        U = feature_map(X, self.spec.features)
        eta = np.zeros((U.shape[0], self.m))
        eta[:, :self.m - 1] = U @ gamma.T
        return eta

    def predict(self, X, clip=True):
        """
        Propensities omega(x, a) for every row and arm.

        Args:
            X (np.ndarray): n x p covariates.
            clip (bool): Floor the predictions at spec.floor.

        Returns:
            (np.ndarray) n x m probabilities.
        """
        if self.spec.kind == "fixed":
            X = np.asarray(X, dtype=float)
            n = 1 if X.ndim == 1 else X.shape[0]
            probs = np.tile(np.asarray(self.spec.probabilities, dtype=float),
                            (n, 1))
        else:
            probs = softmax(self.linear_predictor(X), axis=1)
        if clip:
            probs = np.maximum(probs, self.spec.floor)
        return probs

    def dprob(self, X, clip=False):
        """
        Derivatives d omega(x, a) / d gamma.

        Args:
            X (np.ndarray): n x p covariates.
            clip (bool): Differentiate the floored predictions, which are
                flat wherever the floor binds.

        Returns:
            (np.ndarray) n x m x n_params, gamma flattened row-major.
        """
        X = np.asarray(X, dtype=float)
        n = 1 if X.ndim == 1 else X.shape[0]
        if self.n_params == 0:
            return np.zeros((n, self.m, 0))
        U = feature_map(X, self.spec.features)
        omega = self.predict(X, clip=False)
        k = self.m - 1
        # d omega_a / d gamma_j = omega_a (1{a = j} - omega_j) u
        mix = omega[:, :, None] * (np.eye(self.m)[None, :, :k] -
                                   omega[:, None, :k])
        if clip:
            mix[omega < self.spec.floor] = 0.0
        return np.einsum("iaj,iq->iajq", mix, U).reshape(n, self.m, -1)

    def score_contributions(self, data, weights=None, params=None):
        """
        Per-subject scores of the propensity log-likelihood and the averaged
        negative Hessian.

        Args:
            data (Dataset): The data the model describes.
            weights (np.ndarray): Subject weights.
            params (np.ndarray): Flattened gamma to evaluate at; default is the
                fitted gamma.

        Returns:
            (np.ndarray, np.ndarray) n x d scores, d x d negative Hessian.
        """
        n = data.n
        if self.n_params == 0:
            return np.zeros((n, 0)), np.zeros((0, 0))
        w = subject_weights(weights, n)
        gamma = self.gamma if params is None else \
            np.asarray(params, dtype=float).reshape(self.gamma.shape)
        U = feature_map(data.X, self.spec.features)
        omega = softmax(self.linear_predictor(data.X, gamma), axis=1)
        resid = np.eye(self.m)[data.A][:, :-1] - omega[:, :-1]
        scores = (w[:, None, None] * resid[:, :, None] *
                  U[:, None, :]).reshape(n, -1)
        return scores, _mnl_neg_hessian(U, omega, w)

    def to_dict(self):
        return {"kind": self.spec.kind, "features": self.spec.features,
                "reference_arm": self.m - 1, "gamma": self.gamma.tolist(),
                "floor": self.spec.floor, "n_iter": self.n_iter}


def _mnl_loglik(U, A, w, gamma, m):
    eta = np.zeros((U.shape[0], m))
    eta[:, :m - 1] = U @ gamma.T
    ll = eta[np.arange(U.shape[0]), A] - logsumexp(eta, axis=1)
    return float(np.sum(w * ll) / U.shape[0])


def _mnl_neg_hessian(U, omega, w):
    n, q = U.shape
    k = omega.shape[1] - 1
    om = omega[:, :k]
    mix = w[:, None, None] * (np.einsum("ia,ab->iab", om, np.eye(k)) -
                              om[:, :, None] * om[:, None, :])
    H = np.einsum("iab,ik,il->akbl", mix, U, U, optimize=True) / n
    return H.reshape(k * q, k * q)


def fit_propensity(data, spec=None, weights=None):
    """
    Fit the propensity model by weighted maximum likelihood.

    Damped Newton from gamma = 0 with step-halving on the log-likelihood;
    converges when the gradient sup-norm is at most spec.tol.

    Args:
        data (Dataset): The data.
        spec (PropensitySpec): Model specification.
        weights (np.ndarray): Subject weights W (bootstrap); None means 1.

    Returns:
        (FittedPropensity) The fit.
    """
    spec = spec or PropensitySpec()
    m, n = data.m, data.n
    if spec.kind == "fixed":
        probs = np.asarray(spec.probabilities, dtype=float)
        if probs.shape != (m,) or np.any(probs <= 0) or \
                abs(probs.sum() - 1) > 1e-8:
            raise ValueError("Fixed propensities must be {} positive values "
                             "summing to 1.".format(m))
        return FittedPropensity(spec, np.zeros((m - 1, 0)), m,
                                np.zeros((0, 0)))

    w = subject_weights(weights, n)
    U = feature_map(data.X, spec.features)
    q = U.shape[1]
    if not _full_rank(U[w > 0]):
        raise RankDeficiencyError(
            "The propensity design ({} columns) is rank deficient.".format(q))
    onehot = np.eye(m)[data.A]
    gamma = np.zeros((m - 1, q))
    ll = _mnl_loglik(U, data.A, w, gamma, m)
    gnorm = np.inf
    for it in range(spec.max_iter):
        omega = softmax(np.hstack([U @ gamma.T, np.zeros((n, 1))]), axis=1)
        grad = (w[:, None] * (onehot[:, :-1] - omega[:, :-1])).T @ U / n
        gnorm = float(np.max(np.abs(grad)))
        H = _mnl_neg_hessian(U, omega, w)
        try:
            step = linalg.solve(H, grad.ravel(), assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            raise PropensityFitError("Propensity Hessian is singular; the "
                                     "arms may be separated", gnorm)
        step = step.reshape(gamma.shape)
        if _converged(gnorm, step, gamma, spec.tol):
            break
        t = 1.0
        for _ in range(spec.max_halvings + 1):
            cand = gamma + t * step
            ll_new = _mnl_loglik(U, data.A, w, cand, m)
            if ll_new >= ll - 1e-14 * (1.0 + abs(ll)):
                break
            t /= 2.0
        else:
            raise PropensityFitError("Step-halving failed to increase the "
                                     "propensity likelihood", gnorm)
        gamma, ll = cand, ll_new
        logger.debug("propensity iter {}: loglik {:.10f}, |grad| {:.3e}"
                     "".format(it, ll, gnorm))
    else:
        raise PropensityFitError("Propensity fit did not converge in {} "
                                 "iterations".format(spec.max_iter), gnorm)
    omega = softmax(np.hstack([U @ gamma.T, np.zeros((n, 1))]), axis=1)
    H = _mnl_neg_hessian(U, omega, w)
    _check_pd(H, "propensity")
    return FittedPropensity(spec, gamma, m, H, n_iter=it, loglik=ll)


def _check_pd(H, what):
    if H.size == 0:
        return
    try:
        linalg.cho_factor(H)
    except linalg.LinAlgError:
        raise SingularHessianError(
            "The {} negative Hessian is not positive definite.".format(what))


@dataclass(frozen=True)
class OutcomeSpec:
    """
    Outcome model g{mu(x, a)} = z(x)' beta_a with a canonical link.

    Args:
        link (str): "identity" or "logit"; None picks the canonical link of
            the outcome kind.
        kind (str): "glm", or "null" for mu == 0 (no parameters).
        features (str): "linear" for z(x) = (1, x), "intercept" for z = 1.
        penalty (str): "none" (per-arm IRLS) or "lasso" (coordinate descent
            on arm intercepts, covariates and treatment-by-covariate
            interactions, lambda by cross-validation).
        n_lambdas (int): Length of the default lambda grid.
        lambda_ratio (float): Smallest grid lambda over lambda_max.
        lambdas (tuple): Explicit lambda grid (overrides the default).
        cv_folds (int): Cross-validation folds.
        seed (int): Seeds the fold assignment.
        max_iter, max_halvings, tol: Newton / IRLS controls.
        cd_tol (float): Coordinate descent convergence on coefficient change.
        cd_max_sweeps (int): Coordinate descent sweep limit.
    """
    link: str = None
    kind: str = "glm"
    features: str = "linear"
    penalty: str = "none"
    n_lambdas: int = 50
    lambda_ratio: float = 1e-3
    lambdas: tuple = None
    cv_folds: int = 10
    seed: int = 0
    max_iter: int = 100
    max_halvings: int = 30
    tol: float = 1e-8
    cd_tol: float = 1e-10
    cd_max_sweeps: int = 10000

    def __post_init__(self):
        if self.kind not in OUTCOME_KINDS:
            raise ValueError("Outcome kind must be one of {}, not {}"
                             "".format(OUTCOME_KINDS, self.kind))
        if self.penalty not in PENALTIES:
            raise ValueError("Penalty must be one of {}, not {}"
                             "".format(PENALTIES, self.penalty))
        if self.link is not None and self.link not in LINKS:
            raise ValueError("Link must be one of {}, not {}"
                             "".format(LINKS, self.link))
        if self.features not in FEATURE_MAPS:
            raise ValueError("Feature map must be one of {}, not {}"
                             "".format(FEATURE_MAPS, self.features))
        if self.penalty == "lasso" and self.features != "linear":
            raise ValueError("The LASSO outcome model needs linear features.")

    def resolve_link(self, outcome_kind):
        canonical = "logit" if outcome_kind == "binary" else "identity"
        if self.link is not None and self.link != canonical:
            raise ValueError("The {} link does not match {} outcomes."
                             "".format(self.link, outcome_kind))
        return canonical


def _inverse_link(eta, link):
    return expit(eta) if link == "logit" else eta


def _variance_function(eta, link):
    if link == "logit":
        mu = expit(eta)
        return mu * (1.0 - mu)
    return np.ones_like(eta)


def _glm_loglik(eta, y, w, link):
    if link == "logit":
        return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))
    return float(-0.5 * np.sum(w * (y - eta) ** 2))


@dataclass(frozen=True, eq=False)
class FittedOutcome:
    """
    A fitted outcome model; beta has one row of coefficients per arm on the
    original covariate scale, mu(x, a) = b'(z(x)' beta_a).
    """
    spec: OutcomeSpec
    link: str
    beta: np.ndarray
    m: int
    neg_hessian: np.ndarray
    dispersion: float = float("nan")
    selected_lambda: float = None
    lambdas: tuple = None
    cv_errors: tuple = None
    path_nonzero: tuple = None
    loglik_trace: tuple = field(default_factory=tuple)

    @property
    def n_params(self):
        return self.beta.size

    @property
    def r(self):
        return self.beta.shape[1]

    def linear_predictor(self, X, beta=None):
        beta = self.beta if beta is None else beta
        X = np.asarray(X, dtype=float)
        n = 1 if X.ndim == 1 else X.shape[0]
        if beta.shape[1] == 0:
            return np.zeros((n, self.m))
        return feature_map(X, self.spec.features) @ beta.T

    def predict(self, X):
        """
        Fitted means mu(x, a) for every row and arm.

        Args:
            X (np.ndarray): n x p covariates.

        Returns:
            (np.ndarray) n x m means.
        """
        if self.spec.kind == "null":
            return np.zeros_like(self.linear_predictor(X))
        return _inverse_link(self.linear_predictor(X), self.link)

    def dmean(self, X):
        """b''(z' beta_a) for every row and arm; d mu / d beta_a = b'' z."""
        if self.spec.kind == "null":
            return np.zeros_like(self.linear_predictor(X))
        return _variance_function(self.linear_predictor(X), self.link)

    def selected_covariates(self):
        """Covariates with a nonzero slope in any arm."""
        if self.r <= 1:
            return frozenset()
        return frozenset(int(j) for j in
                         np.flatnonzero(np.any(self.beta[:, 1:] != 0,
                                               axis=0)))

    def score_contributions(self, data, weights=None, params=None):
        """
        Per-subject outcome scores and the block-diagonal averaged negative
        Hessian (cross-arm blocks are exactly zero).

        Args:
            data (Dataset): The data the model describes.
            weights (np.ndarray): Subject weights.
            params (np.ndarray): Flattened beta to evaluate at; default is the
                fitted beta.

        Returns:
            (np.ndarray, np.ndarray) n x d scores, d x d negative Hessian.
        """
        n = data.n
        if self.n_params == 0:
            return np.zeros((n, 0)), np.zeros((0, 0))
        w = subject_weights(weights, n)
        beta = self.beta if params is None else \
            np.asarray(params, dtype=float).reshape(self.beta.shape)
        Z = feature_map(data.X, self.spec.features)
        eta = self.linear_predictor(data.X, beta)
        mu = _inverse_link(eta, self.link)
        v = _variance_function(eta, self.link)
        r = self.r
        scores = np.zeros((n, self.m * r))
        H = np.zeros((self.m * r, self.m * r))
        for a in range(self.m):
            rows = data.A == a
            block = slice(a * r, (a + 1) * r)
            resid = w[rows] * (data.Y[rows] - mu[rows, a])
            scores[rows, block] = resid[:, None] * Z[rows]
            Za = Z[rows]
            H[block, block] = Za.T @ ((w[rows] * v[rows, a])[:, None] *
                                      Za) / n
        return scores, H

    def arm_hessians(self):
        r = self.r
        return [self.neg_hessian[a * r:(a + 1) * r, a * r:(a + 1) * r]
                for a in range(self.m)]

    def to_dict(self):
        doc = {"kind": self.spec.kind, "link": self.link,
               "features": self.spec.features, "penalty": self.spec.penalty,
               "beta": self.beta.tolist(), "dispersion": self.dispersion}
        if self.selected_lambda is not None:
            doc["lambda"] = self.selected_lambda
        return doc


def fit_outcome(data, spec=None, weights=None, lam=None):
    """
    Fit the outcome model.

    Unpenalized fits run weighted IRLS per arm with step-halving. LASSO fits
    standardize the covariates, run coordinate descent on the arm-intercept,
    main-effect and interaction design, and pick lambda by minimizing the
    cross-validated prediction error unless lam is given. The final LASSO fit
    always starts from zero at the chosen lambda.

    Args:
        data (Dataset): The data.
        spec (OutcomeSpec): Model specification.
        weights (np.ndarray): Subject weights W (bootstrap); None means 1.
        lam (float): Fixed LASSO penalty; skips cross-validation.

    Returns:
        (FittedOutcome) The fit.
    """
    spec = spec or OutcomeSpec()
    link = spec.resolve_link(data.outcome_kind)
    w = subject_weights(weights, data.n)
    if spec.kind == "null":
        return FittedOutcome(spec, link, np.zeros((data.m, 0)), data.m,
                             np.zeros((0, 0)))
    if spec.penalty == "lasso":
        fit = _fit_lasso(data, spec, link, w, lam)
    else:
        fit = _fit_glm(data, spec, link, w)
    _check_pd(fit.neg_hessian, "outcome")
    return fit


def _fit_glm(data, spec, link, w):
    Z = feature_map(data.X, spec.features)
    n, r = Z.shape
    beta = np.zeros((data.m, r))
    traces = []
    for a in range(data.m):
        rows = data.A == a
        Za, ya, wa = Z[rows], data.Y[rows], w[rows]
        if not _full_rank(Za[wa > 0]):
            raise RankDeficiencyError(
                "The outcome design of arm {} ({} rows, {} columns) is rank "
                "deficient.".format(data.treatment_labels[a], Za.shape[0], r))
        beta[a], trace = _irls(Za, ya, wa, link, spec, n)
        traces.append(tuple(trace))
    return _finish_outcome(data, spec, link, w, beta,
                           loglik_trace=tuple(traces))


def _irls(Z, y, w, link, spec, n):
    beta = np.zeros(Z.shape[1])
    ll = _glm_loglik(Z @ beta, y, w, link)
    trace = [ll]
    gnorm = np.inf
    for _ in range(spec.max_iter):
        eta = Z @ beta
        v = _variance_function(eta, link)
        grad = Z.T @ (w * (y - _inverse_link(eta, link))) / n
        gnorm = float(np.max(np.abs(grad)))
        H = Z.T @ ((w * v)[:, None] * Z) / n
        try:
            step = linalg.solve(H, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            raise OutcomeFitError("Singular IRLS Hessian; the outcomes may be "
                                  "separated (|grad| {:.3e})".format(gnorm))
        if _converged(gnorm, step, beta, spec.tol):
            return beta, trace
        t = 1.0
        for _ in range(spec.max_halvings + 1):
            cand = beta + t * step
            ll_new = _glm_loglik(Z @ cand, y, w, link)
            if ll_new >= ll - 1e-14 * (1.0 + abs(ll)):
                break
            t /= 2.0
        else:
            raise OutcomeFitError("IRLS step-halving failed (|grad| {:.3e})"
                                  "".format(gnorm))
        beta, ll = cand, ll_new
        trace.append(ll)
    raise OutcomeFitError("IRLS did not converge in {} iterations "
                          "(|grad| {:.3e})".format(spec.max_iter, gnorm))


def _finish_outcome(data, spec, link, w, beta, **kwargs):
    fit = FittedOutcome(spec, link, beta, data.m, np.zeros((0, 0)), **kwargs)
    _, H = fit.score_contributions(data, w)
    mu = fit.predict(data.X)[np.arange(data.n), data.A]
    if link == "logit":
        pearson = (data.Y - mu) / np.sqrt(np.clip(mu * (1 - mu), 1e-12, None))
    else:
        pearson = data.Y - mu
    dispersion = float(np.sum(w * pearson ** 2) / np.sum(w))
    return FittedOutcome(spec, link, beta, data.m, H, dispersion, **kwargs)


def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def lasso_cd(G, c, lam, penalized, beta0=None, tol=1e-10, max_sweeps=10000):
    """
    Cyclic coordinate descent for
        min 1/2 b' G b - c' b + lam * sum_{j penalized} |b_j|
    with G positive semidefinite. Full sweeps alternate with sweeps over the
    current nonzero coordinates until a full sweep changes nothing by more
    than tol.

    Args:
        G (np.ndarray): d x d Gram matrix.
        c (np.ndarray): Length-d linear term.
        lam (float): Penalty level.
        penalized (np.ndarray): Length-d booleans; False leaves a coordinate
            unpenalized.
        beta0 (np.ndarray): Warm start; zeros by default.
        tol (float): Largest coefficient change at convergence.
        max_sweeps (int): Sweep limit.

    Returns:
        (np.ndarray, int) The solution and the number of sweeps used.
    """
    d = c.shape[0]
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)
    grad = c - G @ beta
    diag = np.diag(G).copy()
    thresh = lam * np.asarray(penalized, dtype=float)
    everything = np.arange(d)

    def sweep(coords):
        biggest = 0.0
        for j in coords:
            if diag[j] <= 0.0:
                continue
            old = beta[j]
            new = soft_threshold(grad[j] + diag[j] * old, thresh[j]) / diag[j]
            if new != old:
                grad[:] -= (new - old) * G[j]
                beta[j] = new
                biggest = max(biggest, abs(new - old))
        return biggest

    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(everything) <= tol:
            return beta, sweeps
        while sweeps < max_sweeps:
            sweeps += 1
            if sweep(np.flatnonzero(beta != 0)) <= tol:
                break
    raise OutcomeFitError("Coordinate descent did not converge in {} sweeps "
                          "(lambda {:.3e})".format(max_sweeps, lam))


def lasso_design(Xs, A, m):
    """
    Columns: m arm intercepts, p main effects, then p interactions
    x * 1{A = a} for each arm a >= 1. Arm a's slope is main + interaction a.

    Args:
        Xs (np.ndarray): n x p standardized covariates.
        A (np.ndarray): Treatment codes.
        m (int): Number of arms.

    Returns:
        (np.ndarray, np.ndarray) n x (m + m p) design and penalty mask.
    """
    n, p = Xs.shape
    D = np.zeros((n, m + m * p))
    D[np.arange(n), A] = 1.0
    D[:, m:m + p] = Xs
    for a in range(1, m):
        rows = A == a
        D[rows, m + a * p:m + (a + 1) * p] = Xs[rows]
    penalized = np.ones(D.shape[1], dtype=bool)
    penalized[:m] = False
    return D, penalized


def _arm_coefficients(b, m, p):
    intercepts = b[:m]
    main = b[m:m + p]
    slopes = np.tile(main, (m, 1))
    for a in range(1, m):
        slopes[a] += b[m + a * p:m + (a + 1) * p]
    return intercepts, slopes


class _LassoProblem(object):
    """The standardized LASSO outcome problem on one (sub)sample."""

    def __init__(self, X, A, y, w, m, link, spec):
        self.scaler = StandardScaler().fit(X, sample_weight=w)
        self.D, self.penalized = lasso_design(self.scaler.transform(X), A, m)
        self.y, self.w, self.m, self.link, self.spec = y, w, m, link, spec
        self.n, self.p = X.shape

    def null_coefficients(self):
        b = np.zeros(self.D.shape[1])
        for a in range(self.m):
            col = self.D[:, a]
            tot = np.sum(self.w * col)
            mean = np.sum(self.w * col * self.y) / tot if tot > 0 else 0.0
            if self.link == "logit":
                mean = np.clip(mean, 1e-6, 1 - 1e-6)
                mean = np.log(mean / (1 - mean))
            b[a] = mean
        return b

    def lambda_max(self):
        b = self.null_coefficients()
        mu = _inverse_link(self.D @ b, self.link)
        g = self.D.T @ (self.w * (self.y - mu)) / self.n
        return float(np.max(np.abs(g[self.penalized]), initial=0.0))

    def objective(self, b, lam):
        eta = self.D @ b
        if self.link == "logit":
            loss = -_glm_loglik(eta, self.y, self.w, self.link) / self.n
        else:
            loss = 0.5 * np.sum(self.w * (self.y - eta) ** 2) / self.n
        return loss + lam * np.sum(np.abs(b[self.penalized]))

    def solve(self, lam, b0=None):
        spec = self.spec
        if self.link == "identity":
            Dw = self.w[:, None] * self.D
            G = self.D.T @ Dw / self.n
            c = Dw.T @ self.y / self.n
            b, _ = lasso_cd(G, c, lam, self.penalized, b0, spec.cd_tol,
                            spec.cd_max_sweeps)
            return b
        b = np.zeros(self.D.shape[1]) if b0 is None else b0.copy()
        obj = self.objective(b, lam)
        for _ in range(spec.max_iter):
            eta = self.D @ b
            prob = expit(eta)
            v = np.clip(prob * (1 - prob), 1e-5, None)
            work = eta + (self.y - prob) / v
            Dw = (self.w * v)[:, None] * self.D
            G = self.D.T @ Dw / self.n
            c = Dw.T @ work / self.n
            target, _ = lasso_cd(G, c, lam, self.penalized, b, spec.cd_tol,
                                 spec.cd_max_sweeps)
            step = target - b
            t = 1.0
            for _ in range(spec.max_halvings + 1):
                cand = b + t * step
                obj_new = self.objective(cand, lam)
                if obj_new <= obj + 1e-14 * (1.0 + abs(obj)):
                    break
                t /= 2.0
            else:
                # no descent left along the Newton direction
                return b
            change = np.max(np.abs(cand - b), initial=0.0)
            b, obj = cand, obj_new
            if change <= spec.tol:
                return b
        raise OutcomeFitError("Proximal Newton LASSO did not converge in {} "
                              "iterations (lambda {:.3e})"
                              "".format(spec.max_iter, lam))

    def path(self, lambdas):
        out, b = [], None
        for lam in lambdas:
            b = self.solve(lam, b)
            out.append(b.copy())
        return out

    def arm_beta(self, b):
        """Per-arm (intercept, slopes) on the original covariate scale."""
        intercepts, slopes = _arm_coefficients(b, self.m, self.p)
        slopes = slopes / self.scaler.scale_
        intercepts = intercepts - slopes @ self.scaler.mean_
        return np.hstack([intercepts[:, None], slopes])


def lambda_grid(lam_max, n_lambdas=50, ratio=1e-3):
    """
    Log-spaced lambdas from lam_max down to ratio * lam_max.

    Args:
        lam_max (float): Smallest lambda that zeroes every penalized
            coefficient.
        n_lambdas (int): Grid length.
        ratio (float): Smallest over largest lambda.

    Returns:
        (np.ndarray) Decreasing lambdas.
    """
    if n_lambdas < 1:
        raise OutcomeFitError("The lambda grid is empty.")
    if n_lambdas == 1:
        return np.array([lam_max])
    return lam_max * np.logspace(0.0, np.log10(ratio), n_lambdas)


def _prediction_error(eta, y, w, link):
    if link == "logit":
        return float(-2.0 * _glm_loglik(eta, y, w, link) / np.sum(w))
    return float(np.sum(w * (y - eta) ** 2) / np.sum(w))


def _fit_lasso(data, spec, link, w, lam):
    X, A, y, m = data.X, data.A, data.Y, data.m
    full = _LassoProblem(X, A, y, w, m, link, spec)
    lambdas = cv_errors = path_nonzero = None
    if lam is None:
        if spec.lambdas is not None:
            lambdas = np.sort(np.asarray(spec.lambdas, dtype=float))[::-1]
            if lambdas.size == 0:
                raise OutcomeFitError("The lambda grid is empty.")
        else:
            lambdas = lambda_grid(full.lambda_max(), spec.n_lambdas,
                                  spec.lambda_ratio)
        path = full.path(lambdas)
        path_nonzero = tuple(int(np.count_nonzero(b[full.penalized]))
                             for b in path)
        errors = np.zeros((spec.cv_folds, lambdas.size))
        folds = KFold(n_splits=spec.cv_folds, shuffle=True,
                      random_state=spec.seed)
        for f, (train, test) in enumerate(folds.split(X)):
            sub = _LassoProblem(X[train], A[train], y[train], w[train], m,
                                link, spec)
            for k, b in enumerate(sub.path(lambdas)):
                beta = sub.arm_beta(b)
                eta = beta[A[test], 0] + np.sum(
                    X[test] * beta[A[test], 1:], axis=1)
                errors[f, k] = _prediction_error(eta, y[test], w[test], link)
        cv_errors = errors.mean(axis=0)
        lam = float(lambdas[int(np.argmin(cv_errors))])
        logger.debug("LASSO cross-validation picked lambda {:.4e} "
                     "(grid {:.4e}..{:.4e})".format(lam, lambdas[0],
                                                    lambdas[-1]))
        lambdas, cv_errors = tuple(lambdas.tolist()), \
            tuple(cv_errors.tolist())
    b = full.solve(float(lam))
    beta = full.arm_beta(b)
    return _finish_outcome(data, spec, link, w, beta,
                           selected_lambda=float(lam), lambdas=lambdas,
                           cv_errors=cv_errors, path_nonzero=path_nonzero)


def lasso_path(data, spec, lambdas, weights=None):
    """
    Standardized LASSO coefficients of the outcome design along a grid.

    Args:
        data (Dataset): The data.
        spec (OutcomeSpec): Specification (link, solver controls).
        lambdas (array-like): Penalty levels, in the order to solve them.
        weights (np.ndarray): Subject weights.

    Returns:
        ([np.ndarray], np.ndarray) Coefficients per lambda and the penalty
            mask of the design.
    """
    link = spec.resolve_link(data.outcome_kind)
    problem = _LassoProblem(data.X, data.A, data.Y,
                            subject_weights(weights, data.n), data.m, link,
                            spec)
    return problem.path(lambdas), problem.penalized


@dataclass(frozen=True, eq=False)
class FittedModels:
    """Both nuisance fits for one dataset (and one weight vector)."""
    propensity: FittedPropensity
    outcome: FittedOutcome


def score_contributions(fit, data, weights=None, params=None):
    """
    Per-subject score terms and the averaged negative Hessian of a fitted
    propensity or outcome model.

    Args:
        fit (FittedPropensity or FittedOutcome): The fitted model.
        data (Dataset): The data.
        weights (np.ndarray): Subject weights.
        params (np.ndarray): Flattened parameters to evaluate at.

    Returns:
        (np.ndarray, np.ndarray) n x d scores, d x d negative Hessian.
    """
    return fit.score_contributions(data, weights, params)
