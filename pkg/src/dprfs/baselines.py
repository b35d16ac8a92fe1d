"""Comparison methods operating on pooled vectors rather than sets.

* :func:`fit_gmm_em` -- finite Gaussian mixture fitted by EM with k-means++
  seeding and restarts.
* :func:`fit_dpgmm_collapsed` -- infinite Gaussian mixture (CRP prior, NIW
  base measure) sampled by collapsed Gibbs over individual points.  It shares
  the NIW machinery of the set-valued model so that only the likelihood
  differs between the two.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .conjugate import NiwParams, _log_marginal_from_stats
from .errors import InputError
from .rfs import GaussianParams
from .sampler import (
    ChainConfig,
    ChainTrace,
    SweepRecord,
    _canonical_labels,
    sample_concentration,
)

logger = logging.getLogger(__name__)

LOG_PI = math.log(math.pi)


def pool_patterns(data) -> np.ndarray:
    """Concatenate the points of all patterns, in input order, into an (n, d) array."""
    data = list(data)
    if not data:
        raise InputError("no patterns to pool")
    dim = data[0].dim
    for i, x in enumerate(data):
        if x.dim != dim:
            raise InputError(f"pattern {i} has dimension {x.dim}, expected {dim}")
    return np.concatenate([x.points for x in data], axis=0)


# ---------------------------------------------------------------------------
# Finite GMM by EM
# ---------------------------------------------------------------------------


@dataclass
class GmmModel:
    weights: np.ndarray
    components: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def covariances(self) -> np.ndarray:
        return np.array([c.covariance for c in self.components])

    def log_joint(self, points) -> np.ndarray:
        """(n, K) matrix of log pi_k + log N(x_n | mu_k, Sigma_k)."""
        out = np.empty((len(points), self.K))
        for k, comp in enumerate(self.components):
            diff = points - comp.mean
            z = np.linalg.solve(comp.chol, diff.T)
            out[:, k] = (math.log(self.weights[k]) if self.weights[k] > 0 else -np.inf) - 0.5 * (
                comp.dim * math.log(2 * math.pi) + comp.log_det + np.sum(z * z, axis=0))
        return out

    def log_likelihood(self, points) -> float:
        return float(np.sum(logsumexp(self.log_joint(points), axis=1)))


@dataclass
class GmmFit:
    model: GmmModel
    responsibilities: np.ndarray
    log_likelihoods: list
    converged: bool
    regularized: bool = False
    restart_log_likelihoods: list = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return self.log_likelihoods[-1]


def kmeans_pp_seeds(points, k, rng) -> np.ndarray:
    """k-means++ seeding: successive centers drawn proportional to squared distance."""
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centers)


def _em_once(points, k, rng, max_iters, tol, ridge):
    n, d = points.shape
    data_cov = np.atleast_2d(np.cov(points, rowvar=False)) if n > 1 else np.eye(d)
    data_cov = data_cov + ridge * np.eye(d)
    centers = kmeans_pp_seeds(points, k, rng)
    model = GmmModel(np.full(k, 1.0 / k), [GaussianParams(c, data_cov) for c in centers])
    history = []
    regularized = False
    converged = False
    for _ in range(max_iters):
        lj = model.log_joint(points)
        norm = logsumexp(lj, axis=1)
        history.append(float(norm.sum()))
        resp = np.exp(lj - norm[:, None])
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            converged = True
            break
        nk = resp.sum(axis=0)
        weights = nk / n
        comps = []
        for j in range(k):
            if nk[j] <= 1e-12:
                # a starved component keeps its previous Gaussian and zero weight
                comps.append(model.components[j])
                continue
            mean = resp[:, j] @ points / nk[j]
            diff = points - mean
            cov = (resp[:, j, None] * diff).T @ diff / nk[j]
            cov = 0.5 * (cov + cov.T)
            if np.linalg.eigvalsh(cov)[0] < ridge:
                cov = cov + ridge * np.eye(d)
                regularized = True
            comps.append(GaussianParams(mean, cov))
        model = GmmModel(weights, comps)
    else:
        lj = model.log_joint(points)
        norm = logsumexp(lj, axis=1)
        history.append(float(norm.sum()))
        resp = np.exp(lj - norm[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return GmmFit(model, resp, history, converged, regularized)


def fit_gmm_em(points, K, max_iters=500, tol=1e-10, seed=None, restarts=5) -> GmmFit:
    """Maximum-likelihood Gaussian mixture with K components.

    Each restart seeds the means with k-means++, starts every covariance at
    the data covariance and iterates EM until the relative change in
    log-likelihood drops below ``tol``.  The restart with the highest final
    log-likelihood is returned.  Near-singular covariances receive a ridge of
    1e-6 times the mean data variance; ``regularized`` reports when that
    happened.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if K < 1 or len(points) < K:
        raise InputError(f"need 1 <= K <= number of points, got K={K} with {len(points)} points")
    rng = np.random.default_rng(seed)
    var = float(np.mean(np.var(points, axis=0))) if len(points) > 1 else 1.0
    ridge = 1e-6 * (var if var > 0 else 1.0)
    best = None
    finals = []
    for _ in range(max(1, restarts)):
        fit = _em_once(points, K, rng, max_iters, tol, ridge)
        finals.append(fit.log_likelihood)
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    best.restart_log_likelihoods = finals
    if best.regularized:
        logger.warning("GMM EM: a near-singular covariance was regularized with ridge %.3g", ridge)
    return best


# ---------------------------------------------------------------------------
# Infinite GMM by collapsed Gibbs over points
# ---------------------------------------------------------------------------


def _prior_predictive(points, prior: NiwParams):
    d = prior.dim
    t_dof = prior.dof - d + 1
    shape = prior.scale_matrix * ((prior.mean_scale + 1.0) / (prior.mean_scale * t_dof))
    _, logdet = np.linalg.slogdet(shape)
    diff = points - prior.mean_loc
    q = np.einsum("ni,ij,nj->n", diff, np.linalg.inv(shape), diff)
    return (math.lgamma(0.5 * (t_dof + d)) - math.lgamma(0.5 * t_dof)
            - 0.5 * d * (math.log(t_dof) + LOG_PI) - 0.5 * logdet
            - 0.5 * (t_dof + d) * np.log1p(q / t_dof))


def _point_loglik(points, labels, prior: NiwParams):
    """Sum over clusters of the NIW marginal of their points."""
    total = 0.0
    for k in np.unique(labels):
        pts = points[labels == k]
        total += _log_marginal_from_stats(prior.mean_loc, prior.mean_scale, prior.dof,
                                          prior.scale_matrix, prior.log_det,
                                          len(pts), pts.sum(axis=0), pts.T @ pts)
    return total


def fit_dpgmm_collapsed(points, feature_prior: NiwParams, concentration=1.0,
                        concentration_hyperprior=(1.0, 1.0),
                        config: ChainConfig = ChainConfig()) -> ChainTrace:
    """Collapsed Gibbs for a DP mixture of Gaussians over individual points.

    The trace has the same layout as the set-valued sampler's; assignments
    index points in the order given.
    """
    points = np.ascontiguousarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if n == 0:
        raise InputError("points must be nonempty")
    if points.shape[1] != feature_prior.dim:
        raise InputError(f"point dimension {points.shape[1]} != prior dimension {feature_prior.dim}")
    rng = np.random.default_rng(config.seed)
    d = points.shape[1]
    prior = feature_prior
    prior_lp = _prior_predictive(points, prior)
    cap = n + 1
    count = np.zeros(cap, dtype=np.int64)
    sums = np.zeros((cap, d))
    scatter = np.zeros((cap, d, d))
    loc = np.zeros((cap, d))
    chol = np.zeros((cap, d, d))
    logc = np.zeros(cap)
    dof = np.zeros(cap)
    live = np.zeros(cap, dtype=np.int64)
    mu0 = np.ascontiguousarray(prior.mean_loc)
    lam0_plus_m0 = prior.scale_matrix + prior.mean_scale * np.outer(mu0, mu0)

    if config.init_clusters <= 1:
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = np.unique(rng.integers(0, config.init_clusters, size=n),
                           return_inverse=True)[1].astype(np.int64)
    num_live = int(labels.max()) + 1
    for k in range(num_live):
        members = points[labels == k]
        count[k] = len(members)
        sums[k] = members.sum(axis=0)
        scatter[k] = members.T @ members
        live[k] = k
        _kernels._refresh(k, count, sums, scatter, loc, chol, logc, dof,
                          mu0, prior.mean_scale, prior.dof, lam0_plus_m0)

    eta = float(concentration)
    resample = config.resample_concentration and concentration_hyperprior is not None
    burn_in = config.resolved_burn_in()

    def record(sweep):
        ll = _point_loglik(points, labels, prior)
        if not math.isfinite(ll):
            raise FloatingPointError(f"non-finite log-likelihood at sweep {sweep}")
        return SweepRecord(sweep, num_live, _canonical_labels(labels), eta, ll)

    records = [record(0)]
    for sweep in range(1, config.num_sweeps + 1):
        num_live = _kernels.point_sweep(
            points, labels, count, sums, scatter, loc, chol, logc, dof, live, num_live,
            mu0, prior.mean_scale, prior.dof, lam0_plus_m0, math.log(eta), prior_lp, rng.random(n))
        if resample:
            eta = sample_concentration(eta, num_live, n, concentration_hyperprior, rng)
        records.append(record(sweep))
    return ChainTrace(records, burn_in=burn_in, config={
        "num_sweeps": config.num_sweeps, "burn_in": burn_in, "seed": config.seed,
        "resample_concentration": resample, "init_clusters": config.init_clusters,
    })
