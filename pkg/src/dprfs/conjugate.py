"""Conjugate Gamma x Normal-Inverse-Wishart prior for Poisson RFS likelihoods.

The rate of a Poisson RFS gets a Gamma(shape, rate) prior and the Gaussian
feature density gets a Normal-Inverse-Wishart prior.  Both update in closed
form from the sufficient statistics of a collection of point patterns:

* Gamma:  shape += total number of points, rate += number of patterns
* NIW:    the standard update driven by the pooled points

and the predictive density of an unseen pattern factors into a
negative-binomial-like cardinality term and the NIW marginal of its points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ParameterError, StateError
from .rfs import PointPattern

LOG_PI = math.log(math.pi)
LOG_2 = math.log(2.0)


@dataclass(frozen=True)
class GammaParams:
    """Gamma distribution in the shape/rate parametrization."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ParameterError(f"Gamma needs shape > 0 and rate > 0, got {self.shape}, {self.rate}")
        if not (math.isfinite(self.shape) and math.isfinite(self.rate)):
            raise ParameterError("Gamma parameters must be finite")

    @property
    def mean(self) -> float:
        return self.shape / self.rate


@dataclass(frozen=True)
class NiwParams:
    """Normal-Inverse-Wishart prior over a Gaussian mean and covariance.

    ``Sigma ~ IW(dof, scale_matrix)`` and ``mu | Sigma ~ N(mean_loc, Sigma / mean_scale)``.
    """

    mean_loc: np.ndarray
    mean_scale: float
    dof: float
    scale_matrix: np.ndarray
    log_det: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.mean_loc, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale_matrix, dtype=float))
        d = loc.size
        if loc.ndim != 1 or scale.shape != (d, d):
            raise ParameterError(f"scale matrix shape {scale.shape} does not match location size {d}")
        if not self.mean_scale > 0:
            raise ParameterError(f"mean_scale must be positive, got {self.mean_scale}")
        if not self.dof > d - 1:
            raise ParameterError(f"dof must exceed d - 1 = {d - 1}, got {self.dof}")
        if not np.allclose(scale, scale.T, rtol=1e-9, atol=1e-12):
            raise ParameterError("scale matrix must be symmetric")
        try:
            chol = np.linalg.cholesky(scale)
        except np.linalg.LinAlgError:
            raise ParameterError("scale matrix must be positive definite") from None
        object.__setattr__(self, "mean_loc", loc)
        object.__setattr__(self, "scale_matrix", scale)
        object.__setattr__(self, "mean_scale", float(self.mean_scale))
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "log_det", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return self.mean_loc.size

    def predictive_covariance(self) -> np.ndarray:
        """Covariance of the Student-t predictive (infinite when dof - d + 1 <= 2)."""
        t_dof = self.dof - self.dim + 1
        shape = self.scale_matrix * (self.mean_scale + 1) / (self.mean_scale * t_dof)
        if t_dof <= 2:
            return np.full_like(shape, np.inf)
        return shape * t_dof / (t_dof - 2)


@dataclass(frozen=True)
class RfsPrior:
    """Product prior Gamma(rate) x NIW(feature Gaussian)."""

    rate_prior: GammaParams
    feature_prior: NiwParams

    @property
    def dim(self) -> int:
        return self.feature_prior.dim


@dataclass(frozen=True)
class SetSufficientStats:
    """Pooled statistics of a collection of point patterns."""

    num_sets: int
    total_points: int
    point_sum: np.ndarray
    point_scatter: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> SetSufficientStats:
        return cls(0, 0, np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def of_pattern(cls, pattern: PointPattern) -> SetSufficientStats:
        pts = pattern.points
        return cls(1, len(pattern), pts.sum(axis=0), pts.T @ pts)

    @classmethod
    def of_patterns(cls, patterns, dim: int) -> SetSufficientStats:
        stats = cls.empty(dim)
        for pattern in patterns:
            stats = stats_add(stats, pattern)
        return stats

    @property
    def dim(self) -> int:
        return self.point_sum.size

    def __add__(self, other: SetSufficientStats) -> SetSufficientStats:
        return SetSufficientStats(
            self.num_sets + other.num_sets,
            self.total_points + other.total_points,
            self.point_sum + other.point_sum,
            self.point_scatter + other.point_scatter,
        )

    def __sub__(self, other: SetSufficientStats) -> SetSufficientStats:
        if other.num_sets > self.num_sets or other.total_points > self.total_points:
            raise StateError("removing more sets or points than were added")
        if self.num_sets == other.num_sets:
            # exact reset avoids floating residue once the collection is empty
            if self.total_points != other.total_points:
                raise StateError("point count inconsistent with set count")
            return SetSufficientStats.empty(self.dim)
        return SetSufficientStats(
            self.num_sets - other.num_sets,
            self.total_points - other.total_points,
            self.point_sum - other.point_sum,
            self.point_scatter - other.point_scatter,
        )


def _check_dim(stats, pattern):
    if stats.dim != pattern.dim:
        raise InputError(f"pattern dimension {pattern.dim} != statistics dimension {stats.dim}")


def stats_add(stats: SetSufficientStats, pattern: PointPattern) -> SetSufficientStats:
    _check_dim(stats, pattern)
    return stats + SetSufficientStats.of_pattern(pattern)


def stats_remove(stats: SetSufficientStats, pattern: PointPattern) -> SetSufficientStats:
    """Inverse of :func:`stats_add`; the caller guarantees ``pattern`` was added."""
    _check_dim(stats, pattern)
    if stats.num_sets == 0:
        raise StateError("cannot remove a pattern from empty statistics")
    return stats - SetSufficientStats.of_pattern(pattern)


def gamma_posterior(prior: GammaParams, stats: SetSufficientStats) -> GammaParams:
    return GammaParams(prior.shape + stats.total_points, prior.rate + stats.num_sets)


def _niw_update(loc, kappa, nu, lam, m, s, scatter):
    """Raw NIW update with m points of sum s and raw scatter sum x x^T."""
    if m == 0:
        return loc, kappa, nu, lam
    kappa_n = kappa + m
    xbar = s / m
    diff = xbar - loc
    lam_n = lam + scatter - s[:, None] * xbar + (kappa * m / kappa_n) * (diff[:, None] * diff)
    lam_n = 0.5 * (lam_n + lam_n.T)
    return (kappa * loc + s) / kappa_n, kappa_n, nu + m, lam_n


def niw_posterior(prior: NiwParams, stats: SetSufficientStats) -> NiwParams:
    """NIW posterior given the pooled points summarized in ``stats``."""
    if stats.dim != prior.dim:
        raise InputError(f"statistics dimension {stats.dim} != prior dimension {prior.dim}")
    if stats.total_points == 0:
        return prior
    loc, kappa, nu, lam = _niw_update(prior.mean_loc, prior.mean_scale, prior.dof,
                                      prior.scale_matrix, stats.total_points,
                                      stats.point_sum, stats.point_scatter)
    return NiwParams(loc, kappa, nu, lam)


def log_predictive_cardinality(post: GammaParams, n: int) -> float:
    """log[ Gamma(a+n) b^a / (Gamma(a) (b+1)^(a+n)) ] for posterior Gamma(a, b).

    Dividing the exponentiated value by n! gives a negative-binomial pmf.
    """
    a, b = post.shape, post.rate
    return (math.lgamma(a + n) - math.lgamma(a) + a * math.log(b)
            - (a + n) * math.log(b + 1.0))


def log_multigamma(x: float, d: int) -> float:
    out = 0.25 * d * (d - 1) * LOG_PI
    for j in range(d):
        out += math.lgamma(x - 0.5 * j)
    return out


def niw_log_normalizer(kappa, nu, log_det_lam, d):
    """log of the NIW normalizing integral, up to terms that cancel in ratios."""
    return (log_multigamma(0.5 * nu, d) + 0.5 * nu * d * LOG_2
            - 0.5 * nu * log_det_lam - 0.5 * d * math.log(kappa))


def _log_det_spd(mat):
    d = mat.shape[0]
    if d == 1:
        det = float(mat[0, 0])
    elif d == 2:
        det = float(mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0])
        if not mat[0, 0] > 0:
            det = -1.0
    else:
        sign, logdet = np.linalg.slogdet(mat)
        if sign <= 0:
            raise ParameterError("matrix is not positive definite")
        return float(logdet)
    if not det > 0:
        raise ParameterError("matrix is not positive definite")
    return math.log(det)


def student_t_log_density(x, post: NiwParams) -> float:
    """Log posterior predictive density of one point under a NIW posterior.

    This is a multivariate Student-t with ``dof - d + 1`` degrees of freedom,
    location ``mean_loc`` and shape ``scale_matrix (k + 1) / (k (dof - d + 1))``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = post.dim
    if x.shape != (d,):
        raise InputError(f"point shape {x.shape} does not match prior dimension {d}")
    t_dof = post.dof - d + 1
    factor = (post.mean_scale + 1.0) / (post.mean_scale * t_dof)
    diff = x - post.mean_loc
    q = float(diff @ np.linalg.solve(post.scale_matrix, diff)) / factor
    log_det_shape = post.log_det + d * math.log(factor)
    return (math.lgamma(0.5 * (t_dof + d)) - math.lgamma(0.5 * t_dof)
            - 0.5 * d * math.log(t_dof * math.pi) - 0.5 * log_det_shape
            - 0.5 * (t_dof + d) * math.log1p(q / t_dof))


def log_marginal_points(post: NiwParams, pattern: PointPattern) -> float:
    """log of the integral of prod_i N(x_i | mu, Sigma) against the NIW posterior.

    Evaluated as a ratio of NIW normalizers; a single point goes through
    :func:`student_t_log_density` directly.
    """
    if pattern.dim != post.dim:
        raise InputError(f"pattern dimension {pattern.dim} != prior dimension {post.dim}")
    m = len(pattern)
    if m == 0:
        return 0.0
    if m == 1:
        return student_t_log_density(pattern.points[0], post)
    pts = pattern.points
    return _log_marginal_from_stats(post.mean_loc, post.mean_scale, post.dof,
                                    post.scale_matrix, post.log_det,
                                    m, pts.sum(axis=0), pts.T @ pts)


def _log_marginal_from_stats(loc, kappa, nu, lam, log_det_lam, m, s, scatter):
    d = loc.size
    _, kappa_n, nu_n, lam_n = _niw_update(loc, kappa, nu, lam, m, s, scatter)
    return (niw_log_normalizer(kappa_n, nu_n, _log_det_spd(lam_n), d)
            - niw_log_normalizer(kappa, nu, log_det_lam, d)
            - 0.5 * m * d * math.log(2.0 * math.pi))


def log_marginal_points_sequential(post: NiwParams, pattern: PointPattern) -> float:
    """Same quantity as :func:`log_marginal_points`, via the chain rule.

    Each point is scored by the Student-t predictive and then folded into the
    posterior before the next one.
    """
    if pattern.dim != post.dim:
        raise InputError(f"pattern dimension {pattern.dim} != prior dimension {post.dim}")
    total = 0.0
    current = post
    for x in pattern.points:
        total += student_t_log_density(x, current)
        current = NiwParams(*_niw_update(current.mean_loc, current.mean_scale, current.dof,
                                         current.scale_matrix, 1, x, np.outer(x, x)))
    return total


def log_predictive_set(prior: RfsPrior, stats: SetSufficientStats, pattern: PointPattern) -> float:
    """Predictive log density of ``pattern`` given the patterns summarized in ``stats``.

    With empty ``stats`` this is the prior marginal of the pattern.
    """
    if pattern.dim != prior.dim:
        raise InputError(f"pattern dimension {pattern.dim} != prior dimension {prior.dim}")
    rate_post = gamma_posterior(prior.rate_prior, stats)
    feature_post = niw_posterior(prior.feature_prior, stats)
    return log_predictive_cardinality(rate_post, len(pattern)) + log_marginal_points(feature_post, pattern)


def default_prior(patterns, shape=1.0, rate=1.0, mean_scale=0.01, dof=None) -> RfsPrior:
    """Weakly informative prior scaled to the pooled points of ``patterns``.

    NIW location is the pooled mean and the scale matrix the pooled
    covariance (identity when there are fewer than two points); ``dof``
    defaults to d + 2.
    """
    patterns = list(patterns)
    if not patterns:
        raise InputError("need at least one pattern to build a data-driven prior")
    d = patterns[0].dim
    pts = np.concatenate([p.points for p in patterns], axis=0)
    if len(pts) >= 2:
        loc = pts.mean(axis=0)
        cov = np.atleast_2d(np.cov(pts, rowvar=False))
        if not np.all(np.linalg.eigvalsh(cov) > 1e-12):
            cov = cov + np.eye(d) * max(1e-6, 1e-6 * float(np.trace(cov)) / d)
    else:
        loc = pts.mean(axis=0) if len(pts) else np.zeros(d)
        cov = np.eye(d)
    return RfsPrior(GammaParams(shape, rate),
                    NiwParams(loc, mean_scale, d + 2.0 if dof is None else dof, cov))
