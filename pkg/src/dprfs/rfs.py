"""Poisson random finite sets with Gaussian feature densities.

Every density in this module is taken with respect to a unit hyper-volume
reference measure, so the density of a pattern ``X = {x_1, ..., x_n}`` is
``exp(-rate) * rate**n * prod_i f(x_i)`` with no volume factor.  All values
are returned on the log scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, ParameterError

LOG_2PI = math.log(2.0 * math.pi)


class PointPattern:
    """An unordered finite set of points in R^d.

    The empty pattern keeps its dimension so that dimension checks stay
    possible.  Instances are immutable; ``points`` is a read-only
    ``(n, d)`` float array.
    """

    __slots__ = ("_points",)

    def __init__(self, points=(), dim=None):
        arr = np.asarray(points, dtype=float)
        if arr.size == 0:
            if dim is None:
                if arr.ndim == 2 and arr.shape[1] > 0:
                    dim = arr.shape[1]
                else:
                    raise InputError("empty pattern needs an explicit dimension")
            arr = np.zeros((0, int(dim)))
        else:
            if arr.ndim == 1:
                # a flat list of scalars is a 1-D pattern
                arr = arr[:, None]
            if arr.ndim != 2:
                raise InputError(f"points must form an (n, d) array, got shape {arr.shape}")
            if dim is not None and arr.shape[1] != dim:
                raise InputError(f"points have dimension {arr.shape[1]}, expected {dim}")
            if not np.all(np.isfinite(arr)):
                raise InputError("points must be finite")
        if arr.shape[1] < 1:
            raise InputError("dimension must be at least 1")
        arr = np.array(arr, dtype=float)
        arr.flags.writeable = False
        self._points = arr

    @classmethod
    def empty(cls, dim):
        return cls((), dim=dim)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self):
        return self._points.shape[0]

    def __iter__(self):
        return iter(self._points)

    def __eq__(self, other):
        # set equality; points are compared after a canonical sort
        if not isinstance(other, PointPattern):
            return NotImplemented
        if self.dim != other.dim or len(self) != len(other):
            return False
        return bool(np.array_equal(_canonical(self._points), _canonical(other._points)))

    def __hash__(self):
        return hash((self.dim, _canonical(self._points).tobytes()))

    def __repr__(self):
        return f"PointPattern(n={len(self)}, dim={self.dim})"

    def tolist(self):
        return self._points.tolist()


def _canonical(arr):
    if len(arr) == 0:
        return arr
    order = np.lexsort(arr.T[::-1])
    return arr[order]


@dataclass(frozen=True)
class GaussianParams:
    """Mean and covariance of a multivariate normal feature density."""

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    log_det: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ParameterError(
                f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
            raise ParameterError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ParameterError("covariance must be positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "log_det", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class PoissonRfsParams:
    """Rate (expected cardinality) and Gaussian feature density of a Poisson RFS."""

    rate: float
    feature: GaussianParams

    def __post_init__(self):
        rate = float(self.rate)
        if not (rate > 0.0 and math.isfinite(rate)):
            raise ParameterError(f"rate must be positive and finite, got {self.rate!r}")
        object.__setattr__(self, "rate", rate)

    @property
    def dim(self) -> int:
        return self.feature.dim


def gaussian_log_density(x, params: GaussianParams):
    """Log density of N(mean, covariance) at ``x``.

    ``x`` may be a single d-vector or scalar (returns a float) or an
    ``(n, d)`` array (returns an array of n values).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x2 = x.reshape(1, -1) if single else x
    if x2.ndim != 2 or x2.shape[1] != params.dim:
        raise InputError(f"point shape {x.shape} does not match density dimension {params.dim}")
    diff = (x2 - params.mean).T
    z = solve_triangular(params.chol, diff, lower=True, check_finite=False)
    out = -0.5 * (params.dim * LOG_2PI + params.log_det + np.sum(z * z, axis=0))
    return float(out[0]) if single else out


def log_cardinality_pmf(n, rate):
    """Poisson log pmf ``n log(rate) - rate - log(n!)``."""
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate!r}")
    if n < 0:
        raise InputError("cardinality must be nonnegative")
    return n * math.log(rate) - rate - math.lgamma(n + 1)


def log_poisson_rfs_density(pattern: PointPattern, params: PoissonRfsParams):
    """Log density of a point pattern under a Poisson RFS (unit hyper-volume)."""
    if pattern.dim != params.dim:
        raise InputError(f"pattern dimension {pattern.dim} != parameter dimension {params.dim}")
    n = len(pattern)
    out = -params.rate + n * math.log(params.rate)
    if n:
        # sum in a canonical order so the value is exactly permutation invariant
        terms = np.sort(gaussian_log_density(pattern.points, params.feature))
        out += math.fsum(terms)
    return out


def sample_poisson_rfs(params: PoissonRfsParams, rng) -> PointPattern:
    """Draw a cardinality from Poisson(rate), then that many i.i.d. Gaussian points."""
    n = int(rng.poisson(params.rate))
    if n == 0:
        return PointPattern.empty(params.dim)
    z = rng.standard_normal((n, params.dim))
    return PointPattern(params.feature.mean + z @ params.feature.chol.T)
