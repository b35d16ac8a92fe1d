"""Collapsed Gibbs sampling for Dirichlet process mixtures of Poisson RFSs.

Mixture weights and per-cluster (rate, Gaussian) parameters are integrated
out; only the cluster indicator of each set-valued observation is sampled.
For observation i the conditional over clusters is proportional to

    n_{-i,k} * f_k(X_i)      for every live cluster k
    eta * f_0(X_i)           for a new cluster

where f_k is the conjugate predictive density given the other members of
cluster k and f_0 the prior predictive.  The concentration eta can be
resampled each sweep with the Escobar & West auxiliary-variable update.

The module also carries prior simulators for the Dirichlet process
(stick-breaking weights and the Polya urn), used to check the CRP prior.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .conjugate import (
    GammaParams,
    NiwParams,
    RfsPrior,
    SetSufficientStats,
    _log_det_spd,
    _niw_update,
    niw_log_normalizer,
)
from .errors import InputError, StateError

logger = logging.getLogger(__name__)

NEW = "new"
UNASSIGNED = -1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Base-measure parameters, DP concentration and its optional Gamma hyperprior."""

    rate_prior: GammaParams
    feature_prior: NiwParams
    concentration: float = 1.0
    concentration_hyperprior: tuple[float, float] | None = (1.0, 1.0)

    def __post_init__(self):
        if not self.concentration > 0:
            raise InputError(f"concentration must be positive, got {self.concentration}")
        if self.concentration_hyperprior is not None:
            a, b = self.concentration_hyperprior
            if not (a > 0 and b > 0):
                raise InputError("concentration hyperprior needs positive shape and rate")

    @property
    def prior(self) -> RfsPrior:
        return RfsPrior(self.rate_prior, self.feature_prior)

    @classmethod
    def from_prior(cls, prior: RfsPrior, **kwargs) -> Hyperparams:
        return cls(prior.rate_prior, prior.feature_prior, **kwargs)


class ClusterStats:
    """Sufficient statistics of one cluster plus its cached posterior.

    The cache holds everything a predictive evaluation needs, so scoring an
    observation against the cluster costs one small NIW update.
    """

    __slots__ = ("stats", "shape", "rate", "loc", "kappa", "nu", "lam", "log_det", "log_norm")

    def __init__(self, stats: SetSufficientStats, prior: RfsPrior):
        self.stats = stats
        self._refresh(prior)

    @property
    def member_count(self) -> int:
        return self.stats.num_sets

    def _refresh(self, prior):
        st = self.stats
        self.shape = prior.rate_prior.shape + st.total_points
        self.rate = prior.rate_prior.rate + st.num_sets
        fp = prior.feature_prior
        if st.total_points == 0:
            self.loc, self.kappa, self.nu, self.lam = fp.mean_loc, fp.mean_scale, fp.dof, fp.scale_matrix
            self.log_det = fp.log_det
        else:
            self.loc, self.kappa, self.nu, self.lam = _niw_update(
                fp.mean_loc, fp.mean_scale, fp.dof, fp.scale_matrix,
                st.total_points, st.point_sum, st.point_scatter)
            self.log_det = _log_det_spd(self.lam)
        self.log_norm = niw_log_normalizer(self.kappa, self.nu, self.log_det, fp.dim)

    def add(self, pstats: SetSufficientStats, prior: RfsPrior):
        self.stats = self.stats + pstats
        self._refresh(prior)

    def remove(self, pstats: SetSufficientStats, prior: RfsPrior):
        self.stats = self.stats - pstats
        self._refresh(prior)

    def log_predictive(self, pstats: SetSufficientStats) -> float:
        """Conjugate predictive log density of a pattern summarized by ``pstats``."""
        a, b = self.shape, self.rate
        n = pstats.total_points
        out = math.lgamma(a + n) - math.lgamma(a) + a * math.log(b) - (a + n) * math.log(b + 1.0)
        if n:
            _, kappa_n, nu_n, lam_n = _niw_update(self.loc, self.kappa, self.nu, self.lam,
                                                  n, pstats.point_sum, pstats.point_scatter)
            d = self.loc.size
            out += (niw_log_normalizer(kappa_n, nu_n, _log_det_spd(lam_n), d)
                    - self.log_norm - 0.5 * n * d * LOG_2PI)
        return out

    def log_marginal(self, prior: RfsPrior) -> float:
        """Joint log density of all member patterns with parameters integrated out."""
        st = self.stats
        a0, b0 = prior.rate_prior.shape, prior.rate_prior.rate
        out = (math.lgamma(self.shape) - math.lgamma(a0) + a0 * math.log(b0)
               - self.shape * math.log(self.rate))
        if st.total_points:
            fp = prior.feature_prior
            out += (self.log_norm - niw_log_normalizer(fp.mean_scale, fp.dof, fp.log_det, fp.dim)
                    - 0.5 * st.total_points * fp.dim * LOG_2PI)
        return out

    def posterior(self) -> tuple[GammaParams, NiwParams]:
        return GammaParams(self.shape, self.rate), NiwParams(self.loc, self.kappa, self.nu, self.lam)


@dataclass
class GibbsState:
    """Cluster indicators, live cluster table and current concentration.

    ``assignments[i] == UNASSIGNED`` only transiently, while observation i is
    being resampled.  Cluster ids are never reused within a chain.
    """

    assignments: np.ndarray
    clusters: dict
    concentration: float
    pattern_stats: list = field(repr=False)
    prior: RfsPrior = field(repr=False)
    next_id: int = 0
    _fresh: ClusterStats | None = field(default=None, init=False, repr=False)

    @classmethod
    def initial(cls, data, hyper: Hyperparams, num_clusters=1, rng=None) -> GibbsState:
        """All observations in one cluster, or spread uniformly over ``num_clusters``."""
        data = list(data)
        if not data:
            raise InputError("data must contain at least one pattern")
        dim = data[0].dim
        for i, x in enumerate(data):
            if x.dim != dim:
                raise InputError(f"pattern {i} has dimension {x.dim}, expected {dim}")
        if dim != hyper.feature_prior.dim:
            raise InputError(f"data dimension {dim} != prior dimension {hyper.feature_prior.dim}")
        n = len(data)
        if num_clusters <= 1:
            labels = np.zeros(n, dtype=int)
        else:
            if rng is None:
                raise InputError("random initialization needs an rng")
            labels = rng.integers(0, num_clusters, size=n)
            _, labels = np.unique(labels, return_inverse=True)
        pstats = [SetSufficientStats.of_pattern(x) for x in data]
        prior = hyper.prior
        clusters = {}
        for k in range(int(labels.max()) + 1):
            members = [pstats[i] for i in np.flatnonzero(labels == k)]
            clusters[k] = ClusterStats(sum(members[1:], members[0]), prior)
        return cls(labels.astype(int), clusters, float(hyper.concentration),
                   pstats, prior, next_id=len(clusters))

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def remove(self, i):
        k = int(self.assignments[i])
        if k == UNASSIGNED:
            raise StateError(f"observation {i} is not assigned")
        cluster = self.clusters[k]
        if cluster.member_count == 1:
            del self.clusters[k]
        else:
            cluster.remove(self.pattern_stats[i], self.prior)
        self.assignments[i] = UNASSIGNED

    def assign(self, i, k):
        if self.assignments[i] != UNASSIGNED:
            raise StateError(f"observation {i} is already assigned")
        if k is NEW:
            k = self.next_id
            self.next_id += 1
            self.clusters[k] = ClusterStats(self.pattern_stats[i], self.prior)
        else:
            self.clusters[k].add(self.pattern_stats[i], self.prior)
        self.assignments[i] = k
        return k

    def log_likelihood(self) -> float:
        """log p(data | partition) with all cluster parameters integrated out."""
        return math.fsum(c.log_marginal(self.prior) for c in self.clusters.values())

    def check(self, data, atol=1e-6):
        """Recompute every cluster from scratch and compare with the cached statistics."""
        if np.any(self.assignments == UNASSIGNED):
            raise StateError("unassigned observation")
        ids = set(np.unique(self.assignments).tolist())
        if ids != set(self.clusters):
            raise StateError(f"assignment ids {sorted(ids)} != live clusters {sorted(self.clusters)}")
        if sum(c.member_count for c in self.clusters.values()) != len(data):
            raise StateError("member counts do not sum to N")
        for k, cluster in self.clusters.items():
            members = [SetSufficientStats.of_pattern(data[i]) for i in np.flatnonzero(self.assignments == k)]
            fresh = sum(members[1:], members[0])
            st = cluster.stats
            if (fresh.num_sets != st.num_sets or fresh.total_points != st.total_points
                    or not np.allclose(fresh.point_sum, st.point_sum, rtol=0, atol=atol)
                    or not np.allclose(fresh.point_scatter, st.point_scatter, rtol=1e-9, atol=atol)):
                raise StateError(f"cluster {k} statistics drifted from its members")


def assignment_log_weights(state: GibbsState, pattern, hyper: Hyperparams, index=None):
    """Unnormalized log conditional weights for the cluster of one observation.

    Returns ``[(cluster_id, log_weight), ..., (NEW, log_weight)]`` with live
    clusters in ascending id order.  The observation must already be removed
    from ``state``; pass ``index`` to have that checked.
    """
    if index is not None and state.assignments[index] != UNASSIGNED:
        raise StateError(f"observation {index} is still counted in cluster {state.assignments[index]}")
    pstats = state.pattern_stats[index] if index is not None else SetSufficientStats.of_pattern(pattern)
    return _log_weights(state, pstats, state.concentration)


def _log_weights(state, pstats, eta):
    out = []
    for k in sorted(state.clusters):
        c = state.clusters[k]
        out.append((k, math.log(c.member_count) + c.log_predictive(pstats)))
    fresh = _prior_cluster(state)
    out.append((NEW, math.log(eta) + fresh.log_predictive(pstats)))
    return out


def _prior_cluster(state):
    cached = state._fresh
    if cached is None:
        cached = ClusterStats(SetSufficientStats.empty(state.prior.dim), state.prior)
        state._fresh = cached
    return cached


def normalize_log_weights(log_weights) -> np.ndarray:
    """Probabilities from log weights via the max-shift (log-sum-exp) trick."""
    w = np.asarray(log_weights, dtype=float)
    w = np.exp(w - w.max())
    return w / w.sum()


def sample_from_log_weights(log_weights, rng) -> int:
    """Inverse-CDF draw of an index; ties go to the earliest entry."""
    top = max(log_weights)
    weights = [math.exp(w - top) for w in log_weights]
    u = rng.random() * math.fsum(weights)
    acc = 0.0
    for idx, w in enumerate(weights):
        acc += w
        if u < acc:
            return idx
    return len(weights) - 1


def gibbs_sweep(state: GibbsState, data, hyper: Hyperparams, rng) -> GibbsState:
    """Resample every indicator once, in index order.  Mutates and returns ``state``.

    A cluster emptied by removing its last member is deleted before the
    weights are computed, so NEW is always a distinct option.
    """
    for i in range(len(data)):
        state.remove(i)
        options = _log_weights(state, state.pattern_stats[i], state.concentration)
        choice = sample_from_log_weights([w for _, w in options], rng)
        state.assign(i, options[choice][0])
    return state


def sample_concentration(eta, num_clusters, num_obs, hyperprior, rng) -> float:
    """Escobar & West update of the DP concentration under a Gamma(a, b) hyperprior.

    Draw ``x ~ Beta(eta + 1, N)``, then eta from the two-component Gamma
    mixture with shapes a + K and a + K - 1, common rate b - log x and odds
    (a + K - 1) / (N (b - log x)).  Returns ``eta`` unchanged when
    ``hyperprior`` is None.
    """
    if hyperprior is None:
        return eta
    if num_clusters < 1 or num_obs < 1:
        raise InputError("need at least one cluster and one observation")
    a, b = hyperprior
    x = rng.beta(eta + 1.0, num_obs)
    rate = b - math.log(x)
    odds = (a + num_clusters - 1.0) / (num_obs * rate)
    shape = a + num_clusters if rng.random() < odds / (1.0 + odds) else a + num_clusters - 1.0
    if shape <= 0:
        # a + K - 1 can only vanish for K = 1 with a tiny a
        shape = a + num_clusters
    return max(float(rng.gamma(shape, 1.0 / rate)), 1e-300)


@dataclass(frozen=True)
class SweepRecord:
    sweep: int
    k: int
    assignments: np.ndarray
    concentration: float
    loglik: float


@dataclass
class ChainTrace:
    """Per-sweep records of a chain; record 0 is the initial state.

    ``burn_in`` counts leading sweeps excluded from summaries.
    """

    records: list
    burn_in: int = 0
    config: dict = field(default_factory=dict)

    def post_burn_in(self):
        return [r for r in self.records if r.sweep > self.burn_in]

    def k_values(self):
        return [r.k for r in self.records]

    @property
    def final(self) -> SweepRecord:
        return self.records[-1]

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class ChainConfig:
    num_sweeps: int = 500
    burn_in: int | None = None
    seed: int | None = None
    resample_concentration: bool = True
    init_clusters: int = 1

    def resolved_burn_in(self) -> int:
        if self.burn_in is None:
            return self.num_sweeps // 10
        return self.burn_in


def _canonical_labels(assignments):
    # relabel by first appearance so traces do not depend on id churn
    _, first, inverse = np.unique(assignments, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse]


def run_chain(data, hyper: Hyperparams, config: ChainConfig = ChainConfig(), callback=None) -> ChainTrace:
    """Run a collapsed Gibbs chain from a single-cluster (or random) start.

    Every sweep is recorded, including burn-in; summaries skip the first
    ``burn_in`` sweeps.
    """
    data = list(data)
    if not data:
        raise InputError("data must contain at least one pattern")
    if config.num_sweeps < 0:
        raise InputError("num_sweeps must be nonnegative")
    rng = np.random.default_rng(config.seed)
    state = GibbsState.initial(data, hyper, num_clusters=config.init_clusters, rng=rng)
    burn_in = config.resolved_burn_in()
    resample = config.resample_concentration and hyper.concentration_hyperprior is not None

    def record(sweep):
        ll = state.log_likelihood()
        if not math.isfinite(ll):
            raise FloatingPointError(f"non-finite log-likelihood at sweep {sweep}")
        return SweepRecord(sweep, state.num_clusters, _canonical_labels(state.assignments),
                           state.concentration, ll)

    records = [record(0)]
    for sweep in range(1, config.num_sweeps + 1):
        gibbs_sweep(state, data, hyper, rng)
        if resample:
            state.concentration = sample_concentration(
                state.concentration, state.num_clusters, len(data), hyper.concentration_hyperprior, rng)
        records.append(record(sweep))
        if callback is not None:
            callback(sweep, state)
        logger.debug("sweep %d: K=%d eta=%.4g", sweep, state.num_clusters, state.concentration)
    return ChainTrace(records, burn_in=burn_in, config={
        "num_sweeps": config.num_sweeps, "burn_in": burn_in, "seed": config.seed,
        "resample_concentration": resample, "init_clusters": config.init_clusters,
    })


def k_mode(values) -> int:
    """Most frequent K; ties resolved toward the smaller K."""
    counts = Counter(values)
    if not counts:
        raise InputError("no K values to summarize")
    best = max(counts.values())
    return min(k for k, c in counts.items() if c == best)


@dataclass(frozen=True)
class ClusterSummary:
    label: int
    member_count: int
    total_points: int
    rate_mean: float
    location_mean: np.ndarray
    predictive_covariance: np.ndarray
    degenerate: bool
    members: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class PosteriorSummary:
    k_mode: int
    num_records: int
    final_assignments: np.ndarray
    clusters: list

    @property
    def kept(self):
        return [c for c in self.clusters if not c.degenerate]

    def to_dict(self) -> dict:
        return {
            "k_mode": self.k_mode,
            "num_records": self.num_records,
            "final_assignments": [int(a) for a in self.final_assignments],
            "clusters": [{
                "label": c.label,
                "member_count": c.member_count,
                "total_points": c.total_points,
                "rate_mean": c.rate_mean,
                "location_mean": np.asarray(c.location_mean).tolist(),
                "predictive_covariance": np.asarray(c.predictive_covariance).tolist(),
                "degenerate": c.degenerate,
            } for c in self.clusters],
        }

    @classmethod
    def from_dict(cls, doc) -> PosteriorSummary:
        final = np.asarray(doc["final_assignments"], dtype=int)
        clusters = [ClusterSummary(
            label=int(c["label"]), member_count=int(c["member_count"]),
            total_points=int(c["total_points"]),
            rate_mean=None if c.get("rate_mean") is None else float(c["rate_mean"]),
            location_mean=np.asarray(c["location_mean"], dtype=float),
            predictive_covariance=np.asarray(c["predictive_covariance"], dtype=float),
            degenerate=bool(c["degenerate"]), members=np.flatnonzero(final == int(c["label"])),
        ) for c in doc["clusters"]]
        return cls(int(doc["k_mode"]), int(doc["num_records"]), final, clusters)

    @property
    def flagged(self):
        return [c for c in self.clusters if c.degenerate]


def summarize(trace: ChainTrace, data, hyper: Hyperparams, degenerate_factor=1e6) -> PosteriorSummary:
    """K mode over post-burn-in sweeps and per-cluster posteriors of the final sweep.

    A cluster is flagged degenerate when the spectral norm of its predictive
    covariance exceeds ``degenerate_factor`` times that of the pooled data
    covariance.
    """
    kept = trace.post_burn_in()
    if not kept:
        raise InputError("trace has no post-burn-in sweeps")
    data = list(data)
    final = trace.final.assignments
    if len(final) != len(data):
        raise InputError(f"trace covers {len(final)} observations, data has {len(data)}")
    prior = hyper.prior
    pts = np.concatenate([x.points for x in data], axis=0)
    if len(pts) >= 2:
        ref = float(np.linalg.norm(np.atleast_2d(np.cov(pts, rowvar=False)), 2))
    else:
        ref = 1.0
    ref = ref if ref > 0 else 1.0
    clusters = []
    for label in np.unique(final):
        members = np.flatnonzero(final == label)
        stats = SetSufficientStats.of_patterns([data[i] for i in members], prior.dim)
        c = ClusterStats(stats, prior)
        rate_post, feat_post = c.posterior()
        cov = feat_post.predictive_covariance()
        norm = float(np.linalg.norm(cov, 2)) if np.all(np.isfinite(cov)) else math.inf
        clusters.append(ClusterSummary(
            label=int(label), member_count=len(members), total_points=stats.total_points,
            rate_mean=rate_post.mean, location_mean=feat_post.mean_loc,
            predictive_covariance=cov, degenerate=bool(norm > degenerate_factor * ref),
            members=members))
    return PosteriorSummary(k_mode([r.k for r in kept]), len(kept), final, clusters)


def sample_gem_weights(eta, truncation, rng) -> np.ndarray:
    """First ``truncation`` stick-breaking weights of GEM(eta).

    The leftover mass ``1 - sum`` equals ``prod(1 - v_k)``.
    """
    if truncation < 1 or not eta > 0:
        raise InputError("need truncation >= 1 and eta > 0")
    v = rng.beta(1.0, eta, size=truncation)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - v)[:-1]))
    return v * remaining


def polya_urn_sample(num_draws, eta, base_sampler, rng) -> list:
    """Sequential draws from a DP(eta, base) via the Blackwell-MacQueen urn.

    Draw m takes a fresh value from ``base_sampler(rng)`` with probability
    eta / (m - 1 + eta) and otherwise repeats a uniformly chosen earlier draw.
    """
    if num_draws < 1:
        raise InputError("need at least one draw")
    values = [base_sampler(rng)]
    for m in range(1, num_draws):
        if rng.random() * (m + eta) < eta:
            values.append(base_sampler(rng))
        else:
            values.append(values[int(rng.integers(m))])
    return values
