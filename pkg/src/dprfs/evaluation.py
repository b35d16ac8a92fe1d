"""Partition and rate-recovery metrics against generator ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError


def k_trace(trace):
    """``[(sweep, K), ...]`` for every recorded sweep."""
    if not len(trace):
        raise InputError("empty trace")
    return [(r.sweep, r.k) for r in trace.records]


def contingency(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise InputError(f"prediction and truth lengths differ: {pred.shape} vs {truth.shape}")
    pred_ids, p = np.unique(pred, return_inverse=True)
    true_ids, t = np.unique(truth, return_inverse=True)
    table = np.zeros((len(pred_ids), len(true_ids)), dtype=int)
    np.add.at(table, (p, t), 1)
    return table, pred_ids, true_ids


def match_clusters(pred, truth) -> dict:
    """Optimal one-to-one map ``{true label: predicted cluster}`` maximizing agreement."""
    table, pred_ids, true_ids = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return {true_ids[c].item(): pred_ids[r].item() for r, c in zip(rows, cols)}


def partition_accuracy(pred, truth) -> float:
    """Fraction of items on the diagonal of the best cluster-to-label matching."""
    table, _, _ = contingency(pred, truth)
    if table.size == 0:
        raise InputError("empty partitions")
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / len(np.asarray(pred))


@dataclass(frozen=True)
class RateEntry:
    component: int
    true_rate: float
    cluster: int | None
    estimated_rate: float | None
    shared_members: int

    @property
    def matched(self) -> bool:
        return self.cluster is not None


@dataclass(frozen=True)
class RateReport:
    entries: list
    flagged: list
    unmatched_clusters: list

    def to_dict(self) -> dict:
        return {
            "components": [
                {"component": e.component, "true_rate": e.true_rate, "cluster": e.cluster,
                 "estimated_rate": e.estimated_rate, "shared_members": e.shared_members,
                 "status": "matched" if e.matched else "unmatched"}
                for e in self.entries],
            "flagged_clusters": self.flagged,
            "unmatched_clusters": self.unmatched_clusters,
        }


def rate_report(summary, true_rates, labels) -> RateReport:
    """Pair each generator component with the posterior mean rate of its matched cluster.

    Degenerate clusters are left out of the matching and listed under
    ``flagged``; components without a partner are reported as unmatched.
    """
    if not summary.clusters:
        raise InputError("summary has no clusters")
    labels = np.asarray(labels)
    final = np.asarray(summary.final_assignments)
    if len(labels) != len(final):
        raise InputError(f"{len(labels)} labels for {len(final)} assignments")
    kept = [c for c in summary.clusters if not c.degenerate]
    by_label = {c.label: c for c in kept}
    flagged = [{"cluster": c.label, "members": c.member_count, "total_points": c.total_points,
                "estimated_rate": c.rate_mean} for c in summary.clusters if c.degenerate]
    mask = np.isin(final, list(by_label))
    matching = match_clusters(final[mask], labels[mask]) if mask.any() else {}
    entries = []
    for comp, rate in enumerate(true_rates):
        cluster = matching.get(comp)
        if cluster is None:
            entries.append(RateEntry(comp, float(rate), None, None, 0))
        else:
            shared = int(np.sum((final == cluster) & (labels == comp)))
            entries.append(RateEntry(comp, float(rate), int(cluster), by_label[cluster].rate_mean, shared))
    used = {e.cluster for e in entries if e.matched}
    unmatched = [{"cluster": c.label, "members": c.member_count, "estimated_rate": c.rate_mean}
                 for c in kept if c.label not in used]
    return RateReport(entries, flagged, unmatched)
