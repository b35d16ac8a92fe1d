"""Command-line front end: ``dprfs generate | fit | eval``.

Configuration precedence is flags > ``--config`` JSON file > built-in
defaults, and the resolved configuration is written into every output.
``RFS_SEED`` supplies the seed when no ``--seed`` is given.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import fit_dpgmm_collapsed, fit_gmm_em, pool_patterns
from .conjugate import SetSufficientStats, default_prior, niw_posterior
from .errors import DprfsError
from .evaluation import k_trace, partition_accuracy, rate_report
from .sampler import (
    ChainConfig,
    ChainTrace,
    Hyperparams,
    PosteriorSummary,
    SweepRecord,
    k_mode,
    run_chain,
    summarize,
)
from .synth import StarConfig, generate_star, read_dataset, write_dataset

logger = logging.getLogger("dprfs")

EXIT_INPUT = 2
EXIT_NUMERIC = 3

FIT_DEFAULTS = {
    "num_sweeps": 500,
    "burn_in": None,
    "seed": 0,
    "resample_concentration": True,
    "concentration": 1.0,
    "concentration_hyperprior": [1.0, 1.0],
    "rate_shape": 1.0,
    "rate_rate": 1.0,
    "mean_scale": 0.01,
    "dof": None,
    "init_clusters": 1,
    "k": None,
    "restarts": 5,
    "max_iters": 500,
    "tol": 1e-10,
    "chains": 1,
    "degenerate_factor": 1e6,
}


def _default_seed():
    env = os.environ.get("RFS_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise DprfsError(f"RFS_SEED must be an integer, got {env!r}") from None


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DprfsError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise DprfsError("config file must hold a JSON object")
    return doc


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _merge(defaults, file_cfg, flags):
    out = dict(defaults)
    for key, value in file_cfg.items():
        out[key] = value
    for key, value in flags.items():
        if value is not None:
            out[key] = value
    return out


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args):
    file_cfg = _load_config(args.config)
    flags = {
        "num_observations": args.num_observations,
        "component_rates": args.rates,
        "component_weights": args.weights,
        "seed": args.seed,
    }
    defaults = StarConfig(seed=_default_seed()).to_dict()
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise DprfsError(f"unknown config keys: {sorted(unknown)}")
    config = StarConfig(**_merge(defaults, file_cfg, flags))
    data, labels = generate_star(config)
    write_dataset(args.out, data, labels, meta={"generator": "star", "config": config.to_dict(),
                                                "dim": config.dim})
    print(json.dumps(config.to_dict(), sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _resolve_fit(args):
    file_cfg = _load_config(args.config)
    unknown = set(file_cfg) - set(FIT_DEFAULTS)
    if unknown:
        raise DprfsError(f"unknown config keys: {sorted(unknown)}")
    flags = {
        "num_sweeps": args.sweeps, "burn_in": args.burn_in, "seed": args.seed,
        "concentration": args.concentration, "rate_shape": args.rate_shape,
        "rate_rate": args.rate_rate, "mean_scale": args.mean_scale, "dof": args.dof,
        "k": args.k, "restarts": args.restarts, "chains": args.chains,
        "init_clusters": args.init_clusters,
    }
    if args.no_resample_concentration:
        flags["resample_concentration"] = False
    defaults = dict(FIT_DEFAULTS, seed=_default_seed())
    cfg = _merge(defaults, file_cfg, flags)
    cfg["method"] = args.method
    cfg["dataset"] = str(args.dataset)
    if cfg["burn_in"] is None:
        cfg["burn_in"] = cfg["num_sweeps"] // 10
    if cfg["method"] == "gmm" and not cfg["k"]:
        raise DprfsError("gmm needs --k")
    if cfg["chains"] < 1:
        raise DprfsError("--chains must be at least 1")
    return cfg


def _hyper(cfg, data):
    prior = default_prior(data, shape=cfg["rate_shape"], rate=cfg["rate_rate"],
                          mean_scale=cfg["mean_scale"], dof=cfg["dof"])
    hp = cfg["concentration_hyperprior"]
    return Hyperparams(prior.rate_prior, prior.feature_prior, cfg["concentration"],
                       None if hp is None else tuple(hp))


def _prior_doc(hyper):
    fp = hyper.feature_prior
    return {
        "rate_prior": {"shape": hyper.rate_prior.shape, "rate": hyper.rate_prior.rate},
        "feature_prior": {"mean_loc": fp.mean_loc.tolist(), "mean_scale": fp.mean_scale,
                          "dof": fp.dof, "scale_matrix": fp.scale_matrix.tolist()},
    }


def write_trace_csv(path, trace: ChainTrace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep", "k", "eta", "loglik"])
        for r in trace.records:
            writer.writerow([r.sweep, r.k, "" if r.concentration is None else repr(float(r.concentration)),
                             repr(float(r.loglik))])


def read_trace_csv(path) -> ChainTrace:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sweep", "k", "eta", "loglik"]:
            raise DprfsError(f"{path}: unexpected trace header {reader.fieldnames}")
        for row in reader:
            eta = float(row["eta"]) if row["eta"] else None
            records.append(SweepRecord(int(row["sweep"]), int(row["k"]), None, eta, float(row["loglik"])))
    return ChainTrace(records)


def _point_summary(trace, points, hyper):
    """Summary of a point-level chain, in the same JSON layout as the set sampler's."""
    final = trace.final.assignments
    clusters = []
    for label in np.unique(final):
        members = points[final == label]
        post = _niw_of_points(hyper.feature_prior, members)
        clusters.append({
            "label": int(label), "member_count": int(len(members)), "total_points": int(len(members)),
            "rate_mean": None, "location_mean": post.mean_loc.tolist(),
            "predictive_covariance": post.predictive_covariance().tolist(), "degenerate": False,
        })
    kept = trace.post_burn_in() or trace.records
    return {"k_mode": k_mode([r.k for r in kept]), "num_records": len(kept),
            "final_assignments": [int(a) for a in final], "clusters": clusters}


def _niw_of_points(prior, pts):
    stats = SetSufficientStats(1, len(pts), pts.sum(axis=0), pts.T @ pts)
    return niw_posterior(prior, stats)


def _run_one(cfg, data, chain):
    """Run one chain; returns (trace, summary_doc, unit)."""
    seed = cfg["seed"] + chain
    hyper = _hyper(cfg, data)
    chain_cfg = ChainConfig(num_sweeps=cfg["num_sweeps"], burn_in=cfg["burn_in"], seed=seed,
                            resample_concentration=cfg["resample_concentration"],
                            init_clusters=cfg["init_clusters"])
    if cfg["method"] == "dprfs":
        trace = run_chain(data, hyper, chain_cfg)
        summary = summarize(trace, data, hyper, degenerate_factor=cfg["degenerate_factor"]).to_dict()
        return trace, summary, "patterns", hyper
    points = pool_patterns(data)
    if cfg["method"] == "dpgmm":
        hp = hyper.concentration_hyperprior
        trace = fit_dpgmm_collapsed(points, hyper.feature_prior, hyper.concentration, hp, chain_cfg)
        return trace, _point_summary(trace, points, hyper), "points", hyper
    fit = fit_gmm_em(points, cfg["k"], max_iters=cfg["max_iters"], tol=cfg["tol"],
                     seed=seed, restarts=cfg["restarts"])
    labels = np.argmax(fit.responsibilities, axis=1)
    records = [SweepRecord(i, fit.model.K, None, None, ll) for i, ll in enumerate(fit.log_likelihoods)]
    records[-1] = SweepRecord(records[-1].sweep, fit.model.K, labels, None, records[-1].loglik)
    trace = ChainTrace(records, burn_in=0)
    summary = {
        "k_mode": fit.model.K, "num_records": len(records),
        "final_assignments": [int(a) for a in labels],
        "clusters": [{
            "label": k, "member_count": int(np.sum(labels == k)), "total_points": int(np.sum(labels == k)),
            "rate_mean": None, "weight": float(fit.model.weights[k]),
            "location_mean": comp.mean.tolist(), "predictive_covariance": comp.covariance.tolist(),
            "degenerate": False,
        } for k, comp in enumerate(fit.model.components)],
        "regularized": fit.regularized, "converged": fit.converged,
    }
    return trace, summary, "points", hyper


def _fit_chain_job(cfg, chain):
    data, _ = read_dataset(cfg["dataset"])
    return _run_one(cfg, data, chain)


def cmd_fit(args):
    cfg = _resolve_fit(args)
    data, _ = read_dataset(args.dataset)
    if not data:
        raise DprfsError("dataset has no observations")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chains = cfg["chains"]
    if chains == 1:
        results = [_run_one(cfg, data, 0)]
    else:
        with ProcessPoolExecutor(max_workers=min(chains, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_fit_chain_job, [cfg] * chains, range(chains)))
    for chain, (trace, summary, unit, hyper) in enumerate(results):
        suffix = "" if chains == 1 else f"_chain{chain}"
        write_trace_csv(out / f"trace{suffix}.csv", trace)
        rec = [r for r in trace.records if r.assignments is not None]
        _dump_json(out / f"assignments{suffix}.json", {
            "unit": unit,
            "sweeps": [r.sweep for r in rec],
            "assignments": [[int(a) for a in r.assignments] for r in rec],
        })
        resolved = dict(cfg, seed=cfg["seed"] + chain, **_prior_doc(hyper))
        summary = dict(summary, method=cfg["method"], unit=unit, config=resolved)
        _dump_json(out / f"summary{suffix}.json", summary)
        print(f"{cfg['method']} chain {chain}: K mode {summary['k_mode']}, "
              f"{len(summary['clusters'])} clusters at the final sweep")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args):
    try:
        with open(args.summary, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DprfsError(f"cannot read summary {args.summary}: {exc}") from None
    data, labels, meta = read_dataset(args.dataset, with_meta=True)
    unit = doc.get("unit", "patterns")
    final = np.asarray(doc["final_assignments"], dtype=int)
    if unit == "points":
        expected = sum(len(x) for x in data)
        truth = None if labels is None else np.repeat(labels, [len(x) for x in data])
    else:
        expected = len(data)
        truth = None if labels is None else np.asarray(labels)
    if len(final) != expected:
        raise DprfsError(f"summary covers {len(final)} {unit}, dataset has {expected}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = {"method": doc.get("method"), "unit": unit, "k_mode": doc["k_mode"],
               "num_clusters_final": len(doc["clusters"]),
               "config": {"summary": str(args.summary), "dataset": str(args.dataset),
                          "trace": None if args.trace is None else str(args.trace),
                          "fit": doc.get("config")}}
    if truth is not None:
        metrics["accuracy"] = partition_accuracy(final, truth)
    if unit == "patterns":
        summary = PosteriorSummary.from_dict(doc)
        true_rates = (meta.get("config") or {}).get("component_rates")
        if truth is not None and true_rates is not None:
            metrics["rate_report"] = rate_report(summary, true_rates, truth).to_dict()
        else:
            metrics["rate_report"] = {"clusters": [
                {"cluster": c.label, "estimated_rate": c.rate_mean, "degenerate": c.degenerate}
                for c in summary.clusters]}
    _dump_json(out / "metrics.json", metrics)
    if args.trace is not None:
        trace = read_trace_csv(args.trace)
        with open(out / "k_trace.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sweep", "k"])
            writer.writerows(k_trace(trace))
    print(json.dumps({k: metrics[k] for k in ("k_mode", "accuracy") if k in metrics}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dprfs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a star benchmark dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--config")
    gen.add_argument("--num-observations", type=int)
    gen.add_argument("--rates", type=_floats)
    gen.add_argument("--weights", type=_floats)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=cmd_generate)

    fit = sub.add_parser("fit", help="fit DP-RFS, DP-GMM or GMM to a dataset")
    fit.add_argument("method", choices=["dprfs", "dpgmm", "gmm"])
    fit.add_argument("dataset")
    fit.add_argument("--out-dir", required=True)
    fit.add_argument("--config")
    fit.add_argument("--sweeps", type=int)
    fit.add_argument("--burn-in", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--concentration", type=float)
    fit.add_argument("--no-resample-concentration", action="store_true")
    fit.add_argument("--rate-shape", type=float)
    fit.add_argument("--rate-rate", type=float)
    fit.add_argument("--mean-scale", type=float)
    fit.add_argument("--dof", type=float)
    fit.add_argument("--init-clusters", type=int)
    fit.add_argument("--k", type=int)
    fit.add_argument("--restarts", type=int)
    fit.add_argument("--chains", type=int)
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("eval", help="score a fit against dataset labels")
    ev.add_argument("--summary", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--trace")
    ev.add_argument("--out-dir", required=True)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FloatingPointError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DprfsError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
