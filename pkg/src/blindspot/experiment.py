"""End-to-end sweep: policies, oracle, feedback, aggregation, model, evaluation.

Output directory layout (every file is rewritten on each run):

    report.csv                  one row per evaluated condition, REPORT_COLUMNS order
    manifest.json               config hash, versions, wall-clock, failed cells
    config.ini                  the resolved config
    policies/<domain>_q_{sim,real}.csv
    truth/<domain>_<mode>.csv   ground-truth blind-spot labels
    noise/<cell>.json           fitted DS noise model (ds aggregators only)
    heatmaps/<unit>.csv         label-event count per sim state
    models/<cell>.json          serialized BlindSpotModel

A unit is (domain, oracle mode, protocol, budget, replicate); a cell adds the
aggregator. Feedback is collected once per unit and shared by its aggregators.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

from .aggregation import aggregate
from .config import ExperimentConfig, derive_seed, dump_config
from .envs import EnvPair, make_env_pair
from .evaluation import EmptySplit, bias_heatmap, make_split, oil_run, visitation_weights, \
    weighted_f1, write_heatmap
from .feedback import collect
from .model import DegenerateDataWarning, TrainingSet, save_model, train_model
from .oracle import BlindSpotTruth, Oracle, ground_truth_blind_spots, make_oracle
from .tabular import Policy, QTable, greedy_policy, train_q

log = logging.getLogger(__name__)

REPORT_VERSION = 1
REPORT_COLUMNS = ("domain", "oracle_mode", "protocol", "aggregator", "budget", "seed",
                  "seen_f1", "unseen_f1", "oil_reward", "oil_reward_std", "query_rate",
                  "condition")


@dataclass
class DomainContext:
    domain: str
    mode: str
    pair: EnvPair
    q_sim: QTable
    pi_sim: Policy
    oracle: Oracle
    truth: BlindSpotTruth
    weights: dict


def train_policies(cfg: ExperimentConfig, domain: str):
    """``(pair, q_sim, q_real)``: source Q over sim states, target Q over real states."""
    pair = make_env_pair(domain, cfg.env_config(domain), seed=cfg.master_seed)
    rl = cfg.rl
    q_sim = train_q(pair.source, "sim", _with_seed(rl, derive_seed(cfg.master_seed, domain, "q-sim")))
    q_real = train_q(pair.target, "real", _with_seed(rl, derive_seed(cfg.master_seed, domain, "q-real")))
    return pair, q_sim, q_real


def _with_seed(params, seed):
    return replace(params, seed=seed)


def build_context(cfg: ExperimentConfig, domain: str, mode: str, pair, q_sim, q_real,
                  weights=None) -> DomainContext:
    pi_sim = greedy_policy(q_sim)
    pct = None if mode == "strict" else cfg.percentiles[domain]
    oracle = make_oracle(q_real, mode, pct, env=pair.target,
                         include_zero_deltas=cfg.include_zero_deltas)
    truth = ground_truth_blind_spots(pair, pi_sim, oracle.acceptable)
    if weights is None:
        weights = visitation_weights(pair.target, pi_sim, cfg.weight_rollouts,
                                     derive_seed(cfg.master_seed, domain, "weights"))
    return DomainContext(domain, mode, pair, q_sim, pi_sim, oracle, truth, weights)


def unit_name(domain, mode, protocol, budget, rep) -> str:
    return f"{domain}_{mode}_{protocol}_b{budget}_s{rep}"


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def baseline_rows(cfg: ExperimentConfig, ctx: DomainContext) -> list[dict]:
    """Never-query and always-query rows, one each per replicate seed."""
    rows = []
    for rep in cfg.seeds:
        oil_seed = derive_seed(cfg.master_seed, ctx.domain, "oil", rep)
        for cond in ("never-query", "always-query"):
            r = oil_run(ctx.pair.target, ctx.pi_sim, ctx.oracle, cond,
                        episodes=cfg.oil_episodes, seed=oil_seed)
            rows.append({"domain": ctx.domain, "oracle_mode": ctx.mode, "protocol": "",
                         "aggregator": "", "budget": "", "seed": rep, "seen_f1": None,
                         "unseen_f1": None, "oil_reward": r.mean_reward,
                         "oil_reward_std": r.reward_std, "query_rate": r.query_rate,
                         "condition": cond})
    return rows


def run_unit(cfg: ExperimentConfig, ctx: DomainContext, protocol: str, budget: int, rep: int,
             out: Path | None = None) -> dict:
    """Collect, then aggregate/fit/evaluate per aggregator. Returns rows, models and failures."""
    env = ctx.pair.target
    name = unit_name(ctx.domain, ctx.mode, protocol, budget, rep)
    fb = collect(protocol, ctx.oracle, ctx.pi_sim, env, budget,
                 derive_seed(cfg.master_seed, ctx.domain, "feedback", budget, rep))
    if out is not None:
        write_heatmap(out / "heatmaps" / f"{name}.csv", bias_heatmap(fb), env.sim_fields)
    split = make_split(fb, ctx.pair, ctx.pi_sim, weights=ctx.weights)
    model_seed = derive_seed(cfg.master_seed, ctx.domain, "model", budget, rep)
    oil_seed = derive_seed(cfg.master_seed, ctx.domain, "oil", rep)
    rows, models, failures = [], {}, []
    for agg_name in cfg.aggregators:
        cell = f"{name}_{agg_name}"
        try:
            agg = aggregate(fb, agg_name)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateDataWarning)
                m = train_model(TrainingSet.from_aggregated(agg, env.sim_fields), seed=model_seed,
                                space=cfg.search, n_trials=cfg.n_trials, calib_frac=cfg.calib_frac)
            seen = weighted_f1(m, split.seen, ctx.truth, ctx.weights)
            try:
                unseen = weighted_f1(m, split.unseen, ctx.truth, ctx.weights)
            except EmptySplit:
                unseen = None
            r = oil_run(env, ctx.pi_sim, ctx.oracle, "model", m, cfg.oil_episodes, oil_seed)
        except Exception as e:  # noqa: BLE001 - a failed cell must not stop the sweep
            failures.append({"cell": cell, "error": f"{type(e).__name__}: {e}",
                             "traceback": traceback.format_exc()})
            continue
        if out is not None:
            if agg.noise is not None:
                (out / "noise" / f"{cell}.json").write_text(agg.noise_json())
            save_model(m, out / "models" / f"{cell}.json")
        models[agg_name] = m
        rows.append({"domain": ctx.domain, "oracle_mode": ctx.mode, "protocol": protocol,
                     "aggregator": agg_name, "budget": budget, "seed": rep, "seen_f1": seen,
                     "unseen_f1": unseen, "oil_reward": r.mean_reward,
                     "oil_reward_std": r.reward_std, "query_rate": r.query_rate,
                     "condition": "model"})
    return {"rows": rows, "models": models, "failures": failures, "feedback": fb}


# contexts are published here before the pool forks, so workers inherit them
_CONTEXTS: dict = {}


def _safe_unit(cfg, key, protocol, budget, rep, out) -> dict:
    try:
        return run_unit(cfg, _CONTEXTS[key], protocol, budget, rep, out)
    except Exception as e:  # noqa: BLE001
        return {"rows": [], "failures": [{"cell": unit_name(*key, protocol, budget, rep),
                                          "error": f"{type(e).__name__}: {e}",
                                          "traceback": traceback.format_exc()}]}


def _pool_unit(args):
    res = _safe_unit(*args)
    res.pop("models", None)
    res.pop("feedback", None)
    return res


def write_report(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])


def _versions() -> dict:
    v = {"python": platform.python_version()}
    for pkg in ("numpy", "numba", "pandas", "artifact"):
        try:
            v[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            v[pkg] = None
    return v


def run_experiment(cfg: ExperimentConfig, out=None, keep=False) -> dict:
    """Run the full grid and write the output directory.

    Returns ``{"report": path, "manifest": dict, "rows": list, "contexts": dict}``;
    with ``keep=True`` it also holds ``"units"``, the in-memory unit results
    (feedback and models), for serial runs only.
    """
    cfg.validate()
    out = Path(out or cfg.out)
    for sub in ("policies", "truth", "noise", "heatmaps", "models"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    t0 = time.perf_counter()
    timings: dict = {}
    rows: list[dict] = []
    failures: list[dict] = []
    units_out: dict = {}
    _CONTEXTS.clear()
    for domain in cfg.domains:
        t = time.perf_counter()
        pair, q_sim, q_real = train_policies(cfg, domain)
        q_sim.to_csv(out / "policies" / f"{domain}_q_sim.csv")
        q_real.to_csv(out / "policies" / f"{domain}_q_real.csv")
        weights = None
        for mode in cfg.oracle_modes:
            ctx = build_context(cfg, domain, mode, pair, q_sim, q_real, weights)
            weights = ctx.weights
            ctx.truth.to_csv(out / "truth" / f"{domain}_{mode}.csv", pair.target)
            _CONTEXTS[(domain, mode)] = ctx
            rows.extend(baseline_rows(cfg, ctx))
        timings[f"{domain}/setup"] = time.perf_counter() - t
    jobs = [((d, m), p, b, r) for d in cfg.domains for m in cfg.oracle_modes
            for p in cfg.protocols for b in cfg.budgets for r in cfg.seeds]
    t = time.perf_counter()
    if cfg.workers > 1 and not keep:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_pool_unit, [(cfg, k, p, b, r, out) for k, p, b, r in jobs]))
    else:
        results = []
        for k, p, b, r in jobs:
            log.info("unit %s", unit_name(*k, p, b, r))
            res = _safe_unit(cfg, k, p, b, r, out)
            if keep:
                units_out[(k[0], k[1], p, b, r)] = res
            results.append(res)
    timings["units"] = time.perf_counter() - t
    for res in results:
        rows.extend(res["rows"])
        failures.extend(res["failures"])
    report = out / "report.csv"
    write_report(report, rows)
    manifest = {
        "report_schema_version": REPORT_VERSION,
        "report_columns": list(REPORT_COLUMNS),
        "config_hash": cfg.hash(),
        "versions": _versions(),
        "wall_clock_s": time.perf_counter() - t0,
        "timings_s": timings,
        "n_units": len(jobs),
        "n_rows": len(rows),
        "failures": failures,
        "blind_spots": {f"{d}/{m}": len(c.truth.blind_spots) for (d, m), c in _CONTEXTS.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    result = {"report": report, "manifest": manifest, "rows": rows, "contexts": dict(_CONTEXTS)}
    if keep:
        result["units"] = units_out
    return result


def compare_conditions(report) -> dict:
    """Pivot a report into classifier and execution summary tables.

    ``classifier``: per (domain, oracle mode, protocol, aggregator, budget),
    seen/unseen F1 mean and std over seeds. ``execution``: per condition
    and cell, OIL reward and query percentage mean and std. Cells without
    data come out as NaN (blank when written) with a warning.
    """
    import pandas as pd

    df = pd.read_csv(report, keep_default_na=False, na_values=[""],
                     dtype={"protocol": str, "aggregator": str})
    keys = ["domain", "oracle_mode", "protocol", "aggregator", "budget"]
    df[["protocol", "aggregator"]] = df[["protocol", "aggregator"]].fillna("")
    df["budget"] = df["budget"].astype("Int64")
    stats = ["mean", "std"]
    models = df[df["condition"] == "model"]
    clf = models.groupby(keys, dropna=False)[["seen_f1", "unseen_f1"]].agg(stats)
    df = df.assign(query_pct=100.0 * df["query_rate"])
    exe = df.groupby(["condition", *keys], dropna=False)[["oil_reward", "query_pct"]].agg(stats)
    clf.columns = [f"{a}_{b}" for a, b in clf.columns]
    exe.columns = [f"{a}_{b}" for a, b in exe.columns]
    for name, tab in (("classifier", clf), ("execution", exe)):
        means = tab[[c for c in tab.columns if c.endswith("_mean")]]
        if len(tab) and means.isna().to_numpy().any():
            warnings.warn(f"{name} table has missing cells", stacklevel=2)
    return {"classifier": clf, "execution": exe}


def write_summary(tables: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, tab in tables.items():
        p = out_dir / f"summary_{name}.csv"
        tab.to_csv(p, na_rep="", float_format="%.6g")
        paths.append(p)
    return paths

