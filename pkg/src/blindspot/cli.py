"""Command-line front end.

Every verb reads the layered config (shipped defaults, ``--config`` file,
``--set section.key=value`` overrides). Single-stage verbs exchange files so
the pipeline can be run piecewise:

    train      -> <out>/policies/<domain>_q_{sim,real}.csv
    collect    -> <out>/feedback.csv
    aggregate  -> <out>/aggregated.csv and <out>/noise.json
    fit        -> <out>/model.json
    evaluate   -> <out>/evaluation.json
    sweep      -> full output directory (see blindspot.experiment)
    report     -> <out>/summary_{classifier,execution}.csv
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .aggregation import AGGREGATORS, AggregatedDataset, aggregate
from .config import ConfigError, ExperimentConfig, derive_seed, load_config
from .envs import DOMAINS, make_env_pair
from .evaluation import CONDITIONS, EmptySplit, make_split, oil_run, weighted_f1
from .experiment import build_context, compare_conditions, run_experiment, train_policies, \
    write_summary
from .feedback import PROTOCOLS, FeedbackDataset, collect
from .model import TrainingSet, load_model, save_model, train_model
from .tabular import QTable

log = logging.getLogger("blindspot")


def _overrides(pairs) -> dict:
    out = {}
    for p in pairs or ():
        key, sep, val = p.partition("=")
        if not sep or "." not in key:
            raise ConfigError([f"--set {p!r}: expected section.key=value"])
        out[key.strip()] = val.strip()
    return out


def _config(args) -> ExperimentConfig:
    ov = _overrides(args.set)
    if args.seed is not None:
        ov["experiment.master_seed"] = str(args.seed)
    if args.out is not None:
        ov["experiment.out"] = args.out
    return load_config(args.config, ov)


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_context(cfg: ExperimentConfig, args):
    """Domain context from Q tables written by ``train`` (trained on the fly if absent)."""
    pair = make_env_pair(args.domain, cfg.env_config(args.domain), seed=cfg.master_seed)
    pol = Path(args.policies or Path(cfg.out) / "policies")
    f_sim, f_real = pol / f"{args.domain}_q_sim.csv", pol / f"{args.domain}_q_real.csv"
    if f_sim.exists() and f_real.exists():
        q_sim = QTable.from_csv(f_sim, pair.source.actions, "sim")
        q_real = QTable.from_csv(f_real, pair.target.actions, "real")
    else:
        log.warning("no Q tables under %s; training them now", pol)
        _, q_sim, q_real = train_policies(cfg, args.domain)
    return build_context(cfg, args.domain, args.oracle_mode, pair, q_sim, q_real)


def cmd_train(args, cfg):
    out = _out(cfg) / "policies"
    out.mkdir(exist_ok=True)
    for domain in ([args.domain] if args.domain else cfg.domains):
        _, q_sim, q_real = train_policies(cfg, domain)
        q_sim.to_csv(out / f"{domain}_q_sim.csv")
        q_real.to_csv(out / f"{domain}_q_real.csv")
        print(f"{domain}: {len(q_sim)} sim states, {len(q_real)} real states -> {out}")


def cmd_collect(args, cfg):
    ctx = _load_context(cfg, args)
    seed = derive_seed(cfg.master_seed, args.domain, "feedback", args.budget, args.replicate)
    fb = collect(args.protocol, ctx.oracle, ctx.pi_sim, ctx.pair.target, args.budget, seed)
    path = _out(cfg) / (args.name or "feedback.csv")
    fb.to_csv(path, ctx.pair.target)
    print(f"{fb.total} labels over {len(fb.states)} sim states -> {path}")


def cmd_aggregate(args, cfg):
    env = make_env_pair(args.domain, cfg.env_config(args.domain)).target
    fb = FeedbackDataset.from_csv(args.feedback, len(env.sim_fields))
    agg = aggregate(fb, args.method)
    out = _out(cfg)
    agg.to_csv(out / "aggregated.csv", env.sim_fields)
    (out / "noise.json").write_text(agg.noise_json())
    print(f"{len(agg)} states, {int(agg.label.sum())} labeled blind spot -> {out / 'aggregated.csv'}")


def cmd_fit(args, cfg):
    env = make_env_pair(args.domain, cfg.env_config(args.domain)).target
    agg = AggregatedDataset.from_csv(args.data)
    seed = derive_seed(cfg.master_seed, args.domain, "model", args.budget, args.replicate)
    m = train_model(TrainingSet.from_aggregated(agg, env.sim_fields), seed=seed,
                    space=cfg.search, n_trials=cfg.n_trials, calib_frac=cfg.calib_frac)
    path = _out(cfg) / "model.json"
    save_model(m, path)
    print(f"threshold {m.threshold:.4f}, train prior {m.prior:.4f} -> {path}")


def cmd_evaluate(args, cfg):
    ctx = _load_context(cfg, args)
    env = ctx.pair.target
    m = load_model(args.model)
    res: dict = {"blind_spots": len(ctx.truth.blind_spots)}
    if args.feedback:
        fb = FeedbackDataset.from_csv(args.feedback, len(env.sim_fields))
        split = make_split(fb, ctx.pair, ctx.pi_sim, weights=ctx.weights)
        for part in ("seen", "unseen"):
            try:
                res[f"{part}_f1"] = weighted_f1(m, getattr(split, part), ctx.truth, ctx.weights)
            except EmptySplit:
                res[f"{part}_f1"] = None
    oil_seed = derive_seed(cfg.master_seed, args.domain, "oil", args.replicate)
    for cond in CONDITIONS:
        r = oil_run(env, ctx.pi_sim, ctx.oracle, cond, m, cfg.oil_episodes, oil_seed)
        res[cond] = {"reward": r.mean_reward, "reward_std": r.reward_std,
                     "query_rate": r.query_rate}
    text = json.dumps(res, indent=2, sort_keys=True)
    (_out(cfg) / "evaluation.json").write_text(text)
    print(text)


def cmd_sweep(args, cfg):
    res = run_experiment(cfg)
    fails = res["manifest"]["failures"]
    print(f"{len(res['rows'])} rows -> {res['report']}")
    for f in fails:
        print(f"FAILED {f['cell']}: {f['error']}", file=sys.stderr)
    return 1 if fails else 0


def cmd_report(args, cfg):
    report = Path(args.report or Path(cfg.out) / "report.csv")
    if not report.exists():
        raise FileNotFoundError(f"no report at {report}")
    tables = compare_conditions(report)
    paths = write_summary(tables, args.summary_dir or report.parent)
    for name, tab in tables.items():
        print(f"== {name}")
        print(tab.to_string(float_format=lambda v: f"{v:.3f}"))
    for p in paths:
        print(f"-> {p}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file layered over the shipped defaults")
    common.add_argument("--seed", type=int, help="master seed (experiment.master_seed)")
    common.add_argument("--out", help="output directory (experiment.out)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config field; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="blindspot", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def ctx_args(sp):
        sp.add_argument("--domain", choices=DOMAINS, required=True)
        sp.add_argument("--oracle-mode", choices=("strict", "lenient"), default="strict")
        sp.add_argument("--policies", help="directory holding Q tables from `train`")

    def cell_args(sp, budget=True):
        if budget:
            sp.add_argument("--budget", type=int, default=1000)
        sp.add_argument("--replicate", type=int, default=0,
                        help="replicate index feeding the per-cell seed split")

    sp = verb("train", cmd_train, "train source and target Q tables")
    sp.add_argument("--domain", choices=DOMAINS)
    sp = verb("collect", cmd_collect, "collect oracle feedback")
    ctx_args(sp)
    sp.add_argument("--protocol", choices=PROTOCOLS, required=True)
    sp.add_argument("--name", help="output file name inside --out")
    cell_args(sp)
    sp = verb("aggregate", cmd_aggregate, "aggregate a feedback CSV")
    sp.add_argument("--domain", choices=DOMAINS, required=True)
    sp.add_argument("--feedback", required=True)
    sp.add_argument("--method", choices=AGGREGATORS, default="ds")
    sp = verb("fit", cmd_fit, "train a blind-spot model on an aggregated CSV")
    sp.add_argument("--domain", choices=DOMAINS, required=True)
    sp.add_argument("--data", required=True)
    cell_args(sp)
    sp = verb("evaluate", cmd_evaluate, "score a model: weighted F1 and oracle-in-the-loop")
    ctx_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--feedback", help="feedback CSV defining the seen/unseen split")
    cell_args(sp, budget=False)
    verb("sweep", cmd_sweep, "run the configured experiment grid")
    sp = verb("report", cmd_report, "summarize a report CSV into table shapes")
    sp.add_argument("--report", help="report CSV (default <out>/report.csv)")
    sp.add_argument("--summary-dir", help="where summary CSVs go (default: next to the report)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        rc = args.fn(args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
