"""Command line entry point: ``convsim [global flags] <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness, logio
from .config import ExperimentSpec
from .report import emit_report
from .rng import MAX_SEED

log = logging.getLogger("convsim")

LOG_FILE = "logs.jsonl"
MODEL_DIR = "models"


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="experiment config (JSON)")
    parser.add_argument("--seed", type=_seed, default=default, help="master seed, overrides env.master_seed")
    parser.add_argument("--out", type=Path, default=default, help="output directory, overrides output_dir")
    parser.add_argument(
        "--parallel", type=int, default=argparse.SUPPRESS if suppress else 1, help="worker processes for simulation"
    )
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convsim", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    command("simulate", "simulate the training population and write the event log")
    command("train", "train every configured agent on the event log")
    p = command("abtest", "evaluate trained agents on fresh users")
    crn = p.add_mutually_exclusive_group()
    crn.add_argument("--crn", dest="crn", action="store_true", default=None, help="common random numbers across arms")
    crn.add_argument("--no-crn", dest="crn", action="store_false")
    p = command("probe", "paired forced-click incrementality probes")
    p.add_argument("--product", default="best", help='product id, or "best" for the alignment-maximizing one')
    p.add_argument("--horizon", type=int, default=None, help="steps per rollout (default: env.max_steps)")
    p.add_argument("--users", type=int, default=1000, help="number of probed user seeds")
    command("rank", "Kendall tau of each sales agent's ranking against the oracle")
    command("report", "write CSV, JSON and SVG files from metrics.json (and ranking.json)")
    return parser


def load_spec(args) -> ExperimentSpec:
    spec = logio.parse_config(args.config) if args.config else ExperimentSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, env=dataclasses.replace(spec.env, master_seed=args.seed))
    if args.out is not None:
        spec = dataclasses.replace(spec, output_dir=str(args.out))
    return spec


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_trained(spec: ExperimentSpec, out: Path):
    catalog = harness.build_catalog(spec)
    return catalog, harness.load_agents(spec, out / MODEL_DIR, catalog)


def run(args) -> int:
    spec = load_spec(args)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "simulate":
        corpus = harness.generate_logs(spec, path=out / LOG_FILE, parallel=args.parallel)
        (out / "config.json").write_text(logio.dumps_config(spec), encoding="utf-8")
        print(f"wrote {len(corpus)} timelines to {out / LOG_FILE}")

    elif args.command == "train":
        corpus = logio.read_log(out / LOG_FILE)
        catalog = harness.build_catalog(spec)
        agents = harness.train_agents(spec, corpus, catalog)
        harness.save_agents(agents, out / MODEL_DIR)
        baselines = {
            name: a.spec.attribution.baseline for name, a in agents.items() if a.spec.attribution is not None
        }
        _write_json(out / MODEL_DIR / "baselines.json", baselines)
        print(f"trained {len(agents)} agents into {out / MODEL_DIR}")

    elif args.command == "abtest":
        catalog, agents = _load_trained(spec, out)
        report = harness.run_ab_test(spec, agents, catalog, args.crn, parallel=args.parallel)
        _write_json(out / "metrics.json", report.to_dict())
        for m in report.agents:
            print(f"{m.name:28s} sales/user {m.sales_per_user:.4f} [{m.sales_ci_low:.4f}, {m.sales_ci_high:.4f}]  CTR {m.ctr:.4f}")

    elif args.command == "probe":
        catalog = harness.build_catalog(spec)
        horizon = spec.env.max_steps if args.horizon is None else args.horizon
        action = harness.alignment_maximizing_product if args.product == "best" else int(args.product)
        result = harness.probe_incrementality(
            catalog, spec.env, range(args.users), action, horizon, spec.n_bootstrap, parallel=args.parallel
        )
        _write_json(
            out / "probe.json",
            {"product": args.product, "horizon": horizon, "users": args.users,
             "mean": result.mean, "ci_low": result.ci_low, "ci_high": result.ci_high},
        )
        print(f"mean incremental sales {result.mean:.4f} [{result.ci_low:.4f}, {result.ci_high:.4f}]")

    elif args.command == "rank":
        catalog, agents = _load_trained(spec, out)
        ranking = harness.rank_schemes(spec, agents, catalog)
        _write_json(out / "ranking.json", {k: vars(v) for k, v in ranking.items()})
        for name, r in ranking.items():
            print(f"{name:28s} mean tau {r.mean_tau:.4f} ({r.n_defined} contexts)")

    elif args.command == "report":
        report = harness.MetricsReport.from_dict(json.loads((out / "metrics.json").read_text(encoding="utf-8")))
        ranking_path = out / "ranking.json"
        if ranking_path.exists():
            ranking = json.loads(ranking_path.read_text(encoding="utf-8"))
            report.ranking = {k: harness.RankingSummary(**v) for k, v in ranking.items()}
        for path in emit_report(report, out / "report"):
            print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return run(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"convsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
