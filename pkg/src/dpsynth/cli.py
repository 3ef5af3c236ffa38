"""Command-line entry points.

Subcommands mirror the pipeline stages:

* ``prepare``  - split/balance/imbalance the input data, write prepared CSVs
* ``generate`` - fit generators on prepared data, write synthetic CSVs
* ``evaluate`` - score synthetic + DP + real classifiers, write records.csv
* ``run``      - the whole sweep in memory, writing all report artifacts
* ``report``   - recompute aggregates and charts from an existing records.csv

Every stage takes ``--config`` (JSON with ExperimentConfig fields) plus the
usual overrides. Failures exit nonzero after printing a machine-readable
error summary to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .harness import (
    ExperimentConfig,
    evaluate_stage,
    generate_stage,
    prepare_stage,
    run_experiment,
)
from . import report as report_mod


def _parse_values(text: str) -> tuple[float, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part in ("inf", "infinity"):
            out.append(math.inf)
        else:
            out.append(float(part))
    return tuple(out)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--model", choices=("privbayes", "dpwgan", "pategan"))
    p.add_argument("--epsilon", help="comma-separated budgets, e.g. 0.1,1,inf")
    p.add_argument("--imbalance", help="comma-separated minority ratios")
    p.add_argument("--setting", choices=("class", "single-subgroup", "multi-subgroup"))
    p.add_argument("--l", type=int, help="generator fits per cell")
    p.add_argument("--k", type=int, help="synthetic datasets per fit")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")


def _build_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            base = json.load(f)
    cfg = ExperimentConfig.from_dict(base) if base else ExperimentConfig()
    if args.model:
        cfg.model = args.model
    if args.epsilon:
        cfg.epsilons = _parse_values(args.epsilon)
    if args.imbalance:
        cfg.imbalances = _parse_values(args.imbalance)
    if args.setting:
        cfg.setting = args.setting
    if args.l is not None:
        cfg.l = args.l
    if args.k is not None:
        cfg.k = args.k
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    cfg.__post_init__()  # revalidate after overrides
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsynth",
        description="DP tabular data synthesis and disparate-impact auditing",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("prepare", "write prepared train/test splits"),
        ("generate", "fit generators and write synthetic datasets"),
        ("evaluate", "score synthetic/DP/real classifiers into records.csv"),
        ("run", "full sweep in memory, writing records, aggregates, charts"),
    ):
        _add_common(sub.add_parser(name, help=text))
    rep = sub.add_parser("report", help="aggregates + charts from records.csv")
    rep.add_argument("--records", required=True, help="path to records.csv")
    rep.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return _cmd_report(args)
        cfg = _build_config(args)
        if args.command == "prepare":
            manifest = prepare_stage(cfg)
            print(json.dumps({"prepared": manifest["imbalances"]}, indent=2))
        elif args.command == "generate":
            manifest = generate_stage(cfg)
            print(json.dumps({"synthetic_datasets": len(manifest["entries"])}, indent=2))
        elif args.command == "evaluate":
            audit = evaluate_stage(cfg)
            paths = report_mod.emit_report(audit, cfg.out)
            print(json.dumps({"records": paths["records"], "failures": len(audit.failures)}, indent=2))
        elif args.command == "run":
            audit = run_experiment(cfg)
            paths = report_mod.emit_report(audit, cfg.out)
            print(json.dumps(
                {"records": paths["records"], "n_records": len(audit.records),
                 "failures": len(audit.failures)}, indent=2))
        return 0
    except Exception as exc:
        json.dump(
            {"error": type(exc).__name__, "detail": str(exc), "command": args.command},
            sys.stderr,
        )
        sys.stderr.write(os.linesep)
        return 2


def _cmd_report(args) -> int:
    records = report_mod.read_records_csv(args.records)
    from .harness import AuditReport

    audit = AuditReport(config={}, records=records, failures=[])
    os.makedirs(args.out, exist_ok=True)
    aggregates = audit.aggregates()
    report_mod.write_aggregates_csv(aggregates, os.path.join(args.out, "aggregates.csv"))
    charts = report_mod.write_charts(aggregates, os.path.join(args.out, "charts")) if records else []
    print(json.dumps({"aggregates": len(aggregates), "charts": len(charts)}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
