"""Report emission: records CSV, aggregates CSV, config echo, SVG charts.

The records CSV is the canonical artifact: fixed column order
``run_id,model,epsilon,imbalance,setting,group,metric,value`` with
shortest-roundtrip float formatting, so identical experiments produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .harness import AuditReport, Record

RECORD_COLUMNS = ("run_id", "model", "epsilon", "imbalance", "setting", "group", "metric", "value")
AGGREGATE_COLUMNS = ("model", "epsilon", "imbalance", "setting", "group", "metric", "mean", "std", "count")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def _parse(value: str):
    if value == "":
        return None
    if value == "inf":
        return math.inf
    return float(value)


def write_records_csv(records: list[Record], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow(
                (r.run_id, r.model, _fmt(r.epsilon), _fmt(r.imbalance),
                 r.setting, r.group, r.metric, _fmt(r.value))
            )


def read_records_csv(path) -> list[Record]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != RECORD_COLUMNS:
            raise ValueError(f"unexpected records header: {header}")
        for row in reader:
            records.append(
                Record(row[0], row[1], _parse(row[2]), _parse(row[3]),
                       row[4], row[5], row[6], _parse(row[7]))
            )
    return records


def write_aggregates_csv(aggregates: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(AGGREGATE_COLUMNS)
        for row in aggregates:
            writer.writerow(
                (row["model"], _fmt(row["epsilon"]), _fmt(row["imbalance"]), row["setting"],
                 row["group"], row["metric"], _fmt(row["mean"]), _fmt(row["std"]), row["count"])
            )


def emit_report(report: AuditReport, out_dir) -> dict:
    """Write all artifacts under ``out_dir``; returns the emitted paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.csv"),
        "aggregates": os.path.join(out_dir, "aggregates.csv"),
        "config": os.path.join(out_dir, "config.json"),
    }
    write_records_csv(report.records, paths["records"])
    aggregates = report.aggregates()
    write_aggregates_csv(aggregates, paths["aggregates"])
    echo = {
        "config": report.config,
        "failures": report.failures,
        "n_records": len(report.records),
        "n_failures": len(report.failures),
    }
    with open(paths["config"], "w", encoding="utf-8") as f:
        json.dump(echo, f, indent=2, sort_keys=True)
    if report.records:
        paths["charts"] = write_charts(aggregates, os.path.join(out_dir, "charts"))
    return paths


# -- charts -------------------------------------------------------------------


def _eps_axis(epsilons):
    labels = ["inf" if math.isinf(e) else f"{e:g}" for e in epsilons]
    return list(range(len(epsilons))), labels


def write_charts(aggregates: list[dict], charts_dir) -> list[str]:
    """Static SVG charts: shares vs epsilon, and each metric family vs epsilon."""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dpsynth"
    import matplotlib.pyplot as plt

    os.makedirs(charts_dir, exist_ok=True)
    written = []
    imbalances = sorted({row["imbalance"] for row in aggregates}, key=lambda v: (v is None, v))
    metrics = sorted({row["metric"] for row in aggregates if row["metric"] != "degenerate"})
    for imb in imbalances:
        rows_imb = [r for r in aggregates if r["imbalance"] == imb]
        epsilons = sorted({r["epsilon"] for r in rows_imb})
        xs, labels = _eps_axis(epsilons)
        tag = "all" if imb is None else f"imb{imb:g}"
        for metric in metrics:
            rows = [r for r in rows_imb if r["metric"] == metric]
            if not rows:
                continue
            groups = sorted({r["group"] for r in rows})
            fig, ax = plt.subplots(figsize=(6, 4))
            for group in groups:
                mean = np.array([_cell(rows, e, group, "mean") for e in epsilons])
                std = np.array([_cell(rows, e, group, "std") for e in epsilons])
                ax.plot(xs, mean, marker="o", label=group)
                ax.fill_between(xs, mean - std, mean + std, alpha=0.2)
            ax.set_xticks(xs, labels)
            ax.set_xlabel("epsilon")
            ax.set_ylabel(metric)
            ax.set_title(f"{metric} ({tag})")
            ax.legend(fontsize=7)
            fig.tight_layout()
            path = os.path.join(charts_dir, f"{metric}_{tag}.svg")
            fig.savefig(path, metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written


def _cell(rows, epsilon, group, which):
    for r in rows:
        if r["epsilon"] == epsilon and r["group"] == group:
            return r[which]
    return float("nan")
