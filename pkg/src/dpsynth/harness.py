"""End-to-end audit runner.

One experiment sweeps a generative model over privacy budgets (and optionally
subgroup imbalance ratios), fitting ``l`` generators per cell and drawing
``k`` synthetic datasets per fit. Every synthetic dataset is measured for
class/subgroup shares and scored through a classifier trained on it; the same
test set also scores ``l*k`` DP classifiers and one non-private baseline, all
trained on the real rows.

Determinism: every run's generator is seeded by a stable hash of
(master seed, model, epsilon index, imbalance index, fit index, sample
index), so results do not depend on worker scheduling. Records are assembled
in a fixed order and float formatting is shortest-roundtrip, which makes the
records CSV byte-stable across repeats and worker counts.

Besides the in-memory :func:`run_experiment`, the pipeline stages
(:func:`prepare_stage`, :func:`generate_stage`, :func:`evaluate_stage`) read
and write files under the configured output directory so long sweeps can be
resumed or inspected midway.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mechanisms
from .classifier import evaluate, train_dp_lr, train_lr
from .data import (
    TabularDataset,
    balance_class_within_subgroup,
    class_distribution,
    discretize,
    extract_subgroups,
    imbalance_subgroup,
    load_csv,
    save_csv,
    subgroup_rows,
)
from .datasets import make_desk_pair
from .privbayes import PrivBayesSynthesizer
from .pategan import PateGanSynthesizer
from .schema import Schema, SubgroupKey
from .wgan import DpWganSynthesizer

MODELS = {
    "privbayes": PrivBayesSynthesizer,
    "dpwgan": DpWganSynthesizer,
    "pategan": PateGanSynthesizer,
}
SETTINGS = ("class", "single-subgroup", "multi-subgroup")
WORKERS_ENV = "DPSYNTH_WORKERS"


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed from the master seed and a tag tuple."""
    text = f"{master}|" + "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class ExperimentConfig:
    """Declarative description of one audit sweep (JSON-loadable)."""

    model: str = "privbayes"
    epsilons: tuple[float, ...] = (1.0, math.inf)
    delta: float = 1e-5
    imbalances: tuple[float, ...] | None = None
    setting: str = "class"
    subgroup_columns: tuple[str, ...] | None = None
    l: int = 10
    k: int = 10
    seed: int = 0
    out: str = "audit-out"
    data: str | None = None
    schema: str | None = None
    test_data: str | None = None
    test_fraction: float = 1.0 / 3.0
    min_subgroup_size: int = 25
    classifier_reg: float = 1e-3
    model_params: dict = field(default_factory=dict)
    workers: int | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; pick one of {sorted(MODELS)}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; pick one of {SETTINGS}")
        self.epsilons = tuple(float(e) for e in self.epsilons)
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive (or inf)")
        if self.imbalances is not None:
            self.imbalances = tuple(float(r) for r in self.imbalances)
            if any(not (0.0 < r <= 0.5) for r in self.imbalances):
                raise ValueError("imbalance ratios must lie in (0, 0.5]")
        if self.setting != "class" and not self.imbalances:
            raise ValueError("subgroup settings need at least one imbalance ratio")
        if self.l < 1 or self.k < 1:
            raise ValueError("l and k must be >= 1")
        if not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "epsilons" in d:
            d["epsilons"] = tuple(
                math.inf if str(e) in ("inf", "infinity") else float(e) for e in d["epsilons"]
            )
        if d.get("imbalances") is not None:
            d["imbalances"] = tuple(float(r) for r in d["imbalances"])
        if d.get("subgroup_columns") is not None:
            d["subgroup_columns"] = tuple(d["subgroup_columns"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "epsilons": ["inf" if math.isinf(e) else e for e in self.epsilons],
            "delta": self.delta,
            "imbalances": list(self.imbalances) if self.imbalances else None,
            "setting": self.setting,
            "subgroup_columns": list(self.subgroup_columns) if self.subgroup_columns else None,
            "l": self.l,
            "k": self.k,
            "seed": self.seed,
            "out": self.out,
            "data": self.data,
            "schema": self.schema,
            "test_data": self.test_data,
            "test_fraction": self.test_fraction,
            "min_subgroup_size": self.min_subgroup_size,
            "classifier_reg": self.classifier_reg,
            "model_params": self.model_params,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class Record:
    run_id: str
    model: str
    epsilon: float
    imbalance: float | None
    setting: str
    group: str
    metric: str
    value: float


@dataclass
class AuditReport:
    config: dict
    records: list[Record]
    failures: list[dict]

    def aggregates(self) -> list[dict]:
        """Mean/std/count per cell, ignoring NaN values (count counts them out)."""
        order: list[tuple] = []
        cells: dict[tuple, list[float]] = {}
        for r in self.records:
            key = (r.model, r.epsilon, r.imbalance, r.setting, r.group, r.metric)
            if key not in cells:
                cells[key] = []
                order.append(key)
            cells[key].append(r.value)
        out = []
        for key in order:
            vals = np.asarray(cells[key], dtype=np.float64)
            good = vals[~np.isnan(vals)]
            out.append(
                {
                    "model": key[0],
                    "epsilon": key[1],
                    "imbalance": key[2],
                    "setting": key[3],
                    "group": key[4],
                    "metric": key[5],
                    "mean": float(good.mean()) if len(good) else float("nan"),
                    "std": float(good.std()) if len(good) else float("nan"),
                    "count": int(len(good)),
                }
            )
        return out


# -- preparation ----------------------------------------------------------------


def split_rows(n: int, test_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise ValueError("test_fraction leaves no training rows")
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def load_input_data(config: ExperimentConfig) -> tuple[TabularDataset, TabularDataset]:
    """Resolve the configured train/test pair (built-in benchmark by default)."""
    if config.data is None:
        return make_desk_pair(seed=derive_seed(config.seed, "demo-data"))
    schema = Schema.load(config.schema)
    full = discretize(load_csv(config.data, schema))
    if config.test_data is not None:
        train = full.with_provenance("train")
        test = discretize(load_csv(config.test_data, schema)).with_provenance("test")
        return train, test
    rng = np.random.default_rng(derive_seed(config.seed, "split"))
    train_rows, test_rows = split_rows(full.n, config.test_fraction, rng)
    return full.take(train_rows, "train"), full.take(test_rows, "test")


def prepare_pair(
    config: ExperimentConfig,
    train: TabularDataset,
    test: TabularDataset,
    imbalance: float | None,
    imb_index: int,
) -> tuple[TabularDataset, TabularDataset]:
    """Balance-then-imbalance both splits identically (subgroup settings)."""
    if config.setting == "class" or imbalance is None:
        return train, test
    column = balance_column(config, train.schema)
    out = []
    for role, ds in (("train", train), ("test", test)):
        rng = np.random.default_rng(derive_seed(config.seed, "prepare", imb_index, role))
        ds = balance_class_within_subgroup(ds, column, rng)
        ds = imbalance_subgroup(ds, column, imbalance, rng)
        out.append(ds)
    return out[0], out[1]


def balance_column(config: ExperimentConfig, schema: Schema) -> str:
    cols = config.subgroup_columns or schema.subgroup_columns
    if not cols:
        raise ValueError("no subgroup columns configured")
    return cols[0]


def audit_subgroups(config: ExperimentConfig, train: TabularDataset) -> list[SubgroupKey]:
    """Groups to audit, fixed by the prepared training split."""
    if config.setting == "class":
        return []
    cols = config.subgroup_columns or train.schema.subgroup_columns
    if config.setting == "single-subgroup":
        cols = cols[:1]
        min_size = 1
    else:
        min_size = config.min_subgroup_size
    return [key for key, _rows in extract_subgroups(train, cols, min_size)]


# -- per-run measurement ----------------------------------------------------------


def make_synthesizer(config: ExperimentConfig, epsilon: float, seed: int):
    params = dict(config.model_params)
    params["epsilon"] = epsilon
    if config.model in ("dpwgan", "pategan"):
        params.setdefault("delta", config.delta)
    params["random_state"] = seed
    return MODELS[config.model](**params)


def measure_sizes(
    synthetic: TabularDataset,
    subgroups: list[SubgroupKey],
    real_class_dist: dict[str, float],
) -> list[tuple[str, str, float]]:
    """(group, metric, value) share measurements for one synthetic dataset."""
    out = []
    dist = class_distribution(synthetic)
    for label in synthetic.schema.column(synthetic.schema.class_column).categories:
        share = dist.get(label, 0.0)
        out.append((f"class:{label}", "size", share))
        out.append((f"class:{label}", "size_shift", share - real_class_dist[label]))
    for key in subgroups:
        share = len(subgroup_rows(synthetic, key)) / synthetic.n
        out.append((f"subgroup:{key}", "size", share))
    return out


def _metric_records(report, kind: str) -> list[tuple[str, str, float]]:
    rows = []
    for label in report.class_labels:
        rows.append((f"class:{label}", f"precision_{kind}", report.precision[label]))
        rows.append((f"class:{label}", f"recall_{kind}", report.recall[label]))
    for key, acc in report.subgroup_accuracy.items():
        rows.append((f"subgroup:{key}", f"accuracy_{kind}", acc))
    rows.append(("all", f"accuracy_{kind}", report.overall_accuracy))
    return rows


def sample_records(
    synth: TabularDataset,
    degenerate: bool,
    test: TabularDataset,
    subgroups: list[SubgroupKey],
    real_dist: dict[str, float],
    reg: float,
) -> list[tuple[str, str, float]]:
    """All (group, metric, value) rows for one synthetic dataset."""
    rows = [("all", "degenerate", float(degenerate))]
    rows.extend(measure_sizes(synth, subgroups, real_dist))
    synth_clf = train_lr(synth, reg=reg)
    rows.extend(_metric_records(evaluate(synth_clf, test, subgroups), "synth"))
    return rows


# -- parallel tasks ----------------------------------------------------------------


def _generator_task(payload: dict) -> list[dict]:
    """Fit one generator, draw k synthetic datasets, measure and score them."""
    config: ExperimentConfig = payload["config"]
    train: TabularDataset = payload["train"]
    eps, e_idx, i_idx, fit_idx = (
        payload["epsilon"], payload["e_idx"], payload["i_idx"], payload["fit_idx"],
    )
    fit_seed = derive_seed(config.seed, "fit", config.model, e_idx, i_idx, fit_idx)
    model = make_synthesizer(config, eps, fit_seed)
    before = mechanisms.mechanism_calls()
    model.fit(train)
    if math.isinf(eps) and mechanisms.mechanism_calls() != before:
        raise RuntimeError("noise mechanism invoked on an infinite-budget fit")
    real_dist = class_distribution(train)
    degenerate = bool(getattr(model, "degenerate_", False))
    out = []
    for s_idx in range(config.k):
        run_id = f"f{fit_idx:02d}s{s_idx:02d}"
        sample_rng = np.random.default_rng(
            derive_seed(config.seed, "sample", config.model, e_idx, i_idx, fit_idx, s_idx)
        )
        synth = model.sample(train.n, rng=sample_rng)
        for group, metric, value in sample_records(
            synth, degenerate, payload["test"], payload["subgroups"], real_dist,
            config.classifier_reg,
        ):
            out.append(
                {"run_id": run_id, "epsilon": eps, "imbalance": payload["imbalance"],
                 "group": group, "metric": metric, "value": value}
            )
    return out


def _dp_classifier_task(payload: dict) -> list[dict]:
    config: ExperimentConfig = payload["config"]
    eps, e_idx, i_idx, run_idx = (
        payload["epsilon"], payload["e_idx"], payload["i_idx"], payload["run_idx"],
    )
    rng = np.random.default_rng(derive_seed(config.seed, "dp", config.model, e_idx, i_idx, run_idx))
    model = train_dp_lr(payload["train"], eps, reg=config.classifier_reg, rng=rng)
    report = evaluate(model, payload["test"], payload["subgroups"])
    return [
        {"run_id": f"d{run_idx:03d}", "epsilon": eps, "imbalance": payload["imbalance"],
         "group": group, "metric": metric, "value": value}
        for group, metric, value in _metric_records(report, "dp")
    ]


def _run_task(task: tuple[str, dict]):
    kind, payload = task
    if kind == "gen":
        return _generator_task(payload)
    return _dp_classifier_task(payload)


def _safe_run(task):
    try:
        return _run_task(task)
    except Exception as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


def resolve_workers(config: ExperimentConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


# -- the sweep ----------------------------------------------------------------


def run_experiment(config: ExperimentConfig) -> AuditReport:
    """Execute the full protocol and return the assembled report.

    Individual run failures are logged and excluded from the records without
    aborting the sweep.
    """
    base_train, base_test = load_input_data(config)
    imbalances: list[float | None] = list(config.imbalances or [None])

    prepared = {}
    baselines = {}
    for i_idx, imb in enumerate(imbalances):
        train, test = prepare_pair(config, base_train, base_test, imb, i_idx)
        subgroups = audit_subgroups(config, train)
        prepared[i_idx] = (train, test, subgroups)
        baseline = train_lr(train, reg=config.classifier_reg)
        baselines[i_idx] = _metric_records(evaluate(baseline, test, subgroups), "real")

    tasks: list[tuple[tuple, tuple[str, dict]]] = []
    for e_idx, eps in enumerate(config.epsilons):
        for i_idx, imb in enumerate(imbalances):
            train, test, subgroups = prepared[i_idx]
            common = {
                "config": config, "train": train, "test": test,
                "subgroups": subgroups, "epsilon": eps, "imbalance": imb,
                "e_idx": e_idx, "i_idx": i_idx,
            }
            for fit_idx in range(config.l):
                tasks.append(((e_idx, i_idx, 0, fit_idx), ("gen", {**common, "fit_idx": fit_idx})))
            for run_idx in range(config.l * config.k):
                tasks.append(((e_idx, i_idx, 1, run_idx), ("dp", {**common, "run_idx": run_idx})))

    workers = resolve_workers(config)
    results: dict[tuple, object] = {}
    if workers <= 1:
        for key, task in tasks:
            results[key] = _safe_run(task)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(_run_task, task) for key, task in tasks}
            for key, fut in futures.items():
                try:
                    results[key] = fut.result()
                except Exception as exc:  # worker crashed: record, keep sweeping
                    results[key] = {"error": f"{type(exc).__name__}: {exc}"}

    records: list[Record] = []
    failures: list[dict] = []
    for e_idx, eps in enumerate(config.epsilons):
        for i_idx, imb in enumerate(imbalances):
            for key in sorted(k for k in results if k[0] == e_idx and k[1] == i_idx):
                res = results[key]
                if isinstance(res, dict):  # failure marker
                    failures.append(
                        {"epsilon": "inf" if math.isinf(eps) else eps, "imbalance": imb,
                         "kind": "gen" if key[2] == 0 else "dp",
                         "index": key[3], "error": res["error"]}
                    )
                    continue
                for row in res:
                    records.append(
                        Record(row["run_id"], config.model, row["epsilon"], row["imbalance"],
                               config.setting, row["group"], row["metric"], row["value"])
                    )
            # flat baseline, repeated per epsilon cell for plotting convenience
            for group, metric, value in baselines[i_idx]:
                records.append(
                    Record("real", config.model, eps, imb, config.setting, group, metric, value)
                )
    return AuditReport(config=config.to_dict(), records=records, failures=failures)


# -- staged pipeline ----------------------------------------------------------------


def _imb_tag(imb: float | None) -> str:
    return "none" if imb is None else f"{imb:g}"


def _eps_tag(eps: float) -> str:
    return "inf" if math.isinf(eps) else f"{eps:g}"


def prepare_stage(config: ExperimentConfig) -> dict:
    """Write prepared train/test splits per imbalance under out/prepared."""
    base_train, base_test = load_input_data(config)
    root = os.path.join(config.out, "prepared")
    os.makedirs(root, exist_ok=True)
    manifest = {"imbalances": [], "setting": config.setting}
    for i_idx, imb in enumerate(list(config.imbalances or [None])):
        train, test = prepare_pair(config, base_train, base_test, imb, i_idx)
        tag = _imb_tag(imb)
        folder = os.path.join(root, f"imb_{tag}")
        os.makedirs(folder, exist_ok=True)
        save_csv(train, os.path.join(folder, "train.csv"))
        save_csv(test, os.path.join(folder, "test.csv"))
        train.schema.save(os.path.join(folder, "schema.json"))
        manifest["imbalances"].append(
            {"tag": tag, "imbalance": imb, "n_train": train.n, "n_test": test.n,
             "class_distribution": class_distribution(train),
             "subgroups": [str(k) for k in audit_subgroups(config, train)]}
        )
    path = os.path.join(root, "prepared.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def _load_prepared(config: ExperimentConfig, imb: float | None):
    folder = os.path.join(config.out, "prepared", f"imb_{_imb_tag(imb)}")
    if not os.path.isdir(folder):
        raise FileNotFoundError(f"{folder} missing; run the prepare stage first")
    schema = Schema.load(os.path.join(folder, "schema.json"))
    train = discretize(load_csv(os.path.join(folder, "train.csv"), schema, "train"))
    test = discretize(load_csv(os.path.join(folder, "test.csv"), schema, "test"))
    return train, test


def generate_stage(config: ExperimentConfig) -> dict:
    """Fit generators and write synthetic CSVs, models, and training logs."""
    root = os.path.join(config.out, "synthetic")
    os.makedirs(root, exist_ok=True)
    entries = []
    for e_idx, eps in enumerate(config.epsilons):
        for i_idx, imb in enumerate(list(config.imbalances or [None])):
            train, _test = _load_prepared(config, imb)
            folder = os.path.join(root, f"eps_{_eps_tag(eps)}", f"imb_{_imb_tag(imb)}")
            os.makedirs(folder, exist_ok=True)
            for fit_idx in range(config.l):
                seed = derive_seed(config.seed, "fit", config.model, e_idx, i_idx, fit_idx)
                model = make_synthesizer(config, eps, seed)
                model.fit(train)
                model.save(os.path.join(folder, f"model_f{fit_idx:02d}.json"))
                log = getattr(model, "training_log_", None)
                if log:
                    _write_training_log(os.path.join(folder, f"log_f{fit_idx:02d}.csv"), log)
                for s_idx in range(config.k):
                    rng = np.random.default_rng(
                        derive_seed(config.seed, "sample", config.model, e_idx, i_idx, fit_idx, s_idx)
                    )
                    synth = model.sample(train.n, rng=rng)
                    rel = os.path.join(
                        f"eps_{_eps_tag(eps)}", f"imb_{_imb_tag(imb)}", f"f{fit_idx:02d}s{s_idx:02d}.csv"
                    )
                    save_csv(synth, os.path.join(root, rel))
                    entries.append(
                        {"epsilon": "inf" if math.isinf(eps) else eps, "e_idx": e_idx,
                         "imbalance": imb, "i_idx": i_idx, "fit": fit_idx, "sample": s_idx,
                         "path": rel, "degenerate": bool(getattr(model, "degenerate_", False)),
                         "epsilon_spent": float(getattr(model, "epsilon_spent_", 0.0))}
                    )
    manifest = {"model": config.model, "entries": entries}
    with open(os.path.join(root, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def _write_training_log(path, rows) -> None:
    import csv as _csv

    with open(path, "w", encoding="utf-8", newline="") as f:
        w = _csv.writer(f)
        w.writerow(("iteration", "critic_loss", "epsilon_spent"))
        w.writerows(rows)


def evaluate_stage(config: ExperimentConfig) -> AuditReport:
    """Score previously generated synthetic data plus DP/real classifiers."""
    root = os.path.join(config.out, "synthetic")
    with open(os.path.join(root, "manifest.json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    records: list[Record] = []
    failures: list[dict] = []
    for e_idx, eps in enumerate(config.epsilons):
        for i_idx, imb in enumerate(list(config.imbalances or [None])):
            train, test = _load_prepared(config, imb)
            subgroups = audit_subgroups(config, train)
            real_dist = class_distribution(train)
            entries = [
                e for e in manifest["entries"] if e["e_idx"] == e_idx and e["i_idx"] == i_idx
            ]
            for entry in sorted(entries, key=lambda e: (e["fit"], e["sample"])):
                run_id = f"f{entry['fit']:02d}s{entry['sample']:02d}"
                try:
                    synth = discretize(
                        load_csv(os.path.join(root, entry["path"]), train.schema, "synthetic")
                    )
                    for group, metric, value in sample_records(
                        synth, entry["degenerate"], test, subgroups, real_dist,
                        config.classifier_reg,
                    ):
                        records.append(
                            Record(run_id, config.model, eps, imb, config.setting,
                                   group, metric, value)
                        )
                except Exception as exc:
                    failures.append(
                        {"epsilon": "inf" if math.isinf(eps) else eps, "imbalance": imb,
                         "kind": "synth", "index": run_id, "error": f"{type(exc).__name__}: {exc}"}
                    )
            for run_idx in range(config.l * config.k):
                try:
                    rng = np.random.default_rng(
                        derive_seed(config.seed, "dp", config.model, e_idx, i_idx, run_idx)
                    )
                    model = train_dp_lr(train, eps, reg=config.classifier_reg, rng=rng)
                    report = evaluate(model, test, subgroups)
                    for group, metric, value in _metric_records(report, "dp"):
                        records.append(
                            Record(f"d{run_idx:03d}", config.model, eps, imb, config.setting,
                                   group, metric, value)
                        )
                except Exception as exc:
                    failures.append(
                        {"epsilon": "inf" if math.isinf(eps) else eps, "imbalance": imb,
                         "kind": "dp", "index": run_idx, "error": f"{type(exc).__name__}: {exc}"}
                    )
            baseline = train_lr(train, reg=config.classifier_reg)
            for group, metric, value in _metric_records(evaluate(baseline, test, subgroups), "real"):
                records.append(
                    Record("real", config.model, eps, imb, config.setting, group, metric, value)
                )
    return AuditReport(config=config.to_dict(), records=records, failures=failures)
