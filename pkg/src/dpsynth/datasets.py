"""Self-contained benchmark data: a census-flavored categorical table with a
minority class and informative features.

Real deployments load their own CSVs; this module exists so the audit
pipeline, the test suite, and the README demo can run without shipping data.
"""

from __future__ import annotations

import numpy as np

from .data import TabularDataset, save_csv
from .schema import Column, Schema

# Cardinalities are deliberately mixed (binary up to 20 categories): real
# audits binarize numeric columns into dozens of bins, and the sparse count
# tables that creates are where budget noise visibly reshapes shares.
_FEATURES = (
    ("sex", ("F", "M")),
    ("age_band", tuple(f"a{i}" for i in range(8))),
    ("education", ("primary", "secondary", "college", "graduate")),
    ("occupation", tuple(f"occ{i}" for i in range(30))),
    ("hours_band", tuple(f"h{i}" for i in range(24))),
)

# Training profile calibrated for this 5k-row benchmark. The estimator
# defaults (batch 64, 2x64 nets, clip 1.0) are sized for datasets in the
# tens of thousands of rows; at n=5000 the sampling rate q = batch/n makes a
# single noisy batch of 64 cost epsilon(1e-5) > 1, and a clip norm of 1.0 is
# ~25x the actual per-example gradient norm, so the Gaussian noise would
# drown the signal. Smaller batches and a matched clip keep every budget in
# {1, 10, 100} trainable for the full iteration cap.
DESK_WGAN_PARAMS = {
    "batch_size": 8,
    "hidden": 16,
    "clip_norm": 0.02,
    "lr_critic": 0.001,
    "lr_generator": 0.02,
}
DESK_PATEGAN_PARAMS: dict = {}


def desk_schema() -> Schema:
    cols = [Column(name, "categorical", categories=cats) for name, cats in _FEATURES]
    cols.append(Column("income", "categorical", categories=("low", "high")))
    return Schema(
        columns=tuple(cols),
        class_column="income",
        subgroup_columns=("sex", "age_band"),
        bin_count=50,
    )


def _class_conditional(card: int, tilt: float, flip: bool) -> np.ndarray:
    w = tilt ** np.arange(card, dtype=np.float64)
    if flip:
        w = w[::-1]
    return w / w.sum()


def make_desk_dataset(
    n: int = 5000,
    minority: float = 0.2,
    seed: int = 0,
    provenance: str = "train",
) -> TabularDataset:
    """Draw n rows with P(income=high) = minority and class-tilted features."""
    if not (0.0 < minority < 1.0):
        raise ValueError("minority must lie in (0, 1)")
    schema = desk_schema()
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < minority).astype(np.int64)
    values = np.empty((n, len(schema.columns)), dtype=np.int64)
    tilts = {"sex": 0.75, "age_band": 0.72, "education": 0.55, "occupation": 0.78, "hours_band": 0.7}
    for j, (name, cats) in enumerate(_FEATURES):
        card = len(cats)
        p0 = _class_conditional(card, tilts[name], flip=False)
        p1 = _class_conditional(card, tilts[name], flip=True)
        draws0 = rng.choice(card, size=n, p=p0)
        draws1 = rng.choice(card, size=n, p=p1)
        values[:, j] = np.where(y == 1, draws1, draws0)
    values[:, schema.index("income")] = y
    return TabularDataset(schema, values, discretized=True, provenance=provenance)


def make_desk_pair(
    n_train: int = 5000, n_test: int = 2500, seed: int = 0
) -> tuple[TabularDataset, TabularDataset]:
    train = make_desk_dataset(n_train, seed=seed, provenance="train")
    test = make_desk_dataset(n_test, seed=seed + 1_000_003, provenance="test")
    return train, test


def write_demo_files(out_dir, n_train: int = 5000, n_test: int = 2500, seed: int = 0) -> dict:
    """Write train/test CSVs plus the schema JSON; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    train, test = make_desk_pair(n_train, n_test, seed)
    paths = {
        "data": os.path.join(out_dir, "train.csv"),
        "test_data": os.path.join(out_dir, "test.csv"),
        "schema": os.path.join(out_dir, "schema.json"),
    }
    save_csv(train, paths["data"])
    save_csv(test, paths["test_data"])
    train.schema.save(paths["schema"])
    return paths
