"""Encoded tabular datasets: CSV ingestion, discretization, balancing,
controlled imbalancing, and subgroup extraction.

All sampling operations take an explicit ``numpy.random.Generator`` so the
same seed always selects the same rows. Datasets are immutable after
construction; every operation returns a new dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .schema import CATEGORICAL, NUMERICAL, Schema, SubgroupKey


@dataclass(frozen=True)
class TabularDataset:
    """A fixed-schema record matrix.

    When ``discretized`` is True, ``values`` holds int64 category/bin indices
    for every column. Fresh loads of schemas with numerical columns hold raw
    floats for those columns until :func:`discretize` is applied.

    ``provenance`` tags where the rows came from ("train", "test",
    "synthetic", ...); training paths refuse datasets tagged "test".
    """

    schema: Schema
    values: np.ndarray
    discretized: bool = True
    provenance: str = "unspecified"

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("dataset needs a 2-D values array with n >= 1 rows")
        if v.shape[1] != len(self.schema.columns):
            raise ValueError("column count does not match schema")
        if self.discretized:
            v = v.astype(np.int64, copy=False)
            cards = np.asarray(self.schema.cardinalities())
            if (v < 0).any() or (v >= cards[None, :]).any():
                raise ValueError("encoded value outside its column domain")
        else:
            v = v.astype(np.float64, copy=False)
            if not np.isfinite(v).all():
                raise ValueError("non-finite cell value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def take(self, rows: np.ndarray, provenance: str | None = None) -> "TabularDataset":
        return replace(
            self,
            values=self.values[np.asarray(rows)],
            provenance=self.provenance if provenance is None else provenance,
        )

    def with_provenance(self, provenance: str) -> "TabularDataset":
        return replace(self, provenance=provenance)


def _fail_cell(row: int, name: str, why: str):
    raise ValueError(f"row {row}, column {name!r}: {why}")


def load_csv(path, schema: Schema, provenance: str = "unspecified") -> TabularDataset:
    """Parse a UTF-8 comma-separated file against a schema.

    Cells are trimmed and matched case-sensitively; unknown categories,
    unparseable numerics, and missing values are rejected with the offending
    row and column named. Numerical columns stay as raw floats until
    :func:`discretize` is applied.
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        for name in schema.names:
            if name not in header:
                raise ValueError(f"{path}: missing column {name!r} in header")
        pos = [header.index(name) for name in schema.names]
        cat_maps = [
            {c: i for i, c in enumerate(col.categories)} if col.kind == CATEGORICAL else None
            for col in schema.columns
        ]
        rows = []
        for r, rec in enumerate(reader):
            out = np.empty(len(schema.columns), dtype=np.float64)
            for j, col in enumerate(schema.columns):
                if pos[j] >= len(rec):
                    _fail_cell(r, col.name, "missing cell")
                cell = rec[pos[j]].strip()
                if cell == "":
                    _fail_cell(r, col.name, "missing value")
                if col.kind == CATEGORICAL:
                    idx = cat_maps[j].get(cell)
                    if idx is None:
                        _fail_cell(r, col.name, f"category {cell!r} not in schema domain")
                    out[j] = idx
                else:
                    try:
                        out[j] = float(cell)
                    except ValueError:
                        _fail_cell(r, col.name, f"unparseable numeric {cell!r}")
            rows.append(out)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    values = np.stack(rows)
    if schema.has_numerical():
        return TabularDataset(schema, values, discretized=False, provenance=provenance)
    return TabularDataset(schema, values.astype(np.int64), discretized=True, provenance=provenance)


def discretize(dataset: TabularDataset, bins: int | None = None) -> TabularDataset:
    """Map raw numeric values to equal-width bin indices over public bounds.

    Values are clamped to the declared bounds; the max bound lands in the
    last bin. Categorical columns pass through unchanged.
    """
    bins = dataset.schema.bin_count if bins is None else int(bins)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if dataset.discretized:
        return dataset
    schema = dataset.schema
    if bins != schema.bin_count:
        schema = replace(schema, bin_count=bins)
    out = np.empty_like(dataset.values, dtype=np.int64)
    for j, col in enumerate(schema.columns):
        v = dataset.values[:, j]
        if col.kind == CATEGORICAL:
            out[:, j] = v.astype(np.int64)
        else:
            lo, hi = col.bounds
            x = np.clip(v, lo, hi)
            idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
            out[:, j] = np.clip(idx, 0, bins - 1)
    return TabularDataset(schema, out, discretized=True, provenance=dataset.provenance)


def decode_values(dataset: TabularDataset) -> list[list[str]]:
    """Decode an encoded dataset back to display values.

    Categories decode exactly; bins decode to their center, so numeric values
    round-trip to within one bin width.
    """
    if not dataset.discretized:
        raise ValueError("dataset is not discretized")
    schema = dataset.schema
    cols = []
    for j, col in enumerate(schema.columns):
        v = dataset.values[:, j]
        if col.kind == CATEGORICAL:
            cats = np.asarray(col.categories, dtype=object)
            cols.append(cats[v])
        else:
            lo, hi = col.bounds
            width = (hi - lo) / schema.bin_count
            centers = lo + (v + 0.5) * width
            cols.append(np.asarray([repr(float(x)) for x in centers], dtype=object))
    return [[cols[j][i] for j in range(len(schema.columns))] for i in range(dataset.n)]


def save_csv(dataset: TabularDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(dataset.schema.names)
        writer.writerows(decode_values(dataset))


# -- class / subgroup bookkeeping --------------------------------------------


def class_distribution(dataset: TabularDataset) -> dict[str, float]:
    """Per-class proportions keyed by category label; sums to 1."""
    schema = dataset.schema
    col = schema.column(schema.class_column)
    v = dataset.column(schema.class_column)
    counts = np.bincount(v, minlength=len(col.categories))
    return {c: float(counts[i] / dataset.n) for i, c in enumerate(col.categories)}


def extract_subgroups(
    dataset: TabularDataset, attributes, min_size: int = 25
) -> list[tuple[SubgroupKey, np.ndarray]]:
    """Partition rows by the cross-tabulation of the given attributes.

    Groups smaller than ``min_size`` are discarded. Returned groups are
    pairwise disjoint and ordered by their encoded attribute values.
    """
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    attributes = list(attributes)
    if not attributes:
        raise ValueError("need at least one attribute")
    schema = dataset.schema
    cols = [dataset.column(a) for a in attributes]
    cards = [schema.column(a).cardinality(schema.bin_count) for a in attributes]
    keys = np.ravel_multi_index(tuple(cols), dims=tuple(cards))
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    uniq, starts = np.unique(sorted_keys, return_index=True)
    out = []
    bounds = list(starts) + [len(keys)]
    for u, a, b in zip(uniq, bounds[:-1], bounds[1:]):
        rows = np.sort(order[a:b])
        if len(rows) < min_size:
            continue
        combo = np.unravel_index(int(u), tuple(cards))
        items = tuple(
            (attr, schema.labels(attr)[int(c)]) for attr, c in zip(attributes, combo)
        )
        out.append((SubgroupKey(items), rows))
    return out


def subgroup_rows(dataset: TabularDataset, key: SubgroupKey) -> np.ndarray:
    """Indices of rows matching every attribute=value pair of the key."""
    schema = dataset.schema
    mask = np.ones(dataset.n, dtype=bool)
    for attr, value in key.items:
        labels = schema.labels(attr)
        if value not in labels:
            raise ValueError(f"value {value!r} not in domain of {attr!r}")
        mask &= dataset.column(attr) == labels.index(value)
    return np.flatnonzero(mask)


def _binary_class_values(dataset: TabularDataset) -> np.ndarray:
    schema = dataset.schema
    col = schema.column(schema.class_column)
    if col.kind != CATEGORICAL or len(col.categories) != 2:
        raise ValueError("operation requires a binary class column")
    return dataset.column(schema.class_column)


def balance_class_within_subgroup(
    dataset: TabularDataset, subgroup_column: str, rng: np.random.Generator
) -> TabularDataset:
    """Down-sample so both classes have equal counts inside every subgroup value.

    Selection is without replacement under the supplied generator; row order
    of the survivors is preserved.
    """
    y = _binary_class_values(dataset)
    g = dataset.column(subgroup_column)
    keep = []
    for gv in np.unique(g):
        idx0 = np.flatnonzero((g == gv) & (y == 0))
        idx1 = np.flatnonzero((g == gv) & (y == 1))
        m = min(len(idx0), len(idx1))
        if m == 0:
            raise ValueError(
                f"subgroup {subgroup_column}={gv} has zero members of one class"
            )
        keep.append(rng.choice(idx0, size=m, replace=False))
        keep.append(rng.choice(idx1, size=m, replace=False))
    rows = np.sort(np.concatenate(keep))
    return dataset.take(rows)


def _round_even(x: float) -> int:
    return int(2 * round(x / 2.0))


def imbalance_subgroup(
    dataset: TabularDataset,
    subgroup_column: str,
    ratio: float,
    rng: np.random.Generator,
) -> TabularDataset:
    """Down-sample a class-balanced dataset to a target minority-subgroup ratio.

    ``ratio`` is the minority share of the output (minority = smaller subgroup
    on input). The 50/50 class split inside each subgroup is preserved, so
    per-group draws come in class pairs; the achieved ratio is within one
    record of the target.
    """
    if not (0.0 < ratio <= 0.5):
        raise ValueError("ratio must lie in (0, 0.5]")
    y = _binary_class_values(dataset)
    g = dataset.column(subgroup_column)
    gvals = np.unique(g)
    if len(gvals) != 2:
        raise ValueError("imbalance requires a binary subgroup column")
    sizes = [int((g == gv).sum()) for gv in gvals]
    mi = int(np.argmin(sizes))
    a_min, a_maj = sizes[mi], sizes[1 - mi]
    for gv in gvals:
        for cls in (0, 1):
            c = int(((g == gv) & (y == cls)).sum())
            if 2 * c != int((g == gv).sum()):
                raise ValueError("dataset must be class-balanced per subgroup first")
    # Use all of whichever side binds, rounding the other to class pairs.
    want_min = a_maj * ratio / (1.0 - ratio)
    if want_min <= a_min:
        m, big = _round_even(want_min), a_maj
    else:
        m = a_min
        big = min(a_maj, _round_even(m * (1.0 - ratio) / ratio))
    if m < 2:
        raise ValueError(
            f"ratio {ratio} unattainable without up-sampling "
            f"(minority {a_min}, majority {a_maj})"
        )
    total = m + big
    if abs(m / total - ratio) > 1.0 / total + 1e-12:
        raise ValueError(f"ratio {ratio} unattainable within one record")
    keep = []
    for gv, target in ((gvals[mi], m), (gvals[1 - mi], big)):
        for cls in (0, 1):
            idx = np.flatnonzero((g == gv) & (y == cls))
            keep.append(rng.choice(idx, size=target // 2, replace=False))
    rows = np.sort(np.concatenate(keep))
    return dataset.take(rows)


# -- one-hot encoding ---------------------------------------------------------


@dataclass(frozen=True)
class OneHotEncoding:
    """Schema-derived one-hot layout shared by the GANs and the classifiers.

    ``blocks`` lists (column index, offset, cardinality); ``width`` is the
    total encoded dimension.
    """

    schema: Schema
    blocks: tuple[tuple[int, int, int], ...] = field(init=False)
    width: int = field(init=False)

    def __post_init__(self):
        blocks = []
        off = 0
        for j, card in enumerate(self.schema.cardinalities()):
            blocks.append((j, off, card))
            off += card
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "width", off)

    def encode(self, dataset: TabularDataset) -> np.ndarray:
        if not dataset.discretized:
            raise ValueError("dataset must be discretized before encoding")
        out = np.zeros((dataset.n, self.width), dtype=np.float64)
        for j, off, _card in self.blocks:
            out[np.arange(dataset.n), off + dataset.values[:, j]] = 1.0
        return out

    def feature_matrix(self, dataset: TabularDataset) -> tuple[np.ndarray, np.ndarray]:
        """One-hot features excluding the class column, plus class labels."""
        x = self.encode(dataset)
        cls = self.schema.index(self.schema.class_column)
        mask = np.ones(self.width, dtype=bool)
        for j, off, card in self.blocks:
            if j == cls:
                mask[off : off + card] = False
        return x[:, mask], dataset.column(self.schema.class_column)

    @property
    def feature_block_count(self) -> int:
        return len(self.blocks) - 1

    def softmax(self, logits: np.ndarray) -> np.ndarray:
        """Per-block softmax over raw logits; rows stay row-stochastic per block."""
        out = np.empty_like(logits)
        for _j, off, card in self.blocks:
            z = logits[:, off : off + card]
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            out[:, off : off + card] = e / e.sum(axis=1, keepdims=True)
        return out

    def sample(self, probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one category per block from per-block probabilities."""
        n = probs.shape[0]
        cols = np.empty((n, len(self.blocks)), dtype=np.int64)
        for j, off, card in self.blocks:
            p = probs[:, off : off + card]
            cdf = np.cumsum(p, axis=1)
            cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
            r = rng.random(n)
            cols[:, j] = (r[:, None] < cdf).argmax(axis=1)
        return cols

    def hard_rows(self, probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sample each block and return exact one-hot rows (same layout)."""
        cols = self.sample(probs, rng)
        out = np.zeros_like(probs)
        for j, off, _card in self.blocks:
            out[np.arange(cols.shape[0]), off + cols[:, j]] = 1.0
        return out

    def dataset_from_probs(
        self, probs: np.ndarray, rng: np.random.Generator, provenance: str = "synthetic"
    ) -> TabularDataset:
        cols = self.sample(probs, rng)
        return TabularDataset(self.schema, cols, discretized=True, provenance=provenance)
