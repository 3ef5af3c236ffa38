"""Column schemas for encoded tabular datasets.

A schema declares, per column, either a categorical domain or public numeric
bounds, plus which column carries the class label and which columns may be
used to form subgroups. Numeric bounds are treated as public metadata, so
discretizing against them consumes no privacy budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

CATEGORICAL = "categorical"
NUMERICAL = "numerical"


@dataclass(frozen=True)
class Column:
    """One column: a name plus its public domain."""

    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERICAL):
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise ValueError(f"column {self.name!r}: empty categorical domain")
            if len(set(self.categories)) != len(self.categories):
                raise ValueError(f"column {self.name!r}: duplicate categories")
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        else:
            if self.bounds is None:
                raise ValueError(f"column {self.name!r}: numerical column needs bounds")
            lo, hi = (float(self.bounds[0]), float(self.bounds[1]))
            if not (lo < hi):
                raise ValueError(f"column {self.name!r}: bounds must satisfy min < max")
            object.__setattr__(self, "bounds", (lo, hi))

    def cardinality(self, bin_count: int) -> int:
        """Number of encoded values: category count, or bin count for numerics."""
        if self.kind == CATEGORICAL:
            return len(self.categories)
        return bin_count


@dataclass(frozen=True)
class Schema:
    """Dataset schema: columns, class column, subgroup columns, bin count."""

    columns: tuple[Column, ...]
    class_column: str
    subgroup_columns: tuple[str, ...] = ()
    bin_count: int = 50

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "subgroup_columns", tuple(self.subgroup_columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names")
        if self.class_column not in names:
            raise ValueError(f"class column {self.class_column!r} not in columns")
        for s in self.subgroup_columns:
            if s not in names:
                raise ValueError(f"subgroup column {s!r} not in columns")
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")

    # -- lookups ------------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def cardinalities(self) -> tuple[int, ...]:
        return tuple(c.cardinality(self.bin_count) for c in self.columns)

    def has_numerical(self) -> bool:
        return any(c.kind == NUMERICAL for c in self.columns)

    def labels(self, name: str) -> tuple[str, ...]:
        """Decoded value labels for a column (categories, or bin tags)."""
        col = self.column(name)
        if col.kind == CATEGORICAL:
            return col.categories
        return tuple(f"bin{i}" for i in range(self.bin_count))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind}
            if c.kind == CATEGORICAL:
                d["categories"] = list(c.categories)
            else:
                d["bounds"] = list(c.bounds)
            cols.append(d)
        return {
            "columns": cols,
            "class_column": self.class_column,
            "subgroup_columns": list(self.subgroup_columns),
            "bin_count": self.bin_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        cols = []
        for c in d["columns"]:
            cols.append(
                Column(
                    name=c["name"],
                    kind=c["kind"],
                    categories=tuple(c["categories"]) if "categories" in c else None,
                    bounds=tuple(c["bounds"]) if "bounds" in c else None,
                )
            )
        return cls(
            columns=tuple(cols),
            class_column=d["class_column"],
            subgroup_columns=tuple(d.get("subgroup_columns", ())),
            bin_count=int(d.get("bin_count", 50)),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class SubgroupKey:
    """An intersection of attribute values, e.g. (sex=F, race=B)."""

    items: tuple[tuple[str, str], ...]

    def __post_init__(self):
        attrs = [a for a, _ in self.items]
        if len(set(attrs)) != len(attrs):
            raise ValueError("subgroup attributes must be distinct")
        object.__setattr__(self, "items", tuple((str(a), str(v)) for a, v in self.items))

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.items)

    def __str__(self) -> str:
        return "&".join(f"{a}={v}" for a, v in self.items)
