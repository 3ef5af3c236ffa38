import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpsynth import (
    Schema,
    Column,
    SubgroupKey,
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
from dpsynth.data import decode_values


def small_schema():
    return Schema(
        columns=(
            Column("sex", "categorical", categories=("F", "M")),
            Column("income", "categorical", categories=("low", "high")),
        ),
        class_column="income",
        subgroup_columns=("sex",),
    )


def numeric_schema(bins=50):
    return Schema(
        columns=(
            Column("age", "numerical", bounds=(0.0, 100.0)),
            Column("income", "categorical", categories=("low", "high")),
        ),
        class_column="income",
        bin_count=bins,
    )


# -- schema invariants ----------------------------------------------------------


def test_schema_rejects_unknown_class_column():
    with pytest.raises(ValueError, match="class column"):
        Schema(columns=(Column("a", "categorical", categories=("x",)),), class_column="b")


def test_schema_rejects_duplicate_categories():
    with pytest.raises(ValueError, match="duplicate"):
        Column("a", "categorical", categories=("x", "x"))


def test_schema_rejects_bad_bounds():
    with pytest.raises(ValueError, match="min < max"):
        Column("a", "numerical", bounds=(1.0, 1.0))


def test_schema_rejects_small_bin_count():
    with pytest.raises(ValueError, match="bin_count"):
        Schema(
            columns=(Column("a", "categorical", categories=("x", "y")),),
            class_column="a",
            bin_count=1,
        )


def test_schema_json_round_trip(tmp_path):
    s = numeric_schema()
    path = tmp_path / "schema.json"
    s.save(path)
    assert Schema.load(path) == s


def test_subgroup_key_rejects_repeated_attribute():
    with pytest.raises(ValueError):
        SubgroupKey((("sex", "F"), ("sex", "M")))


# -- load_csv --------------------------------------------------------------------


def test_load_csv_three_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sex,income\nF,low\nM,high\nF,low\n")
    ds = load_csv(p, small_schema())
    assert ds.n == 3
    assert ds.values.tolist() == [[0, 0], [1, 1], [0, 0]]


def test_load_csv_rejects_unknown_category(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sex,income\nF,low\nZ,high\n")
    with pytest.raises(ValueError, match=r"row 1, column 'sex'.*'Z'"):
        load_csv(p, small_schema())


def test_load_csv_rejects_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sex\nF\n")
    with pytest.raises(ValueError, match="missing column 'income'"):
        load_csv(p, small_schema())


def test_load_csv_rejects_missing_value(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,income\n12.5,low\n,high\n")
    with pytest.raises(ValueError, match="row 1, column 'age'"):
        load_csv(p, numeric_schema())


def test_load_csv_rejects_unparseable_number(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,income\ntwelve,low\n")
    with pytest.raises(ValueError, match="unparseable numeric"):
        load_csv(p, numeric_schema())


def test_load_csv_trims_cells(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("sex,income\n F , low \n")
    assert load_csv(p, small_schema()).values.tolist() == [[0, 0]]


# -- discretize ------------------------------------------------------------------


def test_discretize_boundaries(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,income\n0.0,low\n100.0,high\n-5.0,low\n120.0,low\n")
    ds = discretize(load_csv(p, numeric_schema(bins=50)))
    assert ds.column("age").tolist() == [0, 49, 0, 49]


def test_discretize_rejects_small_bins(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("age,income\n1.0,low\n")
    with pytest.raises(ValueError, match="bins"):
        discretize(load_csv(p, numeric_schema()), bins=1)


def test_discretize_uniform_histogram_within_multinomial_tolerance():
    # oracle: per-bin count ~ Binomial(n, 1/bins); tolerance 3 sigma
    n, bins = 50_000, 10
    rng = np.random.default_rng(7)
    raw = rng.random(n)
    schema = Schema(
        columns=(
            Column("x", "numerical", bounds=(0.0, 1.0)),
            Column("income", "categorical", categories=("low", "high")),
        ),
        class_column="income",
        bin_count=bins,
    )
    vals = np.column_stack([raw, rng.integers(0, 2, n).astype(float)])
    ds = discretize(TabularDataset(schema, vals, discretized=False))
    counts = np.bincount(ds.column("x"), minlength=bins)
    expect = n / bins
    sigma = np.sqrt(n * (1 / bins) * (1 - 1 / bins))
    assert np.all(np.abs(counts - expect) < 3 * sigma)


def test_round_trip_preserves_categories_and_bins(tmp_path, desk_pair):
    train, _ = desk_pair
    p = tmp_path / "round.csv"
    save_csv(train, p)
    back = load_csv(p, train.schema)
    assert np.array_equal(back.values, train.values)


def test_numeric_round_trip_within_one_bin_width(tmp_path):
    p = tmp_path / "d.csv"
    rng = np.random.default_rng(3)
    raw = rng.uniform(0, 100, 200)
    p.write_text("age,income\n" + "\n".join(f"{float(v)!r},low" for v in raw) + "\n")
    schema = numeric_schema(bins=50)
    ds = discretize(load_csv(p, schema))
    decoded = [float(row[0]) for row in decode_values(ds)]
    width = 100.0 / 50
    assert all(abs(a - b) <= width for a, b in zip(decoded, raw))


# -- balancing -------------------------------------------------------------------


def _toy(counts: dict, seed=0) -> TabularDataset:
    """counts: {(sex_idx, income_idx): count}"""
    rows = []
    for (g, y), c in counts.items():
        rows.extend([[g, y]] * c)
    rng = np.random.default_rng(seed)
    rows = np.asarray(rows)[rng.permutation(len(rows))]
    return TabularDataset(small_schema(), rows, discretized=True)


def test_balance_min_count_rule(rng):
    ds = _toy({(0, 0): 30, (0, 1): 10, (1, 0): 8, (1, 1): 8})
    out = balance_class_within_subgroup(ds, "sex", rng)
    g, y = out.column("sex"), out.column("income")
    assert ((g == 0) & (y == 0)).sum() == 10
    assert ((g == 0) & (y == 1)).sum() == 10
    assert ((g == 1) & (y == 0)).sum() == 8


def test_balance_already_balanced_is_fixpoint(rng):
    ds = _toy({(0, 0): 10, (0, 1): 10, (1, 0): 5, (1, 1): 5})
    out = balance_class_within_subgroup(ds, "sex", rng)
    assert sorted(map(tuple, out.values.tolist())) == sorted(map(tuple, ds.values.tolist()))


def test_balance_per_group_min_oracle(rng):
    ds = _toy({(0, 0): 40, (0, 1): 20, (1, 0): 100, (1, 1): 50})
    out = balance_class_within_subgroup(ds, "sex", rng)
    g, y = out.column("sex"), out.column("income")
    # oracle: each group keeps 2 * min(class counts)
    assert ((g == 0).sum(), (g == 1).sum()) == (40, 100)
    for gv in (0, 1):
        assert ((g == gv) & (y == 0)).sum() == ((g == gv) & (y == 1)).sum()


def test_balance_errors_on_empty_class(rng):
    ds = _toy({(0, 0): 10, (1, 0): 5, (1, 1): 5})
    with pytest.raises(ValueError, match="zero members"):
        balance_class_within_subgroup(ds, "sex", rng)


# -- imbalancing -----------------------------------------------------------------


def test_imbalance_symmetric_half(rng):
    ds = _toy({(0, 0): 250, (0, 1): 250, (1, 0): 250, (1, 1): 250})
    out = imbalance_subgroup(ds, "sex", 0.5, rng)
    g = out.column("sex")
    assert (g == 0).sum() == (g == 1).sum() == 500


def test_imbalance_constraint_oracle(rng):
    # 900 majority available, ratio 0.1 -> minority 100, total 1000, parity kept
    ds = _toy({(0, 0): 100, (0, 1): 100, (1, 0): 450, (1, 1): 450})
    out = imbalance_subgroup(ds, "sex", 0.1, rng)
    g, y = out.column("sex"), out.column("income")
    assert (g == 0).sum() == 100 and out.n == 1000
    for gv in (0, 1):
        assert ((g == gv) & (y == 0)).sum() == ((g == gv) & (y == 1)).sum()


@pytest.mark.parametrize("ratio", [0.01, 0.05, 0.1, 0.25, 0.5])
def test_imbalance_supported_ratios(ratio, rng):
    ds = _toy({(0, 0): 300, (0, 1): 300, (1, 0): 5000, (1, 1): 5000})
    out = imbalance_subgroup(ds, "sex", ratio, rng)
    g = out.column("sex")
    minority = min((g == 0).sum(), (g == 1).sum())
    assert abs(minority / out.n - ratio) <= 1.0 / out.n + 1e-12


def test_imbalance_unattainable_ratio(rng):
    # both groups tiny: a 1% minority share cannot be hit without up-sampling
    ds = _toy({(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 1})
    with pytest.raises(ValueError, match="unattainable"):
        imbalance_subgroup(ds, "sex", 0.01, rng)


def test_imbalance_requires_balanced_input(rng):
    ds = _toy({(0, 0): 30, (0, 1): 10, (1, 0): 50, (1, 1): 50})
    with pytest.raises(ValueError, match="class-balanced"):
        imbalance_subgroup(ds, "sex", 0.25, rng)


def test_imbalance_deterministic_under_seed():
    ds = _toy({(0, 0): 100, (0, 1): 100, (1, 0): 400, (1, 1): 400})
    a = imbalance_subgroup(ds, "sex", 0.2, np.random.default_rng(5))
    b = imbalance_subgroup(ds, "sex", 0.2, np.random.default_rng(5))
    assert np.array_equal(a.values, b.values)


@settings(max_examples=25, deadline=None)
@given(
    n00=st.integers(20, 200), n1=st.integers(20, 200),
    ratio=st.sampled_from([0.05, 0.1, 0.2, 0.3, 0.5]),
    seed=st.integers(0, 10_000),
)
def test_imbalance_ratio_and_parity_property(n00, n1, ratio, seed):
    ds = _toy({(0, 0): n00, (0, 1): n00, (1, 0): n1, (1, 1): n1})
    try:
        out = imbalance_subgroup(ds, "sex", ratio, np.random.default_rng(seed))
    except ValueError:
        return
    g, y = out.column("sex"), out.column("income")
    minority = min((g == 0).sum(), (g == 1).sum())
    assert abs(minority / out.n - ratio) <= 1.0 / out.n + 1e-12
    for gv in (0, 1):
        c0 = ((g == gv) & (y == 0)).sum()
        c1 = ((g == gv) & (y == 1)).sum()
        assert abs(int(c0) - int(c1)) <= 1


# -- subgroups -------------------------------------------------------------------


def test_extract_subgroups_single_binary_attribute():
    ds = _toy({(0, 0): 30, (0, 1): 30, (1, 0): 30, (1, 1): 30})
    groups = extract_subgroups(ds, ["sex"], min_size=25)
    assert [str(k) for k, _ in groups] == ["sex=F", "sex=M"]


def test_extract_subgroups_matches_crosstab_oracle(desk_pair):
    train, _ = desk_pair
    attrs = ["sex", "age_band", "education"]
    groups = extract_subgroups(train, attrs, min_size=25)
    # oracle: exhaustive cross tabulation
    from collections import Counter

    tally = Counter(
        tuple(int(train.column(a)[i]) for a in attrs) for i in range(train.n)
    )
    expected = {combo: c for combo, c in tally.items() if c >= 25}
    assert len(groups) == len(expected)
    for key, rows in groups:
        combo = tuple(
            train.schema.labels(a).index(v) for (a, v) in key.items
        )
        assert expected[combo] == len(rows)


def test_extract_subgroups_disjoint_and_accounted(desk_pair):
    train, _ = desk_pair
    groups = extract_subgroups(train, ["occupation"], min_size=25)
    seen = np.concatenate([rows for _, rows in groups]) if groups else np.array([])
    assert len(seen) == len(set(seen.tolist()))
    discarded = train.n - len(seen)
    assert discarded >= 0
    small = extract_subgroups(train, ["occupation"], min_size=1)
    assert sum(len(r) for _, r in small) == train.n


def test_subgroup_rows_matches_key(desk_pair):
    train, _ = desk_pair
    rows = subgroup_rows(train, SubgroupKey((("sex", "F"),)))
    assert np.array_equal(rows, np.flatnonzero(train.column("sex") == 0))


# -- class distribution ----------------------------------------------------------


def test_class_distribution_arithmetic():
    ds = _toy({(0, 0): 75, (0, 1): 25})
    assert class_distribution(ds) == {"low": 0.75, "high": 0.25}


def test_class_distribution_single_class():
    ds = _toy({(0, 0): 10, (1, 0): 5})
    dist = class_distribution(ds)
    assert dist == {"low": 1.0, "high": 0.0}


def test_class_distribution_sums_to_one(desk_pair):
    train, _ = desk_pair
    assert sum(class_distribution(train).values()) == pytest.approx(1.0, abs=1e-12)


# -- dataset validation ----------------------------------------------------------


def test_dataset_rejects_out_of_domain_values():
    with pytest.raises(ValueError, match="outside"):
        TabularDataset(small_schema(), np.array([[0, 5]]), discretized=True)


def test_dataset_rejects_empty():
    with pytest.raises(ValueError, match="n >= 1"):
        TabularDataset(small_schema(), np.zeros((0, 2), dtype=np.int64))
