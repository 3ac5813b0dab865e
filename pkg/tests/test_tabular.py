import numpy as np
import pytest

from causalsynth.errors import ConfigError, DataError, SchemaError
from causalsynth.tabular import (
    ColumnSpec,
    Schema,
    Table,
    concat_tables,
    load_schema,
    load_table,
    save_schema,
    split_table,
    write_table,
)


def full_schema(d=2):
    cols = [ColumnSpec(f"W{i}", "covariate", "binary") for i in range(1, d + 1)]
    cols.append(ColumnSpec("A", "treatment", "binary"))
    cols.append(ColumnSpec("Y", "outcome", "binary"))
    return Schema(tuple(cols))


def test_load_two_row_file(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("W1,W2,A,Y\n1,0,1,1\n0,1,0,0\n")
    t = load_table(p, full_schema())
    assert t.n_rows == 2
    assert t.column("W1").tolist() == [1.0, 0.0]
    assert t.column("Y").tolist() == [1.0, 0.0]


def test_load_rejects_binary_domain_violation(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("W1,W2,A,Y\n2,0,1,1\n")
    with pytest.raises(DataError) as err:
        load_table(p, full_schema())
    assert "row 1" in str(err.value)
    assert "W1" in str(err.value)


def test_load_rejects_missing_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("W1,A,Y\n1,1,1\n")
    with pytest.raises(DataError) as err:
        load_table(p, full_schema())
    assert "W2" in str(err.value)


def test_load_rejects_empty_data_section(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("W1,W2,A,Y\n")
    with pytest.raises(DataError):
        load_table(p, full_schema())


def test_large_binary_file_loads(tmp_path):
    rng = np.random.default_rng(0)
    cols = [ColumnSpec(f"W{i}", "covariate", "binary") for i in range(1, 7)]
    cols += [ColumnSpec("A", "treatment", "binary"), ColumnSpec("Y", "outcome", "binary")]
    schema = Schema(tuple(cols))
    data = rng.integers(0, 2, size=(5740, 8))
    p = tmp_path / "big.csv"
    lines = [",".join(schema.names)]
    lines += [",".join(str(v) for v in row) for row in data]
    p.write_text("\n".join(lines) + "\n")
    t = load_table(p, schema)
    assert t.n_rows == 5740


def test_round_trip_discrete_exact(tmp_path):
    schema = full_schema()
    t = Table(schema, np.array([[1, 0, 1, 1], [0, 1, 0, 0], [1, 1, 1, 0]], float))
    p = tmp_path / "rt.csv"
    write_table(t, p)
    back = load_table(p, schema)
    assert back == t


def test_round_trip_continuous_exact_via_repr(tmp_path):
    schema = Schema(
        (
            ColumnSpec("X", "covariate", "continuous"),
            ColumnSpec("B", "covariate", "binary"),
        )
    )
    rng = np.random.default_rng(5)
    t = Table(schema, np.column_stack([rng.normal(size=50), rng.integers(0, 2, 50)]))
    p = tmp_path / "rt.csv"
    write_table(t, p)
    back = load_table(p, schema)
    assert np.array_equal(back.data, t.data)


def test_split_partition_sizes():
    schema = full_schema()
    t = Table(schema, np.random.default_rng(1).integers(0, 2, (10, 4)).astype(float))
    train, test = split_table(t, 0.2, seed=7)
    assert train.n_rows == 8
    assert test.n_rows == 2


def test_split_deterministic():
    schema = full_schema()
    t = Table(schema, np.random.default_rng(2).integers(0, 2, (30, 4)).astype(float))
    a = split_table(t, 0.3, seed=11)
    b = split_table(t, 0.3, seed=11)
    assert a[0] == b[0] and a[1] == b[1]


def test_split_multiset_union_equals_input():
    schema = full_schema()
    t = Table(schema, np.random.default_rng(3).integers(0, 2, (100, 4)).astype(float))
    train, test = split_table(t, 0.3, seed=4)
    merged = np.vstack([train.data, test.data])
    key = np.lexsort(merged.T[::-1])
    key0 = np.lexsort(t.data.T[::-1])
    assert np.array_equal(merged[key], t.data[key0])


def test_split_rejects_bad_fraction():
    schema = full_schema()
    t = Table(schema, np.zeros((10, 4)))
    for frac in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ConfigError):
            split_table(t, frac, seed=1)


def test_split_rejects_degenerate_partition():
    schema = full_schema()
    t = Table(schema, np.zeros((2, 4)))
    with pytest.raises(DataError):
        split_table(t, 0.01, seed=1)


def test_schema_rejects_nonbinary_treatment():
    with pytest.raises(SchemaError):
        ColumnSpec("A", "treatment", "continuous")


def test_schema_rejects_duplicate_names():
    with pytest.raises(SchemaError):
        Schema((ColumnSpec("W", "covariate", "binary"), ColumnSpec("W", "covariate", "binary")))


def test_schema_rejects_two_treatments():
    with pytest.raises(SchemaError):
        Schema(
            (
                ColumnSpec("A1", "treatment", "binary"),
                ColumnSpec("A2", "treatment", "binary"),
                ColumnSpec("Y", "outcome", "binary"),
                ColumnSpec("W", "covariate", "binary"),
            )
        )


def test_categorical_needs_two_levels():
    with pytest.raises(SchemaError):
        ColumnSpec("C", "covariate", "categorical", levels=1)


def test_covariate_only_schema_is_allowed_but_not_full():
    schema = Schema((ColumnSpec("W1", "covariate", "binary"),))
    assert not schema.is_full
    with pytest.raises(SchemaError):
        schema.require_full()


def test_table_immutable():
    t = Table(full_schema(), np.zeros((1, 4)))
    with pytest.raises(AttributeError):
        t.data = np.ones((1, 4))
    with pytest.raises(ValueError):
        t.data[0, 0] = 1.0


def test_table_rejects_categorical_out_of_range():
    schema = Schema((ColumnSpec("C", "covariate", "categorical", levels=3),))
    Table(schema, np.array([[0.0], [2.0]]))
    with pytest.raises(DataError):
        Table(schema, np.array([[3.0]]))


def test_table_rejects_nonfinite_continuous():
    schema = Schema((ColumnSpec("X", "covariate", "continuous"),))
    with pytest.raises(DataError):
        Table(schema, np.array([[np.inf]]))


def test_randomly_corrupted_files_rejected(tmp_path):
    rng = np.random.default_rng(9)
    schema = full_schema(3)
    base = rng.integers(0, 2, size=(20, 5))
    for trial in range(20):
        rows = base.astype(object).tolist()
        i = int(rng.integers(0, 20))
        j = int(rng.integers(0, 5))
        rows[i][j] = rng.choice(["2", "-1", "x", "1.5", ""])
        p = tmp_path / f"bad{trial}.csv"
        text = ",".join(schema.names) + "\n"
        text += "\n".join(",".join(str(v) for v in r) for r in rows) + "\n"
        p.write_text(text)
        with pytest.raises(DataError):
            load_table(p, schema)


def test_concat_requires_matching_schema():
    t1 = Table(full_schema(), np.zeros((2, 4)))
    t2 = Table(full_schema(3), np.zeros((2, 5)))
    with pytest.raises(SchemaError):
        concat_tables(t1, t2)
    both = concat_tables(t1, t1)
    assert both.n_rows == 4


def test_schema_file_round_trip(tmp_path):
    schema = Schema(
        (
            ColumnSpec("W1", "covariate", "binary"),
            ColumnSpec("C", "covariate", "categorical", levels=4),
            ColumnSpec("X", "covariate", "continuous"),
            ColumnSpec("A", "treatment", "binary"),
            ColumnSpec("Y", "outcome", "binary"),
        )
    )
    p = tmp_path / "schema.json"
    save_schema(schema, p)
    assert load_schema(p) == schema
