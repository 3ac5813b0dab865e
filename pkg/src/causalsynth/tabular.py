"""Schema-validated tabular data.

A :class:`Table` is an immutable block of rows tied to a :class:`Schema`.
Columns play one of three roles (covariate, treatment, outcome) and carry
one of three kinds (binary, categorical with k levels, continuous).
Treatment and outcome columns are always binary.

Files are plain CSV: comma separated, UTF-8, first line a header naming
the columns. Values must be complete; missing entries are rejected rather
than imputed. Schemas themselves live in small JSON documents (see
``load_schema``); a commented reference copy ships in ``configs/``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .rng import derive_rng

ROLES = ("covariate", "treatment", "outcome")
KINDS = ("binary", "categorical", "continuous")


@dataclass(frozen=True)
class ColumnSpec:
    """A single column: its name, causal role, and value kind.

    Parameters
    ----------
    name : str
        Non-empty column name, unique within a schema.
    role : str
        One of ``covariate``, ``treatment``, ``outcome``.
    kind : str
        One of ``binary``, ``categorical``, ``continuous``.
    levels : int, optional
        Number of levels for categorical columns (values ``0..levels-1``).
        Must be omitted for the other kinds.
    """

    name: str
    role: str
    kind: str
    levels: int | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if self.levels is None or self.levels < 2:
                raise SchemaError(
                    f"column {self.name!r}: categorical kind needs levels >= 2"
                )
        elif self.levels is not None:
            raise SchemaError(
                f"column {self.name!r}: levels only applies to categorical columns"
            )
        if self.role in ("treatment", "outcome") and self.kind != "binary":
            raise SchemaError(f"column {self.name!r}: {self.role} must be binary")


@dataclass(frozen=True)
class Schema:
    """An ordered collection of column specs.

    A schema always has at least one covariate and never more than one
    treatment or outcome column. A *full* schema (``is_full``) has exactly
    one of each and is what dataset-level operations require; covariate
    sub-schemas simply omit them.
    """

    columns: tuple[ColumnSpec, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise SchemaError(f"duplicate column name {dup!r}")
        n_treat = sum(c.role == "treatment" for c in self.columns)
        n_out = sum(c.role == "outcome" for c in self.columns)
        n_cov = sum(c.role == "covariate" for c in self.columns)
        if n_treat > 1 or n_out > 1:
            raise SchemaError("at most one treatment and one outcome column allowed")
        if n_cov == 0:
            raise SchemaError("schema needs at least one covariate column")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def is_full(self) -> bool:
        roles = [c.role for c in self.columns]
        return "treatment" in roles and "outcome" in roles

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.role == "covariate")

    @property
    def treatment_name(self) -> str:
        return self._single("treatment")

    @property
    def outcome_name(self) -> str:
        return self._single("outcome")

    def _single(self, role: str) -> str:
        for c in self.columns:
            if c.role == role:
                return c.name
        raise SchemaError(f"schema has no {role} column")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"schema has no column named {name!r}")

    def subset(self, names: tuple[str, ...] | list[str]) -> "Schema":
        return Schema(tuple(self.column(n) for n in names))

    def covariate_schema(self) -> "Schema":
        return self.subset(self.covariate_names)

    def require_full(self) -> "Schema":
        if not self.is_full:
            raise SchemaError(
                "operation needs a full schema with one treatment and one outcome"
            )
        return self


def _check_values(spec: ColumnSpec, values: np.ndarray, path: str | None) -> None:
    """Raise a DataError naming the first offending row of a bad column."""
    where = f" in {path}" if path else ""
    if spec.kind == "continuous":
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.argmax(bad)) + 1
            raise DataError(
                f"row {row}, column {spec.name!r}{where}: "
                f"continuous value must be finite, got {float(values[np.argmax(bad)])!r}"
            )
        return
    integral = values == np.floor(values)
    if spec.kind == "binary":
        ok = integral & ((values == 0) | (values == 1))
    else:
        ok = integral & (values >= 0) & (values < spec.levels)
    bad = ~ok
    if bad.any():
        row = int(np.argmax(bad)) + 1
        label = "binary" if spec.kind == "binary" else f"categorical({spec.levels})"
        raise DataError(
            f"row {row}, column {spec.name!r}{where}: "
            f"value {float(values[np.argmax(bad)])!r} outside {label} range"
        )


class Table:
    """Immutable rows bound to a schema.

    Data is stored as one float64 matrix with a column per schema column.
    Discrete columns hold exact small integers. Construction validates
    every value against its column kind and freezes the array.
    """

    __slots__ = ("schema", "data")

    def __init__(self, schema: Schema, data: np.ndarray, *, _path: str | None = None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(schema.columns):
            raise DataError(
                f"data shape {data.shape} does not match the "
                f"{len(schema.columns)}-column schema"
            )
        for j, spec in enumerate(schema.columns):
            _check_values(spec, data[:, j], _path)
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "data", data)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("Table is immutable")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        names = self.schema.names
        if name not in names:
            raise SchemaError(f"table has no column named {name!r}")
        return self.data[:, names.index(name)]

    def select(self, names: tuple[str, ...] | list[str]) -> "Table":
        """Project onto the named columns (schema order of the projection)."""
        idx = [self.schema.names.index(n) for n in names]
        return Table(self.schema.subset(tuple(names)), self.data[:, idx])

    def covariates(self) -> "Table":
        return self.select(list(self.schema.covariate_names))

    def take(self, indices: np.ndarray) -> "Table":
        return Table(self.schema, self.data[np.asarray(indices, dtype=np.intp)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Table):
            return NotImplemented
        return self.schema == other.schema and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        return f"Table(n={self.n_rows}, columns={list(self.schema.names)})"


def concat_tables(first: Table, second: Table) -> Table:
    """Stack two tables that share a schema, first's rows on top."""
    if first.schema != second.schema:
        raise SchemaError("cannot concatenate tables with different schemas")
    return Table(first.schema, np.vstack([first.data, second.data]))


def load_table(path: str | Path, schema: Schema) -> Table:
    """Read a CSV file and validate it against ``schema``.

    The header must name every schema column (any order; extras are
    rejected). Every cell must parse for its column kind; the error for a
    bad cell names the 1-based data row and the column. An empty data
    section is an error.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header line")
        header = [h.strip() for h in header]
        for name in schema.names:
            if name not in header:
                raise DataError(f"{path}: header is missing column {name!r}")
        for name in header:
            if name not in schema.names:
                raise DataError(f"{path}: unexpected column {name!r} not in schema")
        rows: list[list[float]] = []
        for i, raw in enumerate(reader, start=1):
            if len(raw) != len(header):
                raise DataError(
                    f"{path}: row {i} has {len(raw)} fields, expected {len(header)}"
                )
            parsed = []
            for name, token in zip(header, raw):
                token = token.strip()
                if token == "":
                    raise DataError(
                        f"{path}: row {i}, column {name!r}: missing value"
                    )
                spec = schema.column(name)
                try:
                    if spec.kind == "continuous":
                        value = float(token)
                    else:
                        value = float(int(token))
                except ValueError:
                    raise DataError(
                        f"{path}: row {i}, column {name!r}: "
                        f"cannot parse {token!r} as {spec.kind}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    data = np.array(rows, dtype=np.float64)
    order = [header.index(n) for n in schema.names]
    return Table(schema, data[:, order], _path=str(path))


def write_table(table: Table, path: str | Path) -> None:
    """Write a table as CSV (schema column order, header included).

    Discrete values are written as integers and round-trip exactly;
    continuous values use ``repr`` so reading them back is lossless.
    """
    path = Path(path)
    kinds = [c.kind for c in table.schema.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.schema.names)
        for row in table.data:
            writer.writerow(
                [
                    repr(float(v)) if kind == "continuous" else str(int(v))
                    for v, kind in zip(row, kinds)
                ]
            )


def split_table(table: Table, test_fraction: float, seed: int) -> tuple[Table, Table]:
    """Random train/test split, deterministic in ``seed``.

    The test part gets ``round(test_fraction * n)`` rows (half away from
    zero); both parts must end up non-empty. Row order within each part
    follows the original table.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = table.n_rows
    n_test = int(np.floor(test_fraction * n + 0.5))
    if n_test == 0 or n_test == n:
        raise DataError(
            f"split of {n} rows at fraction {test_fraction} leaves an empty part"
        )
    perm = derive_rng(seed, 0).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return table.take(train_idx), table.take(test_idx)


def load_schema(path: str | Path) -> Schema:
    """Load a schema from a JSON document.

    Expected layout::

        {"columns": [{"name": "W1", "role": "covariate", "kind": "binary"},
                     {"name": "X",  "role": "covariate",
                      "kind": "categorical", "levels": 3},
                     {"name": "A",  "role": "treatment", "kind": "binary"},
                     {"name": "Y",  "role": "outcome",   "kind": "binary"}]}
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict) or "columns" not in doc:
        raise SchemaError(f"{path}: schema document needs a 'columns' list")
    cols = []
    for entry in doc["columns"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaError(f"{path}: each column entry needs at least a 'name'")
        allowed = {"name", "role", "kind", "levels"}
        extra = set(entry) - allowed
        if extra:
            raise SchemaError(
                f"{path}: column {entry.get('name')!r} has unknown keys {sorted(extra)}"
            )
        cols.append(
            ColumnSpec(
                name=entry["name"],
                role=entry.get("role", "covariate"),
                kind=entry.get("kind", "binary"),
                levels=entry.get("levels"),
            )
        )
    return Schema(tuple(cols))


def schema_to_dict(schema: Schema) -> dict:
    columns = []
    for c in schema.columns:
        entry: dict = {"name": c.name, "role": c.role, "kind": c.kind}
        if c.levels is not None:
            entry["levels"] = c.levels
        columns.append(entry)
    return {"columns": columns}


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(schema_to_dict(schema), indent=2) + "\n", encoding="utf-8"
    )
