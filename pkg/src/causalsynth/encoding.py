"""Numeric encodings shared by models and distance computations.

One encoding path serves both worlds so a categorical level means the
same thing to a nuisance model and to a nearest-record scan:

* binary columns stay a single 0/1 coordinate,
* categorical columns expand to one-of-k indicators,
* continuous columns stay as-is for model features and are standardized
  by reference-set mean/stddev for distances (a zero-spread reference
  column falls back to a divisor of 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tabular import Schema, Table


def encode_features(table: Table, names: list[str] | tuple[str, ...] | None = None) -> np.ndarray:
    """Encode the named columns (default all) as a model feature matrix."""
    if names is None:
        names = table.schema.names
    blocks = []
    for name in names:
        spec = table.schema.column(name)
        col = table.column(name)
        if spec.kind == "categorical":
            levels = np.arange(spec.levels, dtype=np.float64)
            blocks.append((col[:, None] == levels[None, :]).astype(np.float64))
        else:
            blocks.append(col[:, None])
    return np.hstack(blocks)


def encoded_width(schema: Schema, names: list[str] | tuple[str, ...]) -> int:
    total = 0
    for name in names:
        spec = schema.column(name)
        total += spec.levels if spec.kind == "categorical" else 1
    return total


@dataclass(frozen=True)
class DistanceStats:
    """Per-continuous-column standardization constants from a reference set."""

    names: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]


def distance_stats(reference: Table, names: list[str] | tuple[str, ...] | None = None) -> DistanceStats:
    """Compute standardization stats for continuous columns of ``reference``."""
    if names is None:
        names = reference.schema.covariate_names
    cont = [n for n in names if reference.schema.column(n).kind == "continuous"]
    means, stds = [], []
    for name in cont:
        col = reference.column(name)
        mu = float(np.mean(col))
        sd = float(np.std(col))
        means.append(mu)
        stds.append(sd if sd > 0 else 1.0)
    return DistanceStats(tuple(cont), tuple(means), tuple(stds))


def encode_for_distance(
    table: Table,
    names: list[str] | tuple[str, ...],
    stats: DistanceStats,
) -> np.ndarray:
    """Encode columns for Euclidean distance: one-of-k plus standardization."""
    blocks = []
    for name in names:
        spec = table.schema.column(name)
        col = table.column(name)
        if spec.kind == "categorical":
            levels = np.arange(spec.levels, dtype=np.float64)
            blocks.append((col[:, None] == levels[None, :]).astype(np.float64))
        elif spec.kind == "continuous":
            i = stats.names.index(name)
            blocks.append(((col - stats.means[i]) / stats.stds[i])[:, None])
        else:
            blocks.append(col[:, None])
    return np.hstack(blocks)
