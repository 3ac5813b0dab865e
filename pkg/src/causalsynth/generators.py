"""Covariate distribution models and closeness-to-source auditing.

Two generator modes share one fitted representation:

``independent``
    Each column gets a smoothed marginal frequency table. Continuous
    columns are discretized into equal-frequency quantile bins first and
    decoded by drawing uniformly inside the sampled bin.

``chain``
    Columns are modeled autoregressively in ``column_order``: each column
    gets a conditional model given the encodings of its predecessors
    (ridge-logistic for binary, one-vs-rest logistic for categorical,
    the same over bin indices for continuous). The first column in the
    order has no predecessors and keeps its smoothed marginal.

The Laplace pseudocount ``smoothing`` enters wherever a discrete
distribution table is normalized: marginal tables and the one-vs-rest
normalization. Sampling consumes one uniform stream derived from the
seed, in column order, so draws are reproducible.

The same module owns the privacy-facing distance-to-closest-record
(DCR) tools: ``dcr_report`` summarizes how close candidate rows sit to a
reference set, and ``dcr_filter`` drops rows that sit too close (exact
duplicates by default) and can optionally subsample the survivors so
their DCR distribution matches a holdout-vs-seed target.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import DistanceStats, distance_stats, encode_for_distance
from .errors import ConfigError, DataError, SchemaError
from .models import fit_logistic, predict_logistic
from .rng import derive_rng
from .tabular import ColumnSpec, Schema, Table, load_table, schema_to_dict

GENERATOR_FORMAT_VERSION = 1
MIN_FIT_ROWS = 10


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration of a covariate generator.

    Args:
        mode: "independent" (marginals only) or "chain" (autoregressive).
        order_policy: "schema-order" keeps the column order as declared;
            "random-permutation" derives a permutation from the fit seed.
        smoothing: Laplace pseudocount alpha >= 0 for discrete
            distribution tables.
        continuous_bins: number of quantile bins for continuous columns.
    """

    mode: str = "chain"
    order_policy: str = "schema-order"
    smoothing: float = 1.0
    continuous_bins: int = 10

    def __post_init__(self) -> None:
        if self.mode not in ("independent", "chain"):
            raise ConfigError(f"unknown generator mode {self.mode!r}")
        if self.order_policy not in ("schema-order", "random-permutation"):
            raise ConfigError(f"unknown order_policy {self.order_policy!r}")
        if self.smoothing < 0:
            raise ConfigError(f"smoothing must be >= 0, got {self.smoothing}")
        if self.continuous_bins < 2:
            raise ConfigError(
                f"continuous_bins must be >= 2, got {self.continuous_bins}"
            )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "order_policy": self.order_policy,
            "smoothing": self.smoothing,
            "continuous_bins": self.continuous_bins,
        }


@dataclass(frozen=True)
class FittedGenerator:
    """A fitted generator: spec, modeled schema, order, per-column models."""

    spec: GeneratorSpec
    schema: Schema
    column_order: tuple[str, ...]
    columns: dict
    n_fit: int

    def __post_init__(self) -> None:
        for name, model in self.columns.items():
            probs = model.get("probs")
            if probs is not None:
                arr = np.asarray(probs, dtype=np.float64)
                if (arr < 0).any() or (arr > 1).any():
                    raise DataError(f"column {name!r}: marginal probability outside [0, 1]")
                if abs(float(arr.sum()) - 1.0) > 1e-9:
                    raise DataError(
                        f"column {name!r}: marginal distribution sums to {arr.sum()!r}"
                    )


def _quantile_edges(values: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1))
    return np.unique(edges)


def _bin_indices(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges[1:-1], values, side="right")
    return np.clip(idx, 0, len(edges) - 2)


def _check_absent_levels(counts: np.ndarray, alpha: float, name: str) -> None:
    if alpha == 0.0 and (counts == 0).any():
        level = int(np.argmax(counts == 0))
        raise DataError(
            f"column {name!r}: level {level} absent from the data and "
            "smoothing is 0; supply smoothing > 0 or more data"
        )


def _smoothed_counts(counts: np.ndarray, alpha: float) -> np.ndarray:
    total = counts.sum() + alpha * len(counts)
    return (counts + alpha) / total


def _predecessor_matrix(
    schema: Schema,
    order: tuple[str, ...],
    upto: int,
    raw: dict[str, np.ndarray],
    bin_index: dict[str, np.ndarray],
    n_bins: dict[str, int],
) -> np.ndarray | None:
    """Encode columns order[0:upto] as chain features (one-of-k, bins for continuous)."""
    if upto == 0:
        return None
    blocks = []
    for name in order[:upto]:
        spec = schema.column(name)
        if spec.kind == "binary":
            blocks.append(raw[name][:, None])
        elif spec.kind == "categorical":
            levels = np.arange(spec.levels, dtype=np.float64)
            blocks.append((raw[name][:, None] == levels[None, :]).astype(np.float64))
        else:
            idx = bin_index[name]
            k = n_bins[name]
            blocks.append((idx[:, None] == np.arange(k)[None, :]).astype(np.float64))
    return np.hstack(blocks)


def _column_levels(spec: ColumnSpec, edges: np.ndarray | None) -> int:
    if spec.kind == "binary":
        return 2
    if spec.kind == "categorical":
        return int(spec.levels)
    return len(edges) - 1


def _fit_columns(table: Table, spec: GeneratorSpec, seed: int) -> FittedGenerator:
    if table.n_rows < MIN_FIT_ROWS:
        raise DataError(
            f"generator fit needs at least {MIN_FIT_ROWS} rows, got {table.n_rows}"
        )
    schema = table.schema
    names = schema.names
    if spec.order_policy == "random-permutation":
        perm = derive_rng(seed, 0).permutation(len(names))
        order = tuple(names[i] for i in perm)
    else:
        order = tuple(names)

    raw = {n: table.column(n) for n in names}
    bin_index: dict[str, np.ndarray] = {}
    n_bins: dict[str, int] = {}
    edges_by_col: dict[str, np.ndarray] = {}
    for n in names:
        if schema.column(n).kind == "continuous":
            edges = _quantile_edges(raw[n], spec.continuous_bins)
            edges_by_col[n] = edges
            bin_index[n] = _bin_indices(raw[n], edges)
            n_bins[n] = len(edges) - 1

    columns: dict = {}
    for pos, name in enumerate(order):
        col_spec = schema.column(name)
        edges = edges_by_col.get(name)
        k = _column_levels(col_spec, edges)
        if col_spec.kind == "continuous":
            values = bin_index[name]
        else:
            values = raw[name]
        counts = np.bincount(values.astype(np.intp), minlength=k).astype(np.float64)
        if col_spec.kind == "categorical":
            # A degenerate binary marginal (all zeros or all ones) is a
            # legitimate law; a silent zero-probability categorical level
            # is not, because the caller declared it exists.
            _check_absent_levels(counts, spec.smoothing, name)
        X = (
            _predecessor_matrix(schema, order, pos, raw, bin_index, n_bins)
            if spec.mode == "chain"
            else None
        )
        if X is None:
            model: dict = {
                "type": "marginal",
                "probs": _smoothed_counts(counts, spec.smoothing).tolist(),
            }
        elif k == 2 and col_spec.kind == "binary":
            # Binary conditional: a single ridge-logistic fit.
            model = {"type": "logistic", "params": fit_logistic(X, values)}
        else:
            per_level = [
                fit_logistic(X, (values == level).astype(np.float64))
                for level in range(k)
            ]
            model = {"type": "one_vs_rest", "params_by_level": per_level, "levels": k}
        if edges is not None:
            model["edges"] = edges.tolist()
        columns[name] = model
    return FittedGenerator(
        spec=spec,
        schema=schema,
        column_order=order,
        columns=columns,
        n_fit=table.n_rows,
    )


def fit_generator(table: Table, spec: GeneratorSpec, seed: int) -> FittedGenerator:
    """Fit a generator on a covariate-only table.

    Raises SchemaError if the table carries treatment or outcome columns
    (use ``fit_joint_generator`` to model a full table on purpose) and
    DataError when there are fewer than 10 rows.
    """
    bad = [c.name for c in table.schema.columns if c.role != "covariate"]
    if bad:
        raise SchemaError(
            f"fit_generator models covariates only; non-covariate columns {bad} "
            "present (fit_joint_generator models full tables)"
        )
    return _fit_columns(table, spec, seed)


def fit_joint_generator(table: Table, spec: GeneratorSpec, seed: int) -> FittedGenerator:
    """Fit a generator over a full (covariates, treatment, outcome) table.

    Treatment and outcome are modeled as ordinary binary columns, which
    deliberately ignores their causal roles; this exists as a baseline
    for comparison against the structure-preserving pipeline.
    """
    table.schema.require_full()
    return _fit_columns(table, spec, seed)


def _sample_level_probs(
    model: dict, X: np.ndarray | None, m: int, alpha: float, n_fit: int
) -> np.ndarray:
    """Per-row probability table (m x k) for a fitted column model."""
    if model["type"] == "marginal":
        probs = np.asarray(model["probs"], dtype=np.float64)
        return np.tile(probs, (m, 1))
    if model["type"] == "logistic":
        p1 = predict_logistic(model["params"], X)
        return np.column_stack([1.0 - p1, p1])
    # One-vs-rest: normalize with the fit-time pseudocount mass so no
    # level's probability is pinned to exactly zero when alpha > 0.
    scores = np.column_stack(
        [predict_logistic(params, X) for params in model["params_by_level"]]
    )
    scores = scores + alpha / n_fit
    return scores / scores.sum(axis=1, keepdims=True)


def sample_covariates(gen: FittedGenerator, m: int, seed: int) -> Table:
    """Draw ``m`` rows from a fitted generator, deterministically in ``seed``."""
    if m < 1:
        raise ConfigError(f"sample size must be >= 1, got {m}")
    rng = derive_rng(seed, 0)
    schema = gen.schema
    raw: dict[str, np.ndarray] = {}
    bin_index: dict[str, np.ndarray] = {}
    n_bins: dict[str, int] = {}
    for pos, name in enumerate(gen.column_order):
        col_spec = schema.column(name)
        model = gen.columns[name]
        X = _predecessor_matrix(schema, gen.column_order, pos, raw, bin_index, n_bins)
        probs = _sample_level_probs(model, X, m, gen.spec.smoothing, gen.n_fit)
        u = rng.random(m)
        if probs.shape[1] == 2 and col_spec.kind == "binary":
            level = (u < probs[:, 1]).astype(np.float64)
        else:
            cum = np.cumsum(probs, axis=1)
            level = np.minimum(
                np.sum(cum < u[:, None], axis=1), probs.shape[1] - 1
            ).astype(np.float64)
        if col_spec.kind == "continuous":
            edges = np.asarray(model["edges"], dtype=np.float64)
            idx = level.astype(np.intp)
            lo = edges[idx]
            hi = edges[idx + 1]
            v = rng.random(m)
            raw[name] = lo + v * (hi - lo)
            bin_index[name] = idx
            n_bins[name] = len(edges) - 1
        else:
            raw[name] = level
    data = np.column_stack([raw[n] for n in schema.names])
    return Table(schema, data)


def import_external_covariates(path: str | Path, schema: Schema) -> Table:
    """Load covariates produced outside the package and validate them.

    ``schema`` may be a full dataset schema (its covariate part is used)
    or a covariate sub-schema. The file must contain exactly the
    covariate columns; anything else is rejected by name.
    """
    cov_schema = schema.covariate_schema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            header = [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header line")
    for name in header:
        if name not in cov_schema.names:
            raise DataError(f"{path}: non-covariate column {name!r} in import")
    return load_table(path, cov_schema)


def generator_to_dict(gen: FittedGenerator) -> dict:
    return {
        "format_version": GENERATOR_FORMAT_VERSION,
        "spec": gen.spec.to_dict(),
        "schema": schema_to_dict(gen.schema),
        "column_order": list(gen.column_order),
        "columns": gen.columns,
        "n_fit": gen.n_fit,
    }


def save_generator(gen: FittedGenerator, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(generator_to_dict(gen), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_generator(path: str | Path) -> FittedGenerator:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise DataError(f"{path}: generator document must be a JSON object")
    version = doc.get("format_version")
    if version != GENERATOR_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported generator format version {version!r}, "
            f"expected {GENERATOR_FORMAT_VERSION}"
        )
    try:
        cols = tuple(
            ColumnSpec(
                name=c["name"], role=c.get("role", "covariate"),
                kind=c.get("kind", "binary"), levels=c.get("levels"),
            )
            for c in doc["schema"]["columns"]
        )
        return FittedGenerator(
            spec=GeneratorSpec(**doc["spec"]),
            schema=Schema(cols),
            column_order=tuple(doc["column_order"]),
            columns=doc["columns"],
            n_fit=int(doc["n_fit"]),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed generator document ({exc!r})")


# ---------------------------------------------------------------------------
# Distance to closest record
# ---------------------------------------------------------------------------

QUANTILE_KEYS = ("min", "q25", "median", "q75", "max", "mean")


@dataclass(frozen=True)
class DcrReport:
    """Summary of candidate-to-reference closest-record distances."""

    n_candidate: int
    n_reference: int
    quantiles: dict
    comparison_quantiles: dict | None
    distances: np.ndarray

    def to_dict(self) -> dict:
        doc = {
            "n_candidate": self.n_candidate,
            "n_reference": self.n_reference,
            "quantiles": self.quantiles,
        }
        if self.comparison_quantiles is not None:
            doc["comparison_quantiles"] = self.comparison_quantiles
        return doc


@dataclass(frozen=True)
class FilterPolicy:
    """How dcr_filter decides which candidate rows survive.

    ``floor`` is the smallest allowed DCR; the default is the smallest
    positive float, which removes exact duplicates and nothing else.
    ``match_quantiles`` additionally subsamples survivors toward the
    holdout-vs-seed DCR distribution.
    """

    floor: float = float(np.nextafter(0.0, 1.0))
    match_quantiles: bool = False

    def __post_init__(self) -> None:
        if not np.isfinite(self.floor) or self.floor < 0:
            raise ConfigError(f"floor must be a finite value >= 0, got {self.floor}")


@dataclass(frozen=True)
class DcrFilterReport:
    """Outcome of a dcr_filter run, serializable alongside DcrReport."""

    n_candidate: int
    n_reference: int
    removed_floor: int
    removed_match: int
    kept: int
    quantiles: dict
    comparison_quantiles: dict | None
    quantile_match_feasible: bool | None

    @property
    def removed_count(self) -> int:
        return self.removed_floor + self.removed_match

    def to_dict(self) -> dict:
        doc = {
            "n_candidate": self.n_candidate,
            "n_reference": self.n_reference,
            "quantiles": self.quantiles,
            "removed_count": self.removed_count,
            "removed_floor": self.removed_floor,
            "removed_match": self.removed_match,
            "kept": self.kept,
        }
        if self.comparison_quantiles is not None:
            doc["comparison_quantiles"] = self.comparison_quantiles
        if self.quantile_match_feasible is not None:
            doc["quantile_match_feasible"] = self.quantile_match_feasible
        return doc


def _check_covariate_schemas(*tables: Table) -> tuple[str, ...]:
    base = tables[0].schema.covariate_schema()
    for t in tables[1:]:
        if t.schema.covariate_schema() != base:
            raise SchemaError("tables do not share a covariate schema")
    return base.names


def _min_distances(C: np.ndarray, R: np.ndarray, workers: int = 1) -> np.ndarray:
    """Exact minimum Euclidean distance from each row of C to the rows of R."""
    n = C.shape[0]
    block = 512

    def scan(start: int) -> np.ndarray:
        stop = min(start + block, n)
        diff = C[start:stop, None, :] - R[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        return np.sqrt(sq.min(axis=1))

    starts = range(0, n, block)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(scan, starts))
    else:
        parts = [scan(s) for s in starts]
    return np.concatenate(parts) if parts else np.empty(0)


def dcr_quantiles(distances: np.ndarray) -> dict:
    q = np.quantile(distances, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "min": float(q[0]),
        "q25": float(q[1]),
        "median": float(q[2]),
        "q75": float(q[3]),
        "max": float(q[4]),
        "mean": float(np.mean(distances)),
    }


def dcr_report(
    candidate: Table,
    reference: Table,
    comparison: Table | None = None,
    workers: int = 1,
) -> DcrReport:
    """Distance of each candidate row to its closest reference record.

    Distances are Euclidean over the shared covariate encoding (binary
    0/1, categorical one-of-k, continuous standardized by the reference
    set). When ``comparison`` is given (say, a held-out real split), its
    DCR quantiles against the same reference are attached so candidate
    closeness can be judged against a realistic baseline.
    """
    tables = (candidate, reference) + ((comparison,) if comparison is not None else ())
    names = _check_covariate_schemas(*tables)
    stats = distance_stats(reference, names)
    R = encode_for_distance(reference, names, stats)
    C = encode_for_distance(candidate, names, stats)
    distances = _min_distances(C, R, workers)
    comparison_quantiles = None
    if comparison is not None:
        D = encode_for_distance(comparison, names, stats)
        comparison_quantiles = dcr_quantiles(_min_distances(D, R, workers))
    return DcrReport(
        n_candidate=candidate.n_rows,
        n_reference=reference.n_rows,
        quantiles=dcr_quantiles(distances),
        comparison_quantiles=comparison_quantiles,
        distances=distances,
    )


def _decile_transport(distances: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Pick the largest index subset whose distances track target deciles.

    Splits the distance line at the nine interior deciles of the target
    distribution (outer bins unbounded), keeps the same count from every
    bin, sized by the thinnest bin, and takes the lowest-index rows
    within each bin so the choice is deterministic. Returns selected
    indices in ascending order; empty when some bin holds no candidates.
    """
    edges = np.unique(np.quantile(target, np.linspace(0.1, 0.9, 9)))
    bin_of = np.searchsorted(edges, distances, side="right")
    per_bin = [np.flatnonzero(bin_of == b) for b in range(len(edges) + 1)]
    limit = min(len(b) for b in per_bin)
    if limit == 0:
        return np.empty(0, dtype=np.intp)
    chosen = np.concatenate([b[:limit] for b in per_bin])
    return np.sort(chosen)


def dcr_filter(
    candidate: Table,
    seed_reference: Table,
    holdout_reference: Table | None = None,
    policy: FilterPolicy = FilterPolicy(),
    workers: int = 1,
) -> tuple[Table, DcrFilterReport]:
    """Drop candidate rows that sit too close to the seed records.

    Rows survive when their DCR against ``seed_reference`` is at least
    ``policy.floor``; the default floor removes exact duplicates only.
    With ``policy.match_quantiles`` the survivors are further subsampled
    toward the holdout-vs-seed DCR distribution, which passes through the
    same floor so both sides exclude duplicates; feasibility is judged on
    the q25/median/q75 entries at 10% relative error, and an infeasible
    match returns the best effort with the feasible flag down rather than
    raising.
    """
    tables = [candidate, seed_reference]
    if holdout_reference is not None:
        tables.append(holdout_reference)
    names = _check_covariate_schemas(*tables)
    stats = distance_stats(seed_reference, names)
    R = encode_for_distance(seed_reference, names, stats)
    C = encode_for_distance(candidate, names, stats)
    distances = _min_distances(C, R, workers)
    survivors = np.flatnonzero(distances >= policy.floor)
    removed_floor = candidate.n_rows - survivors.size
    if survivors.size == 0:
        raise DataError(
            f"dcr_filter removed every row: no candidate DCR reaches the "
            f"floor {policy.floor!r}"
        )
    removed_match = 0
    feasible: bool | None = None
    target_quantiles = None
    kept_idx = survivors
    if policy.match_quantiles:
        if holdout_reference is None:
            raise ConfigError("match_quantiles needs a holdout_reference table")
        H = encode_for_distance(holdout_reference, names, stats)
        target = _min_distances(H, R, workers)
        target = target[target >= policy.floor]
        if target.size == 0:
            raise DataError(
                "dcr_filter has no target distribution: every holdout DCR "
                f"sits below the floor {policy.floor!r}"
            )
        target_quantiles = dcr_quantiles(target)
        picked = _decile_transport(distances[survivors], target)
        if picked.size == 0:
            feasible = False
        else:
            kept_idx = survivors[picked]
            removed_match = survivors.size - kept_idx.size
            got = dcr_quantiles(distances[kept_idx])
            feasible = all(
                abs(got[k] - target_quantiles[k]) <= 0.10 * max(abs(target_quantiles[k]), 1e-12)
                or (target_quantiles[k] == 0.0 and got[k] == 0.0)
                for k in ("q25", "median", "q75")
            )
    filtered = candidate.take(kept_idx)
    report = DcrFilterReport(
        n_candidate=candidate.n_rows,
        n_reference=seed_reference.n_rows,
        removed_floor=removed_floor,
        removed_match=removed_match,
        kept=kept_idx.size,
        quantiles=dcr_quantiles(distances[kept_idx]),
        comparison_quantiles=target_quantiles,
        quantile_match_feasible=feasible,
    )
    return filtered, report
