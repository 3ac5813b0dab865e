"""Detection and repair of positivity violations.

Rows whose estimated propensity score falls below the sample-size-driven
threshold tau(n) = 1 / (sqrt(n) * ln n) rarely or never appear in the
treated arm, which starves weighting estimators of support. The repair
appends, for each flagged row, its nearest synthetic neighbor from the
complementary treatment arm (treated counterparts for low scores,
control counterparts for high scores), measured by Euclidean distance
over the shared covariate encoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoding import distance_stats, encode_for_distance
from .errors import ConfigError, NumericError, PositivityError, SchemaError
from .tabular import Table, concat_tables

MIN_THRESHOLD_N = 8
TAILS = ("both", "low", "high")


def extreme_threshold(n: int) -> float:
    """The propensity flagging threshold 1 / (sqrt(n) * ln n).

    Requires n >= 8; below that the expression stops being a probability
    (it exceeds 1/2 already at n = 3).
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ConfigError(f"n must be an integer, got {n!r}")
    if n < MIN_THRESHOLD_N:
        raise ConfigError(
            f"extreme_threshold needs n >= {MIN_THRESHOLD_N}, got {n}"
        )
    return 1.0 / (math.sqrt(n) * math.log(n))


@dataclass(frozen=True)
class ExtremeFlagSet:
    """Per-row positivity flags: 'low', 'high', or 'none'."""

    threshold: float
    tails: str
    flags: np.ndarray

    @property
    def n_low(self) -> int:
        return int(np.sum(self.flags == "low"))

    @property
    def n_high(self) -> int:
        return int(np.sum(self.flags == "high"))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "tails": self.tails,
            "n_low": self.n_low,
            "n_high": self.n_high,
            "flagged_rows": [
                {"row": int(i), "tail": str(self.flags[i])}
                for i in np.flatnonzero(self.flags != "none")
            ],
        }


def flag_extreme(g_scores: np.ndarray, threshold: float, tails: str = "both") -> ExtremeFlagSet:
    """Flag rows with scores below ``threshold`` or above ``1 - threshold``.

    ``tails`` selects which side is checked: "both" (default), "low"
    (scores under the threshold only), or "high".
    """
    if tails not in TAILS:
        raise ConfigError(f"tails must be one of {TAILS}, got {tails!r}")
    if not 0.0 < threshold < 0.5:
        raise ConfigError(f"threshold must lie in (0, 0.5), got {threshold}")
    g = np.asarray(g_scores, dtype=np.float64)
    if not np.isfinite(g).all() or (g < 0).any() or (g > 1).any():
        raise NumericError("propensity scores must lie in [0, 1]")
    flags = np.full(g.shape, "none", dtype="<U4")
    if tails in ("both", "low"):
        flags[g < threshold] = "low"
    if tails in ("both", "high"):
        flags[g > 1.0 - threshold] = "high"
    return ExtremeFlagSet(threshold=float(threshold), tails=tails, flags=flags)


@dataclass(frozen=True)
class PairMatch:
    """One appended counterpart: which row it repairs and where it came from."""

    source_row: int
    pool_row: int
    distance: float
    tail: str
    matched_treatment: int

    def to_dict(self) -> dict:
        return {
            "source_row": self.source_row,
            "pool_row": self.pool_row,
            "distance": self.distance,
            "tail": self.tail,
            "matched_treatment": self.matched_treatment,
        }


@dataclass(frozen=True)
class PairingPlan:
    matches: tuple[PairMatch, ...]

    def to_dict(self) -> dict:
        return {"matches": [m.to_dict() for m in self.matches]}


def pair_augment(
    table: Table, synthetic_pool: Table, flags: ExtremeFlagSet
) -> tuple[Table, PairingPlan]:
    """Append complementary-arm synthetic counterparts for flagged rows.

    For each row flagged 'low' the nearest treated pool row is appended;
    for 'high', the nearest control pool row. Distance is Euclidean over
    the shared covariate encoding with continuous columns standardized by
    the original table's statistics. Ties resolve to the lowest pool row
    index. The same pool row may serve several flagged rows.

    Raises PositivityError if a needed arm is missing from the pool.
    """
    schema = table.schema.require_full()
    synthetic_pool.schema.require_full()
    if synthetic_pool.schema.covariate_schema() != schema.covariate_schema():
        raise SchemaError("pool and table do not share a covariate schema")
    if flags.flags.shape[0] != table.n_rows:
        raise PositivityError(
            f"flag set covers {flags.flags.shape[0]} rows, table has {table.n_rows}"
        )
    names = schema.covariate_names
    stats = distance_stats(table, names)
    pool_a = synthetic_pool.column(synthetic_pool.schema.treatment_name)
    encoded_table = encode_for_distance(table, names, stats)
    encoded_pool = encode_for_distance(synthetic_pool, names, stats)
    matches: list[PairMatch] = []
    for tail, arm in (("low", 1), ("high", 0)):
        flagged = np.flatnonzero(flags.flags == tail)
        if flagged.size == 0:
            continue
        arm_rows = np.flatnonzero(pool_a == arm)
        if arm_rows.size == 0:
            raise PositivityError(
                f"synthetic pool has no treatment={arm} rows to repair the "
                f"{tail} tail"
            )
        arm_encoded = encoded_pool[arm_rows]
        diff = encoded_table[flagged, None, :] - arm_encoded[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        best = np.argmin(dist, axis=1)  # first minimum: lowest pool index
        for i, row in enumerate(flagged):
            matches.append(
                PairMatch(
                    source_row=int(row),
                    pool_row=int(arm_rows[best[i]]),
                    distance=float(dist[i, best[i]]),
                    tail=tail,
                    matched_treatment=arm,
                )
            )
    if not matches:
        return table, PairingPlan(matches=())
    matches.sort(key=lambda m: m.source_row)
    appended = synthetic_pool.select(list(schema.names)).take(
        np.array([m.pool_row for m in matches], dtype=np.intp)
    )
    augmented = concat_tables(table, appended)
    return augmented, PairingPlan(matches=tuple(matches))
