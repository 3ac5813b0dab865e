"""Average treatment effect estimators.

All three estimators target E[Y(1)] - E[Y(0)] on a table with binary
treatment A and binary outcome Y, given externally fitted nuisance
predictions:

* ``iptw``: Horvitz-Thompson weighting,
  (1/n) sum_i [ A_i Y_i / g_i - (1 - A_i) Y_i / (1 - g_i) ].
* ``aipw``: the doubly robust augmented estimator,
  (1/n) sum_i [ h1_i - h0_i + A_i (Y_i - h1_i) / g_i
                - (1 - A_i) (Y_i - h0_i) / (1 - g_i) ].
* ``substitution``: the plug-in mean of h1 - h0.

``PropensityOptions`` controls score handling: optional clamping of the
scores into [eps, 1 - eps] before use, and a stabilized variant that
normalizes weights within each treatment arm. When every outcome-model
residual is exactly zero, aipw degenerates to substitution bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationError
from .tabular import Table

TRUNCATION_DEFAULT = 0.01


@dataclass(frozen=True)
class PropensityOptions:
    """Score handling for the weighting estimators.

    Args:
        truncation: clamp propensity scores into [eps, 1 - eps] before
            weighting; ``None`` disables clamping (the default). Use
            ``TRUNCATION_DEFAULT`` (0.01) for the conventional setting.
        stabilized: normalize weights within each treatment arm
            (the Hajek form) instead of dividing by n.
    """

    truncation: float | None = None
    stabilized: bool = False

    def __post_init__(self) -> None:
        if self.truncation is not None and not 0.0 < self.truncation < 0.5:
            raise ConfigError(
                f"truncation must lie in (0, 0.5), got {self.truncation}"
            )

    def to_dict(self) -> dict:
        return {"truncation": self.truncation, "stabilized": self.stabilized}


@dataclass(frozen=True)
class Estimate:
    """An ATE point estimate with weighting diagnostics."""

    value: float
    estimator: str
    n: int
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "estimator": self.estimator,
            "n": self.n,
            "diagnostics": self.diagnostics,
        }


def _arm_arrays(table: Table) -> tuple[np.ndarray, np.ndarray]:
    schema = table.schema.require_full()
    return table.column(schema.treatment_name), table.column(schema.outcome_name)


def _prepare_scores(
    g_scores: np.ndarray, a: np.ndarray, options: PropensityOptions
) -> tuple[np.ndarray, int]:
    g = np.asarray(g_scores, dtype=np.float64)
    if g.shape != a.shape:
        raise EstimationError(
            f"propensity scores have shape {g.shape}, expected {a.shape}"
        )
    if not np.isfinite(g).all() or (g < 0).any() or (g > 1).any():
        bad = int(np.argmax(~(np.isfinite(g) & (g >= 0) & (g <= 1))))
        raise EstimationError(
            f"row {bad + 1}: propensity score {g[bad]!r} outside [0, 1]"
        )
    truncated_count = 0
    if options.truncation is not None:
        eps = options.truncation
        clamped = np.clip(g, eps, 1.0 - eps)
        truncated_count = int(np.sum(clamped != g))
        g = clamped
    treated_zero = (a == 1) & (g == 0.0)
    if treated_zero.any():
        row = int(np.argmax(treated_zero)) + 1
        raise EstimationError(
            f"row {row}: treated unit with propensity score exactly 0"
        )
    control_one = (a == 0) & (g == 1.0)
    if control_one.any():
        row = int(np.argmax(control_one)) + 1
        raise EstimationError(
            f"row {row}: control unit with propensity score exactly 1"
        )
    return g, truncated_count


def _weights(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    w = np.empty_like(g)
    treated = a == 1
    w[treated] = 1.0 / g[treated]
    w[~treated] = 1.0 / (1.0 - g[~treated])
    return w


def _diagnostics(w: np.ndarray, truncated_count: int) -> dict:
    return {
        "max_weight": float(np.max(w)),
        "effective_sample_size": float(np.sum(w) ** 2 / np.sum(w**2)),
        "truncated_count": truncated_count,
    }


def iptw(table: Table, g_scores: np.ndarray, options: PropensityOptions | None = None) -> Estimate:
    """Inverse probability of treatment weighting estimate of the ATE."""
    options = options or PropensityOptions()
    a, y = _arm_arrays(table)
    g, truncated_count = _prepare_scores(g_scores, a, options)
    n = table.n_rows
    treated = a == 1
    w = _weights(a, g)
    if options.stabilized:
        if not treated.any() or treated.all():
            raise EstimationError("stabilized weighting needs both arms non-empty")
        t_sum = float(np.sum(w[treated]))
        c_sum = float(np.sum(w[~treated]))
        value = float(
            np.sum(w[treated] * y[treated]) / t_sum
            - np.sum(w[~treated] * y[~treated]) / c_sum
        )
    else:
        signed = np.where(treated, w * y, -(w * y))
        value = float(np.mean(signed))
    return Estimate(
        value=value,
        estimator="iptw",
        n=n,
        diagnostics=_diagnostics(w, truncated_count),
    )


def aipw(
    table: Table,
    g_scores: np.ndarray,
    h1: np.ndarray,
    h0: np.ndarray,
    options: PropensityOptions | None = None,
) -> Estimate:
    """Augmented IPTW (doubly robust) estimate of the ATE.

    ``h1`` and ``h0`` are outcome-model predictions with treatment forced
    to 1 and 0. With all residuals exactly zero the per-row contributions
    reduce to ``h1 - h0`` and the estimate equals ``substitution`` bit
    for bit.
    """
    options = options or PropensityOptions()
    a, y = _arm_arrays(table)
    h1 = np.asarray(h1, dtype=np.float64)
    h0 = np.asarray(h0, dtype=np.float64)
    if h1.shape != a.shape or h0.shape != a.shape:
        raise EstimationError("outcome predictions must align with the table rows")
    g, truncated_count = _prepare_scores(g_scores, a, options)
    treated = a == 1
    w = _weights(a, g)
    contrib = h1 - h0
    if options.stabilized:
        if not treated.any() or treated.all():
            raise EstimationError("stabilized weighting needs both arms non-empty")
        t_sum = float(np.sum(w[treated]))
        c_sum = float(np.sum(w[~treated]))
        value = float(
            np.mean(contrib)
            + np.sum(w[treated] * (y[treated] - h1[treated])) / t_sum
            - np.sum(w[~treated] * (y[~treated] - h0[~treated])) / c_sum
        )
    else:
        contrib = contrib.copy()
        contrib[treated] += (y[treated] - h1[treated]) * w[treated]
        contrib[~treated] -= (y[~treated] - h0[~treated]) * w[~treated]
        value = float(np.mean(contrib))
    return Estimate(
        value=value,
        estimator="aipw",
        n=table.n_rows,
        diagnostics=_diagnostics(w, truncated_count),
    )


def substitution(table: Table, h1: np.ndarray, h0: np.ndarray) -> Estimate:
    """Plug-in (g-computation) estimate: the mean of h1 - h0."""
    a, _ = _arm_arrays(table)
    h1 = np.asarray(h1, dtype=np.float64)
    h0 = np.asarray(h0, dtype=np.float64)
    if h1.shape != a.shape or h0.shape != a.shape:
        raise EstimationError("outcome predictions must align with the table rows")
    value = float(np.mean(h1 - h0))
    n = table.n_rows
    return Estimate(
        value=value,
        estimator="substitution",
        n=n,
        diagnostics={
            "max_weight": 1.0,
            "effective_sample_size": float(n),
            "truncated_count": 0,
        },
    )
