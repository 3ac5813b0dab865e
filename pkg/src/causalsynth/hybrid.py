"""Synthetic data generation that preserves the treatment-outcome link.

The hybrid scheme samples only covariates from a generative model and
rebuilds treatment and outcome through the fitted nuisance models:

1. draw covariate rows from the fitted generator,
2. score them with the propensity model and assign treatment by
   comparing one uniform per row against the score (u < g means treated),
3. score the outcome model with the assigned treatment and draw the
   outcome per ``outcome_mode``: "bernoulli-sample" draws one uniform
   per row against h(A, W); "threshold-0.5" deterministically emits
   1 when h >= 0.5.

Covariate, treatment, and outcome draws consume three separate streams
derived from the run seed, each in row order, so output is reproducible.

``joint_generate`` is the deliberately naive baseline: it samples every
column, treatment and outcome included, from one joint generator fitted
with the causal roles ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError
from .generators import FittedGenerator, sample_covariates
from .models import NuisanceModel, predict_proba
from .rng import derive_rng
from .tabular import Schema, Table

OUTCOME_MODES = ("bernoulli-sample", "threshold-0.5")


@dataclass(frozen=True)
class HybridConfig:
    """Size, outcome handling, and seed for one hybrid generation run."""

    n: int
    seed: int
    outcome_mode: str = "bernoulli-sample"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.outcome_mode not in OUTCOME_MODES:
            raise ConfigError(
                f"outcome_mode must be one of {OUTCOME_MODES}, got {self.outcome_mode!r}"
            )

    def to_dict(self) -> dict:
        return {"n": self.n, "seed": self.seed, "outcome_mode": self.outcome_mode}


def _check_models(
    gen: FittedGenerator,
    g_model: NuisanceModel,
    h_model: NuisanceModel,
    schema: Schema,
) -> None:
    if g_model.role_tag != "propensity":
        raise SchemaError(
            f"propensity slot got a model tagged {g_model.role_tag!r}"
        )
    if h_model.role_tag != "outcome":
        raise SchemaError(f"outcome slot got a model tagged {h_model.role_tag!r}")
    cov_names = schema.covariate_names
    if tuple(gen.schema.names) != cov_names:
        raise SchemaError(
            f"generator models columns {list(gen.schema.names)}, schema "
            f"covariates are {list(cov_names)}"
        )
    if g_model.input_columns != cov_names:
        raise SchemaError(
            f"propensity model inputs {list(g_model.input_columns)} do not "
            f"match the covariates {list(cov_names)}"
        )
    expected_h = cov_names + (schema.treatment_name,)
    if h_model.input_columns != expected_h:
        raise SchemaError(
            f"outcome model inputs {list(h_model.input_columns)} do not match "
            f"covariates plus treatment {list(expected_h)}"
        )


def hybrid_generate(
    gen: FittedGenerator,
    g_model: NuisanceModel,
    h_model: NuisanceModel,
    config: HybridConfig,
    schema: Schema,
) -> Table:
    """Generate a full synthetic table with modeled causal structure.

    ``schema`` is the full layout of the source data (covariates,
    treatment, outcome); the output table uses it verbatim.
    """
    schema.require_full()
    _check_models(gen, g_model, h_model, schema)
    n = config.n
    covariates = sample_covariates(gen, n, config.seed)
    g_hat = predict_proba(g_model, covariates)
    u_treat = derive_rng(config.seed, 1).random(n)
    a = (u_treat < g_hat).astype(np.float64)

    treat_spec = schema.column(schema.treatment_name)
    h_features = Table(
        Schema(covariates.schema.columns + (treat_spec,)),
        np.hstack([covariates.data, a[:, None]]),
    )
    h_hat = predict_proba(h_model, h_features)
    if config.outcome_mode == "bernoulli-sample":
        u_out = derive_rng(config.seed, 2).random(n)
        y = (u_out < h_hat).astype(np.float64)
    else:
        y = (h_hat >= 0.5).astype(np.float64)

    columns = {name: covariates.column(name) for name in covariates.schema.names}
    columns[schema.treatment_name] = a
    columns[schema.outcome_name] = y
    data = np.column_stack([columns[name] for name in schema.names])
    return Table(schema, data)


def joint_generate(joint_gen: FittedGenerator, n: int, seed: int) -> Table:
    """Sample a full table from a joint generator (causal roles ignored).

    The generator must have been fitted on a full table via
    ``fit_joint_generator``; an independent-mode joint generator severs
    the treatment-outcome dependence by construction, which is the point
    of the baseline.
    """
    if not joint_gen.schema.is_full:
        raise SchemaError(
            "joint_generate needs a generator fitted on a full table "
            "(treatment and outcome included)"
        )
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return sample_covariates(joint_gen, n, seed)
