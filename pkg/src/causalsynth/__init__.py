"""Causal-structure-preserving synthetic tabular data tools.

The package covers the full loop: model a seed dataset's covariates,
regenerate treatment and outcome through fitted nuisance models so the
causal signal survives, audit the synthetic rows for closeness to the
source, repair positivity violations by pairing starved rows with
complementary-arm synthetic counterparts, and benchmark ATE estimators
against exactly known ground truth.
"""

from .encoding import encode_features
from .errors import (
    CausalSynthError,
    ConfigError,
    DataError,
    DegenerateFitError,
    EstimationError,
    NumericError,
    PositivityError,
    SchemaError,
)
from .estimators import Estimate, PropensityOptions, aipw, iptw, substitution
from .evaluation import (
    BenchmarkReport,
    DgpSpec,
    LogisticLaw,
    OutcomeLaw,
    TstrReport,
    confounded_default,
    estimate_with_models,
    fit_nuisances,
    large_sample_truth,
    oracle_ate,
    positivity_stress,
    preset,
    replicate_benchmark,
    shuffle_outcome,
    simulate_dgp,
    tstr,
    tstr_compare,
)
from .generators import (
    DcrFilterReport,
    DcrReport,
    FilterPolicy,
    FittedGenerator,
    GeneratorSpec,
    dcr_filter,
    dcr_report,
    fit_generator,
    fit_joint_generator,
    import_external_covariates,
    load_generator,
    sample_covariates,
    save_generator,
)
from .hybrid import HybridConfig, hybrid_generate, joint_generate
from .models import (
    ModelConfig,
    NuisanceModel,
    auc,
    fit_model,
    load_model,
    predict_proba,
    save_model,
)
from .positivity import (
    ExtremeFlagSet,
    PairingPlan,
    extreme_threshold,
    flag_extreme,
    pair_augment,
)
from .rng import derive_rng, derive_seed
from .tabular import (
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

__version__ = "0.1.0"

__all__ = [
    "BenchmarkReport",
    "CausalSynthError",
    "ColumnSpec",
    "ConfigError",
    "DataError",
    "DcrFilterReport",
    "DcrReport",
    "DegenerateFitError",
    "DgpSpec",
    "Estimate",
    "EstimationError",
    "ExtremeFlagSet",
    "FilterPolicy",
    "FittedGenerator",
    "GeneratorSpec",
    "HybridConfig",
    "LogisticLaw",
    "ModelConfig",
    "NuisanceModel",
    "NumericError",
    "OutcomeLaw",
    "PairingPlan",
    "PositivityError",
    "PropensityOptions",
    "Schema",
    "SchemaError",
    "Table",
    "TstrReport",
    "aipw",
    "auc",
    "concat_tables",
    "confounded_default",
    "dcr_filter",
    "dcr_report",
    "derive_rng",
    "derive_seed",
    "encode_features",
    "estimate_with_models",
    "extreme_threshold",
    "fit_generator",
    "fit_joint_generator",
    "fit_model",
    "fit_nuisances",
    "flag_extreme",
    "hybrid_generate",
    "import_external_covariates",
    "iptw",
    "joint_generate",
    "large_sample_truth",
    "load_generator",
    "load_model",
    "load_schema",
    "load_table",
    "oracle_ate",
    "pair_augment",
    "positivity_stress",
    "predict_proba",
    "preset",
    "replicate_benchmark",
    "sample_covariates",
    "save_generator",
    "save_model",
    "save_schema",
    "shuffle_outcome",
    "simulate_dgp",
    "split_table",
    "substitution",
    "tstr",
    "tstr_compare",
    "write_table",
]
