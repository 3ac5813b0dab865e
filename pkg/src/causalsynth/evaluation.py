"""Benchmarking harness: known-truth DGPs and estimator protocols.

The harness owns four things:

* parametric data-generating processes over binary covariates with
  logistic treatment and outcome laws (``DgpSpec``, two named presets),
* the exact ground-truth effect by full enumeration of the covariate
  space (``oracle_ate``),
* train-on-synthetic-test-on-real discrimination checks (``tstr``),
* the estimation protocols: a one-shot large-sample run
  (``large_sample_truth``) and the replicated bias/variance/mse
  benchmark (``replicate_benchmark``).

Every stochastic step seeds its own stream from (master seed, stream
tag, replicate index), so reports are byte-reproducible at any worker
count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, SchemaError
from .estimators import Estimate, PropensityOptions, aipw, iptw, substitution
from .models import ModelConfig, NuisanceModel, fit_model, predict_proba, auc
from .rng import derive_rng, derive_seed
from .tabular import ColumnSpec, Schema, Table

ORACLE_MAX_COVARIATES = 20
LARGE_SAMPLE_FLOOR = 1000
REPLICATE_FLOOR = 50
ESTIMATOR_NAMES = ("iptw", "aipw", "substitution")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticLaw:
    """A logistic model over the covariate vector."""

    intercept: float
    coefficients: tuple[float, ...]

    def probabilities(self, W: np.ndarray) -> np.ndarray:
        return _sigmoid(self.intercept + W @ np.asarray(self.coefficients))


@dataclass(frozen=True)
class OutcomeLaw:
    """A logistic outcome model with a treatment main effect.

    ``interactions`` optionally adds treatment-by-covariate terms.
    """

    intercept: float
    treatment: float
    coefficients: tuple[float, ...]
    interactions: tuple[float, ...] | None = None

    def probabilities(self, a: np.ndarray, W: np.ndarray) -> np.ndarray:
        z = self.intercept + self.treatment * a + W @ np.asarray(self.coefficients)
        if self.interactions is not None:
            z = z + a * (W @ np.asarray(self.interactions))
        return _sigmoid(z)


@dataclass(frozen=True)
class DgpSpec:
    """A fully known data-generating process over binary covariates.

    The covariate law is either independent Bernoulli marginals or a
    dependency chain of logistic conditionals (entry j conditions on
    covariates 0..j-1). Treatment follows ``propensity``; the outcome
    follows ``outcome`` given treatment and covariates.
    """

    covariate_names: tuple[str, ...]
    propensity: LogisticLaw
    outcome: OutcomeLaw
    marginals: tuple[float, ...] | None = None
    chain: tuple[LogisticLaw, ...] | None = None
    treatment_name: str = "A"
    outcome_name: str = "Y"

    def __post_init__(self) -> None:
        d = len(self.covariate_names)
        if d == 0:
            raise ConfigError("DgpSpec needs at least one covariate")
        if (self.marginals is None) == (self.chain is None):
            raise ConfigError("specify exactly one of marginals or chain")
        if self.marginals is not None:
            if len(self.marginals) != d:
                raise ConfigError(
                    f"{len(self.marginals)} marginals for {d} covariates"
                )
            if any(not 0.0 <= p <= 1.0 for p in self.marginals):
                raise ConfigError("marginal probabilities must lie in [0, 1]")
        else:
            if len(self.chain) != d:
                raise ConfigError(f"{len(self.chain)} chain laws for {d} covariates")
            for j, law in enumerate(self.chain):
                if len(law.coefficients) != j:
                    raise ConfigError(
                        f"chain law {j} needs {j} coefficients, got "
                        f"{len(law.coefficients)}"
                    )
        if len(self.propensity.coefficients) != d:
            raise ConfigError("propensity coefficient count must match covariates")
        if len(self.outcome.coefficients) != d:
            raise ConfigError("outcome coefficient count must match covariates")
        if self.outcome.interactions is not None and len(self.outcome.interactions) != d:
            raise ConfigError("interaction coefficient count must match covariates")

    @property
    def d(self) -> int:
        return len(self.covariate_names)

    def schema(self) -> Schema:
        cols = tuple(
            ColumnSpec(name=n, role="covariate", kind="binary")
            for n in self.covariate_names
        )
        cols += (
            ColumnSpec(name=self.treatment_name, role="treatment", kind="binary"),
            ColumnSpec(name=self.outcome_name, role="outcome", kind="binary"),
        )
        return Schema(cols)

    def covariate_probabilities(self, W: np.ndarray) -> np.ndarray:
        """P(W = w) for each row of a binary matrix ``W``."""
        if self.marginals is not None:
            p = np.asarray(self.marginals)
            return np.prod(np.where(W == 1, p, 1.0 - p), axis=1)
        probs = np.ones(W.shape[0])
        for j, law in enumerate(self.chain):
            pj = law.probabilities(W[:, :j])
            probs = probs * np.where(W[:, j] == 1, pj, 1.0 - pj)
        return probs

    def to_dict(self) -> dict:
        doc: dict = {
            "covariate_names": list(self.covariate_names),
            "treatment_name": self.treatment_name,
            "outcome_name": self.outcome_name,
            "propensity": {
                "intercept": self.propensity.intercept,
                "coefficients": list(self.propensity.coefficients),
            },
            "outcome": {
                "intercept": self.outcome.intercept,
                "treatment": self.outcome.treatment,
                "coefficients": list(self.outcome.coefficients),
            },
        }
        if self.outcome.interactions is not None:
            doc["outcome"]["interactions"] = list(self.outcome.interactions)
        if self.marginals is not None:
            doc["marginals"] = list(self.marginals)
        else:
            doc["chain"] = [
                {"intercept": law.intercept, "coefficients": list(law.coefficients)}
                for law in self.chain
            ]
        return doc


def dgp_from_dict(doc: dict) -> DgpSpec:
    try:
        outcome = doc["outcome"]
        spec = DgpSpec(
            covariate_names=tuple(doc["covariate_names"]),
            propensity=LogisticLaw(
                intercept=float(doc["propensity"]["intercept"]),
                coefficients=tuple(doc["propensity"]["coefficients"]),
            ),
            outcome=OutcomeLaw(
                intercept=float(outcome["intercept"]),
                treatment=float(outcome["treatment"]),
                coefficients=tuple(outcome["coefficients"]),
                interactions=(
                    tuple(outcome["interactions"])
                    if outcome.get("interactions") is not None
                    else None
                ),
            ),
            marginals=(
                tuple(doc["marginals"]) if doc.get("marginals") is not None else None
            ),
            chain=(
                tuple(
                    LogisticLaw(
                        intercept=float(law["intercept"]),
                        coefficients=tuple(law["coefficients"]),
                    )
                    for law in doc["chain"]
                )
                if doc.get("chain") is not None
                else None
            ),
            treatment_name=doc.get("treatment_name", "A"),
            outcome_name=doc.get("outcome_name", "Y"),
        )
    except KeyError as exc:
        raise ConfigError(f"DGP definition is missing key {exc}")
    return spec


def confounded_default() -> DgpSpec:
    """Six binary covariates, healthy overlap, confounding through W1-W3."""
    return DgpSpec(
        covariate_names=tuple(f"W{i}" for i in range(1, 7)),
        marginals=(0.5, 0.4, 0.6, 0.5, 0.3, 0.7),
        propensity=LogisticLaw(
            intercept=-0.4, coefficients=(0.8, -0.6, 0.5, 0.0, 0.0, 0.0)
        ),
        outcome=OutcomeLaw(
            intercept=-0.9,
            treatment=1.2,
            coefficients=(0.7, 0.6, -0.5, 0.4, 0.0, 0.0),
        ),
    )


def positivity_stress() -> DgpSpec:
    """Half the population sits far below the flagging threshold.

    W1 = 0 drives the treatment probability to the 1e-5 scale, so treated
    units essentially never appear there, while W1 = 1 keeps scores above
    0.02. The outcome law deliberately omits W1 so complementary-arm
    matches drawn at W1 = 1 still carry the right outcome distribution.
    """
    return DgpSpec(
        covariate_names=tuple(f"W{i}" for i in range(1, 7)),
        marginals=(0.5, 0.4, 0.6, 0.5, 0.3, 0.7),
        propensity=LogisticLaw(
            intercept=-14.0, coefficients=(10.5, 1.0, 0.8, 0.0, 0.0, 0.0)
        ),
        outcome=OutcomeLaw(
            intercept=-1.2,
            treatment=1.6,
            coefficients=(0.0, 0.9, 0.7, 0.5, 0.0, 0.0),
        ),
    )


PRESETS = {
    "confounded-default": confounded_default,
    "positivity-stress": positivity_stress,
}


def preset(name: str) -> DgpSpec:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        )
    return PRESETS[name]()


def simulate_dgp(spec: DgpSpec, n: int, seed: int) -> Table:
    """Draw ``n`` rows (covariates, treatment, outcome) from the DGP."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rng = derive_rng(seed, 0)
    d = spec.d
    if spec.marginals is not None:
        W = (rng.random((n, d)) < np.asarray(spec.marginals)).astype(np.float64)
    else:
        W = np.empty((n, d))
        for j, law in enumerate(spec.chain):
            pj = law.probabilities(W[:, :j])
            W[:, j] = (rng.random(n) < pj).astype(np.float64)
    a = (rng.random(n) < spec.propensity.probabilities(W)).astype(np.float64)
    y = (rng.random(n) < spec.outcome.probabilities(a, W)).astype(np.float64)
    return Table(spec.schema(), np.hstack([W, a[:, None], y[:, None]]))


def oracle_ate(spec: DgpSpec) -> float:
    """Exact ATE by enumerating the full binary covariate space."""
    d = spec.d
    if d > ORACLE_MAX_COVARIATES:
        raise NumericError(
            f"covariate space too large for exact enumeration: {d} covariates "
            f"(limit {ORACLE_MAX_COVARIATES})"
        )
    total = 0.0
    block = 1 << 16
    n_configs = 1 << d
    bits = np.arange(d)
    for start in range(0, n_configs, block):
        stop = min(start + block, n_configs)
        codes = np.arange(start, stop, dtype=np.int64)
        W = ((codes[:, None] >> bits[None, :]) & 1).astype(np.float64)
        weight = spec.covariate_probabilities(W)
        ones = np.ones(W.shape[0])
        zeros = np.zeros(W.shape[0])
        effect = spec.outcome.probabilities(ones, W) - spec.outcome.probabilities(
            zeros, W
        )
        total += float(np.sum(weight * effect))
    return total


@dataclass(frozen=True)
class TstrReport:
    """Discrimination transfer: AUC on one real test set per training source."""

    aucs: dict
    n_test: int
    model_kind: str

    def to_dict(self) -> dict:
        return {
            "aucs": dict(sorted(self.aucs.items())),
            "n_test": self.n_test,
            "model_kind": self.model_kind,
        }


def tstr(
    train: Table,
    real_test: Table,
    model_config: ModelConfig,
    seed: int,
    label: str = "synthetic",
) -> TstrReport:
    """Train an outcome classifier on ``train``, score AUC on ``real_test``.

    The classifier predicts the outcome from covariates plus treatment.
    Train on a synthetic table and compare against the same call on the
    real training split: matching AUCs mean the synthetic data carries
    the real predictive signal.
    """
    train.schema.require_full()
    real_test.schema.require_full()
    feature_names = list(train.schema.covariate_names) + [train.schema.treatment_name]
    model = fit_model(
        train.select(feature_names),
        train.column(train.schema.outcome_name),
        model_config,
        seed,
        role_tag="outcome",
    )
    test_features = real_test.select(
        list(real_test.schema.covariate_names) + [real_test.schema.treatment_name]
    )
    scores = predict_proba(model, test_features)
    value = auc(scores, real_test.column(real_test.schema.outcome_name))
    return TstrReport(
        aucs={label: value}, n_test=real_test.n_rows, model_kind=model_config.kind
    )


def tstr_compare(
    sources: dict[str, Table],
    real_test: Table,
    model_config: ModelConfig,
    seed: int,
) -> TstrReport:
    """Run ``tstr`` for several training sources against one test set."""
    if not sources:
        raise ConfigError("tstr_compare needs at least one training source")
    aucs: dict[str, float] = {}
    for idx, (label, train) in enumerate(sorted(sources.items())):
        report = tstr(train, real_test, model_config, derive_seed(seed, idx), label)
        aucs[label] = report.aucs[label]
    return TstrReport(
        aucs=aucs, n_test=real_test.n_rows, model_kind=model_config.kind
    )


def shuffle_outcome(table: Table, seed: int) -> Table:
    """Permute the outcome column, severing its link to everything else."""
    schema = table.schema.require_full()
    perm = derive_rng(seed, 0).permutation(table.n_rows)
    data = table.data.copy()
    j = schema.names.index(schema.outcome_name)
    data[:, j] = data[perm, j]
    return Table(schema, data)


def fit_nuisances(
    table: Table,
    propensity_config: ModelConfig,
    outcome_config: ModelConfig,
    seed: int,
    workers: int = 1,
) -> tuple[NuisanceModel, NuisanceModel]:
    """Fit the propensity and outcome models on one table."""
    schema = table.schema.require_full()
    cov = list(schema.covariate_names)
    g_model = fit_model(
        table.select(cov),
        table.column(schema.treatment_name),
        propensity_config,
        derive_seed(seed, 0),
        role_tag="propensity",
        workers=workers,
    )
    h_model = fit_model(
        table.select(cov + [schema.treatment_name]),
        table.column(schema.outcome_name),
        outcome_config,
        derive_seed(seed, 1),
        role_tag="outcome",
        workers=workers,
    )
    return g_model, h_model


def estimate_with_models(
    table: Table,
    estimator: str,
    g_model: NuisanceModel | None,
    h_model: NuisanceModel | None,
    options: PropensityOptions | None = None,
) -> Estimate:
    """Apply one estimator to a table given fitted nuisance models."""
    if estimator not in ESTIMATOR_NAMES:
        raise ConfigError(
            f"unknown estimator {estimator!r}; available: {list(ESTIMATOR_NAMES)}"
        )
    schema = table.schema.require_full()
    cov = list(schema.covariate_names)
    if g_model is not None and g_model.role_tag != "propensity":
        raise SchemaError(f"propensity slot got a model tagged {g_model.role_tag!r}")
    if h_model is not None and h_model.role_tag != "outcome":
        raise SchemaError(f"outcome slot got a model tagged {h_model.role_tag!r}")
    g_scores = None
    if estimator in ("iptw", "aipw"):
        if g_model is None:
            raise ConfigError(f"estimator {estimator!r} needs a propensity model")
        g_scores = predict_proba(g_model, table.select(cov))
    h1 = h0 = None
    if estimator in ("aipw", "substitution"):
        if h_model is None:
            raise ConfigError(f"estimator {estimator!r} needs an outcome model")
        base = table.select(cov + [schema.treatment_name])
        forced1 = Table(
            base.schema,
            np.hstack([table.select(cov).data, np.ones((table.n_rows, 1))]),
        )
        forced0 = Table(
            base.schema,
            np.hstack([table.select(cov).data, np.zeros((table.n_rows, 1))]),
        )
        h1 = predict_proba(h_model, forced1)
        h0 = predict_proba(h_model, forced0)
    if estimator == "iptw":
        return iptw(table, g_scores, options)
    if estimator == "aipw":
        return aipw(table, g_scores, h1, h0, options)
    return substitution(table, h1, h0)


def large_sample_truth(
    pipeline,
    estimator: str,
    N: int,
    propensity_config: ModelConfig,
    outcome_config: ModelConfig,
    seed: int,
    options: PropensityOptions | None = None,
    workers: int = 1,
) -> float:
    """One large-sample run of ``estimator`` on ``pipeline(N, seed)``.

    ``pipeline`` is any callable (n, seed) -> Table producing full
    tables; nuisances are fitted on the generated sample itself. N below
    1000 is refused, the protocol treats smaller runs as replicates.
    """
    if N < LARGE_SAMPLE_FLOOR:
        raise ConfigError(
            f"large_sample_truth needs N >= {LARGE_SAMPLE_FLOOR}, got {N}"
        )
    table = pipeline(N, derive_seed(seed, 0))
    g_model, h_model = fit_nuisances(
        table, propensity_config, outcome_config, derive_seed(seed, 1), workers
    )
    return estimate_with_models(table, estimator, g_model, h_model, options).value


@dataclass(frozen=True)
class EstimatorSummary:
    """Replication statistics for one estimator."""

    estimator: str
    estimates: tuple[float, ...]
    mean: float | None
    bias: float | None
    variance: float | None
    mse: float | None
    n_failed: int
    failures: tuple[tuple[int, str], ...]

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "estimates": list(self.estimates),
            "mean": self.mean,
            "bias": self.bias,
            "variance": self.variance,
            "mse": self.mse,
            "n_failed": self.n_failed,
            "incomplete": self.n_failed > 0,
            "failures": [
                {"replicate": r, "message": msg} for r, msg in self.failures
            ],
        }


@dataclass(frozen=True)
class BenchmarkReport:
    """Bias / variance / mse of each estimator against a large-sample anchor."""

    large_value: float
    truth_estimator: str
    summaries: dict
    config: dict

    def to_dict(self) -> dict:
        return {
            "large_value": self.large_value,
            "truth_estimator": self.truth_estimator,
            "estimators": {
                name: summary.to_dict()
                for name, summary in sorted(self.summaries.items())
            },
            "config": self.config,
        }

    def replicate_rows(self) -> list[dict]:
        """Flat per-replicate records (one per replicate and estimator)."""
        rows = []
        for name, summary in sorted(self.summaries.items()):
            failed = dict(summary.failures)
            success_iter = iter(summary.estimates)
            r_total = len(summary.estimates) + summary.n_failed
            for r in range(r_total):
                if r in failed:
                    rows.append(
                        {"replicate": r, "estimator": name, "value": None,
                         "error": failed[r]}
                    )
                else:
                    rows.append(
                        {"replicate": r, "estimator": name,
                         "value": next(success_iter), "error": None}
                    )
        return rows


def replicate_benchmark(
    pipeline,
    n: int,
    R: int,
    estimators: tuple[str, ...] | list[str],
    propensity_config: ModelConfig,
    outcome_config: ModelConfig,
    master_seed: int,
    N_large: int = 50000,
    truth_estimator: str = "aipw",
    options: PropensityOptions | None = None,
    workers: int = 1,
) -> BenchmarkReport:
    """Replicated estimation protocol against a large-sample anchor.

    Draws R independent tables of n rows from ``pipeline`` with seeds
    derived from (master_seed, replicate index), refits nuisances on each
    replicate, and summarizes every requested estimator as bias (mean
    minus the large-sample value), variance (R-1 denominator), and
    mse = bias**2 + variance. Numeric failures inside a replicate, in the
    nuisance refit or in an estimator, are recorded against that replicate
    and flag the summary incomplete instead of aborting the run.
    """
    if R < 2:
        raise ConfigError(f"R must be >= 2 for a variance, got {R}")
    if n < REPLICATE_FLOOR:
        raise ConfigError(
            f"replicate size n must be >= {REPLICATE_FLOOR}, got {n}"
        )
    estimators = tuple(estimators)
    if not estimators:
        raise ConfigError("estimators must be a non-empty list")
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            raise ConfigError(
                f"unknown estimator {name!r}; available: {list(ESTIMATOR_NAMES)}"
            )
    large_value = large_sample_truth(
        pipeline,
        truth_estimator,
        N_large,
        propensity_config,
        outcome_config,
        derive_seed(master_seed, 0),
        options,
        workers,
    )
    replicate_seeds = [derive_seed(master_seed, 1, r) for r in range(R)]

    def run_replicate(r: int) -> dict[str, float | Exception]:
        try:
            table = pipeline(n, replicate_seeds[r])
            g_model, h_model = fit_nuisances(
                table, propensity_config, outcome_config, derive_seed(master_seed, 2, r)
            )
        except NumericError as exc:
            return {name: exc for name in estimators}
        out: dict[str, float | Exception] = {}
        for name in estimators:
            try:
                out[name] = estimate_with_models(
                    table, name, g_model, h_model, options
                ).value
            except NumericError as exc:
                out[name] = exc
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_replicate, range(R)))
    else:
        results = [run_replicate(r) for r in range(R)]

    summaries: dict[str, EstimatorSummary] = {}
    for name in estimators:
        estimates: list[float] = []
        failures: list[tuple[int, str]] = []
        for r, result in enumerate(results):
            value = result[name]
            if isinstance(value, Exception):
                failures.append((r, str(value)))
            else:
                estimates.append(value)
        if len(estimates) >= 2:
            arr = np.asarray(estimates)
            mean = float(np.mean(arr))
            bias = mean - large_value
            variance = float(np.var(arr, ddof=1))
            mse = bias**2 + variance
        else:
            mean = bias = variance = mse = None
        summaries[name] = EstimatorSummary(
            estimator=name,
            estimates=tuple(estimates),
            mean=mean,
            bias=bias,
            variance=variance,
            mse=mse,
            n_failed=len(failures),
            failures=tuple(failures),
        )
    config = {
        "n": n,
        "R": R,
        "N_large": N_large,
        "master_seed": master_seed,
        "replicate_seeds": replicate_seeds,
        "estimators": list(estimators),
        "options": (options or PropensityOptions()).to_dict(),
        "propensity_config": propensity_config.to_dict(),
        "outcome_config": outcome_config.to_dict(),
    }
    return BenchmarkReport(
        large_value=large_value,
        truth_estimator=truth_estimator,
        summaries=summaries,
        config=config,
    )
