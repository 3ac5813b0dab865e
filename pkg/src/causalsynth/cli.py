"""Command line surface.

Every subcommand is driven by one JSON config file; individual keys can
be overridden on the command line with repeated ``--set key.path=value``
flags. Runs that write files also write a JSON manifest recording the
resolved config, its hash, the seed, and the output paths; the manifest
is the only place a timestamp appears, so report files are byte-stable
for a fixed config and seed regardless of worker count.

Exit codes: 0 success, 2 configuration error, 3 data or schema error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, NumericError, SchemaError
from .estimators import PropensityOptions
from .evaluation import (
    dgp_from_dict,
    estimate_with_models,
    fit_nuisances,
    large_sample_truth,
    oracle_ate,
    preset,
    replicate_benchmark,
    simulate_dgp,
    tstr_compare,
)
from .generators import (
    FilterPolicy,
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
from .models import ModelConfig, fit_model, load_model, predict_proba, save_model
from .positivity import extreme_threshold, flag_extreme, pair_augment
from .rng import check_seed, derive_seed
from .tabular import load_schema, load_table, write_table

WORKERS_ENV = "CAUSALSYNTH_WORKERS"


def _canonical_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_json(doc, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(_canonical_json(doc), encoding="utf-8")
    return path


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _require(config: dict, key: str):
    if key not in config:
        raise ConfigError(f"config key {key!r} is required")
    return config[key]


def _require_int(config: dict, key: str) -> int:
    value = _require(config, key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
    return value


def _in_path(config: dict, key: str) -> str:
    """An input path from the config; the file must already exist."""
    value = _require(config, key)
    if not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a path string, got {value!r}")
    if not Path(value).exists():
        raise ConfigError(f"config key {key!r} names a missing file: {value}")
    return value


def _in_path_opt(config: dict, key: str) -> str | None:
    if config.get(key) is None:
        return None
    return _in_path(config, key)


def _optional_int(config: dict, key: str, default: int) -> int:
    if key not in config:
        return default
    return _require_int(config, key)


def _seed(config: dict, key: str = "seed") -> int:
    return check_seed(_require_int(config, key))


def _workers(config: dict) -> int:
    if "workers" in config:
        value = _require_int(config, "workers")
    else:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer")
    if value < 1:
        raise ConfigError(f"workers must be >= 1, got {value}")
    return value


def _model_config(doc: dict | None, where: str) -> ModelConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config key {where!r} must be an object")
    allowed = {
        "kind", "ridge", "max_iter", "tol",
        "tree_count", "max_depth", "min_leaf", "features_per_split",
    }
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"config key {where!r} has unknown entries {sorted(extra)}")
    return ModelConfig(**doc)


def _generator_spec(doc: dict | None, where: str):
    from .generators import GeneratorSpec

    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config key {where!r} must be an object")
    allowed = {"mode", "order_policy", "smoothing", "continuous_bins"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"config key {where!r} has unknown entries {sorted(extra)}")
    return GeneratorSpec(**doc)


def _options(doc: dict | None) -> PropensityOptions:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config key 'options' must be an object")
    allowed = {"truncation", "stabilized"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"config key 'options' has unknown entries {sorted(extra)}")
    return PropensityOptions(**doc)


def _dgp(config: dict):
    doc = _require(config, "dgp")
    if isinstance(doc, str):
        return preset(doc)
    if isinstance(doc, dict):
        return dgp_from_dict(doc)
    raise ConfigError("config key 'dgp' must be a preset name or an object")


def _print_value(label: str, value: float) -> None:
    print(f"{label}: {value:.6f}")


# ---------------------------------------------------------------------------
# Subcommand handlers. Each returns a list of written output paths.
# ---------------------------------------------------------------------------


def _cmd_fit_gen(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema"))
    table = load_table(_in_path(config, "data"), schema)
    spec = _generator_spec(config.get("generator"), "generator")
    seed = _seed(config)
    if config.get("joint", False):
        gen = fit_joint_generator(table, spec, seed)
    else:
        gen = fit_generator(table.covariates(), spec, seed)
    out = Path(_require(config, "out_model"))
    save_generator(gen, out)
    print(f"fitted {spec.mode} generator over {len(gen.schema.columns)} columns -> {out}")
    return [out]


def _cmd_sample(config: dict) -> list[Path]:
    gen = load_generator(_in_path(config, "generator_model"))
    m = _require_int(config, "m")
    table = sample_covariates(gen, m, _seed(config))
    out = Path(_require(config, "out_data"))
    write_table(table, out)
    print(f"sampled {m} rows -> {out}")
    return [out]


def _cmd_import(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema"))
    table = import_external_covariates(_in_path(config, "data"), schema)
    out = Path(_require(config, "out_data"))
    write_table(table, out)
    print(f"imported {table.n_rows} covariate rows -> {out}")
    return [out]


def _cmd_dcr(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema"))
    candidate = load_table(_in_path(config, "candidate"), schema)
    reference = load_table(_in_path(config, "reference"), schema)
    workers = _workers(config)
    outputs: list[Path] = []
    if "filter" in config:
        fdoc = config["filter"]
        if not isinstance(fdoc, dict):
            raise ConfigError("config key 'filter' must be an object")
        allowed = {"floor", "match_quantiles", "holdout"}
        extra = set(fdoc) - allowed
        if extra:
            raise ConfigError(f"config key 'filter' has unknown entries {sorted(extra)}")
        policy_kwargs = {}
        if "floor" in fdoc:
            policy_kwargs["floor"] = float(fdoc["floor"])
        if "match_quantiles" in fdoc:
            policy_kwargs["match_quantiles"] = bool(fdoc["match_quantiles"])
        policy = FilterPolicy(**policy_kwargs)
        holdout = None
        if fdoc.get("holdout") is not None:
            holdout = load_table(_in_path(fdoc, "holdout"), schema)
        filtered, report = dcr_filter(candidate, reference, holdout, policy, workers)
        out_data = Path(_require(config, "out_data"))
        write_table(filtered, out_data)
        outputs.append(out_data)
        doc = report.to_dict()
        print(
            f"dcr filter kept {report.kept} of {report.n_candidate} rows "
            f"(removed {report.removed_count}) -> {out_data}"
        )
    else:
        comparison = None
        if config.get("comparison") is not None:
            comparison = load_table(_in_path(config, "comparison"), schema)
        report = dcr_report(candidate, reference, comparison, workers)
        doc = report.to_dict()
        print(
            f"dcr over {report.n_candidate} candidate rows: "
            f"median {report.quantiles['median']:.6f}, min {report.quantiles['min']:.6f}"
        )
    if config.get("out_report"):
        outputs.append(_write_json(doc, config["out_report"]))
    return outputs


def _cmd_fit_nuisance(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema")).require_full()
    table = load_table(_in_path(config, "data"), schema)
    role = _require(config, "role")
    if role not in ("propensity", "outcome"):
        raise ConfigError(f"config key 'role' must be propensity or outcome, got {role!r}")
    model_config = _model_config(config.get("model"), "model")
    cov = list(schema.covariate_names)
    if role == "propensity":
        features = table.select(cov)
        labels = table.column(schema.treatment_name)
    else:
        features = table.select(cov + [schema.treatment_name])
        labels = table.column(schema.outcome_name)
    model = fit_model(
        features, labels, model_config, _seed(config),
        role_tag=role, workers=_workers(config),
    )
    out = Path(_require(config, "out_model"))
    save_model(model, out)
    if model.kind == "logistic":
        state = "converged" if model.params["converged"] else "hit max_iter"
        print(f"fitted logistic {role} model ({state}) -> {out}")
    else:
        print(f"fitted forest {role} model ({model_config.tree_count} trees) -> {out}")
    return [out]


def _cmd_hybrid(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema")).require_full()
    gen = load_generator(_in_path(config, "generator_model"))
    g_model = load_model(_in_path(config, "propensity_model"))
    h_model = load_model(_in_path(config, "outcome_model"))
    run = HybridConfig(
        n=_require_int(config, "n"),
        seed=_seed(config),
        outcome_mode=config.get("outcome_mode", "bernoulli-sample"),
    )
    table = hybrid_generate(gen, g_model, h_model, run, schema)
    out = Path(_require(config, "out_data"))
    write_table(table, out)
    print(f"hybrid generated {run.n} rows -> {out}")
    return [out]


def _cmd_joint(config: dict) -> list[Path]:
    gen = load_generator(_in_path(config, "generator_model"))
    table = joint_generate(gen, _require_int(config, "n"), _seed(config))
    out = Path(_require(config, "out_data"))
    write_table(table, out)
    print(f"joint generated {table.n_rows} rows -> {out}")
    return [out]


def _cmd_estimate(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema")).require_full()
    table = load_table(_in_path(config, "data"), schema)
    estimator = _require(config, "estimator")
    g_path = _in_path_opt(config, "propensity_model")
    h_path = _in_path_opt(config, "outcome_model")
    g_model = load_model(g_path) if g_path else None
    h_model = load_model(h_path) if h_path else None
    options = _options(config.get("options"))
    estimate = estimate_with_models(table, estimator, g_model, h_model, options)
    _print_value(f"{estimator} estimate", estimate.value)
    diag = estimate.diagnostics
    print(
        f"n={estimate.n} max_weight={diag['max_weight']:.6f} "
        f"ess={diag['effective_sample_size']:.1f} truncated={diag['truncated_count']}"
    )
    outputs: list[Path] = []
    if config.get("out_report"):
        outputs.append(_write_json(estimate.to_dict(), config["out_report"]))
    return outputs


def _cmd_positivity(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema")).require_full()
    table = load_table(_in_path(config, "data"), schema)
    pool = load_table(_in_path(config, "pool"), schema)
    if config.get("propensity_model"):
        g_model = load_model(_in_path(config, "propensity_model"))
    else:
        g_model, _ = (
            fit_nuisances(
                table,
                _model_config(config.get("model"), "model"),
                _model_config(config.get("model"), "model"),
                _seed(config),
            )
        )
    g_scores = predict_proba(g_model, table.covariates())
    threshold_key = config.get("threshold", "auto")
    if threshold_key == "auto":
        threshold = extreme_threshold(table.n_rows)
    else:
        threshold = float(threshold_key)
    flags = flag_extreme(g_scores, threshold, config.get("tails", "both"))
    augmented, plan = pair_augment(table, pool, flags)
    out = Path(_require(config, "out_data"))
    write_table(augmented, out)
    print(
        f"flagged {flags.n_low} low / {flags.n_high} high at threshold "
        f"{threshold:.6f}; appended {len(plan.matches)} rows -> {out}"
    )
    outputs = [out]
    if config.get("out_plan"):
        doc = {"flags": flags.to_dict(), "plan": plan.to_dict()}
        outputs.append(_write_json(doc, config["out_plan"]))
    return outputs


def _cmd_tstr(config: dict) -> list[Path]:
    schema = load_schema(_in_path(config, "schema")).require_full()
    train_doc = _require(config, "train")
    if isinstance(train_doc, str):
        sources = {"synthetic": load_table(_in_path(config, "train"), schema)}
    elif isinstance(train_doc, dict):
        sources = {label: load_table(_in_path(train_doc, label), schema) for label in train_doc}
    else:
        raise ConfigError("config key 'train' must be a path or a label->path object")
    test = load_table(_in_path(config, "test"), schema)
    report = tstr_compare(
        sources, test, _model_config(config.get("model"), "model"), _seed(config)
    )
    for label, value in sorted(report.aucs.items()):
        _print_value(f"tstr auc [{label}]", value)
    outputs: list[Path] = []
    if config.get("out_report"):
        outputs.append(_write_json(report.to_dict(), config["out_report"]))
    return outputs


def _cmd_simulate(config: dict) -> list[Path]:
    spec = _dgp(config)
    table = simulate_dgp(spec, _require_int(config, "n"), _seed(config))
    out = Path(_require(config, "out_data"))
    write_table(table, out)
    print(f"simulated {table.n_rows} rows -> {out}")
    return [out]


def _cmd_oracle(config: dict) -> list[Path]:
    spec = _dgp(config)
    value = oracle_ate(spec)
    _print_value("oracle ate", value)
    outputs: list[Path] = []
    if config.get("out_report"):
        doc = {"oracle_ate": value, "dgp": spec.to_dict()}
        outputs.append(_write_json(doc, config["out_report"]))
    return outputs


def _build_pipeline(config: dict, workers: int):
    doc = _require(config, "pipeline")
    if not isinstance(doc, dict) or "type" not in doc:
        raise ConfigError("config key 'pipeline' must be an object with a 'type'")
    kind = doc["type"]
    if kind == "dgp":
        spec = (
            preset(doc["preset"]) if "preset" in doc else dgp_from_dict(_require(doc, "dgp"))
        )

        def pipeline(n: int, seed: int):
            return simulate_dgp(spec, n, seed)

        return pipeline
    if kind == "hybrid":
        schema = load_schema(_in_path(doc, "schema")).require_full()
        seed_table = load_table(_in_path(doc, "data"), schema)
        fit_seed = check_seed(_require_int(doc, "fit_seed"))
        gen = fit_generator(
            seed_table.covariates(),
            _generator_spec(doc.get("generator"), "pipeline.generator"),
            derive_seed(fit_seed, 0),
        )
        g_model, h_model = fit_nuisances(
            seed_table,
            _model_config(doc.get("propensity_model"), "pipeline.propensity_model"),
            _model_config(doc.get("outcome_model"), "pipeline.outcome_model"),
            derive_seed(fit_seed, 1),
            workers,
        )
        outcome_mode = doc.get("outcome_mode", "bernoulli-sample")

        def pipeline(n: int, seed: int):
            run = HybridConfig(n=n, seed=seed, outcome_mode=outcome_mode)
            return hybrid_generate(gen, g_model, h_model, run, schema)

        return pipeline
    raise ConfigError(f"pipeline type must be 'dgp' or 'hybrid', got {kind!r}")


def _cmd_benchmark(config: dict) -> list[Path]:
    workers = _workers(config)
    pipeline = _build_pipeline(config, workers)
    estimators = _require(config, "estimators")
    if not isinstance(estimators, list):
        raise ConfigError("config key 'estimators' must be a list")
    nuisance = config.get("nuisance") or {}
    if not isinstance(nuisance, dict):
        raise ConfigError("config key 'nuisance' must be an object")
    report = replicate_benchmark(
        pipeline,
        n=_require_int(config, "n"),
        R=_require_int(config, "R"),
        estimators=estimators,
        propensity_config=_model_config(nuisance.get("propensity"), "nuisance.propensity"),
        outcome_config=_model_config(nuisance.get("outcome"), "nuisance.outcome"),
        master_seed=_seed(config, "master_seed"),
        N_large=_optional_int(config, "N_large", 50000),
        truth_estimator=config.get("truth_estimator", "aipw"),
        options=_options(config.get("options")),
        workers=workers,
    )
    _print_value("large-sample value", report.large_value)
    for name, summary in sorted(report.summaries.items()):
        if summary.mse is None:
            print(f"{name}: incomplete ({summary.n_failed} failures)")
        else:
            print(
                f"{name}: bias={summary.bias:.6f} variance={summary.variance:.6f} "
                f"mse={summary.mse:.6f}"
                + (f" ({summary.n_failed} failures)" if summary.n_failed else "")
            )
    outputs: list[Path] = []
    if config.get("out_report"):
        outputs.append(_write_json(report.to_dict(), config["out_report"]))
    if config.get("out_replicates"):
        path = Path(config["out_replicates"])
        lines = ["replicate,estimator,value"]
        for row in report.replicate_rows():
            value = "" if row["value"] is None else repr(row["value"])
            lines.append(f"{row['replicate']},{row['estimator']},{value}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(path)
    return outputs


HANDLERS = {
    "fit-gen": _cmd_fit_gen,
    "sample": _cmd_sample,
    "import": _cmd_import,
    "dcr": _cmd_dcr,
    "fit-nuisance": _cmd_fit_nuisance,
    "hybrid": _cmd_hybrid,
    "joint": _cmd_joint,
    "estimate": _cmd_estimate,
    "positivity": _cmd_positivity,
    "tstr": _cmd_tstr,
    "simulate": _cmd_simulate,
    "oracle": _cmd_oracle,
    "benchmark": _cmd_benchmark,
}

HELP = {
    "fit-gen": "fit a covariate generator (or a joint baseline generator)",
    "sample": "draw rows from a fitted generator",
    "import": "validate and normalize externally produced covariates",
    "dcr": "distance-to-closest-record report or filter",
    "fit-nuisance": "fit a propensity or outcome model",
    "hybrid": "generate synthetic data with modeled causal structure",
    "joint": "generate from a joint baseline generator",
    "estimate": "apply an ATE estimator to a data file",
    "positivity": "flag extreme propensity rows and append paired counterparts",
    "tstr": "train-on-synthetic, test-on-real AUC",
    "simulate": "draw data from a known DGP",
    "oracle": "exact ATE of a known DGP",
    "benchmark": "replicated bias/variance/mse protocol",
}


def _apply_overrides(config: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return config


def _load_config(args: argparse.Namespace) -> dict:
    if args.config is None:
        config: dict = {}
    else:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(config, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    return _apply_overrides(config, args.set or [])


def _write_manifest(subcommand: str, config: dict, outputs: list[Path]) -> None:
    target = config.get("out_manifest")
    if target is None:
        if not outputs:
            return
        target = str(outputs[0]) + ".manifest.json"
    manifest = {
        "subcommand": subcommand,
        "package_version": __version__,
        "config": config,
        "config_sha256": _config_hash(config),
        "seed": config.get("seed", config.get("master_seed")),
        "outputs": [str(p) for p in outputs],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    _write_json(manifest, target)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalsynth",
        description="causal-structure-preserving synthetic data tools",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in HELP.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the JSON config for this run")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override one config key (dotted paths; value parsed as JSON)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        outputs = HANDLERS[args.command](config)
        _write_manifest(args.command, config, outputs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
