"""Propensity and outcome models.

Two interchangeable binary classifiers sit behind one interface:

``logistic``
    Penalized maximum likelihood with an unpenalized intercept and ridge
    strength ``ridge`` on the remaining coefficients, fitted by a damped
    Newton iteration. The fit is deterministic and seed-free; convergence
    is declared when the L2 norm of the penalized score drops below
    ``tol``, and hitting ``max_iter`` is reported, not raised.

``forest``
    A bagged ensemble of binary CART trees grown on bootstrap resamples
    with per-split feature subsampling. Splits minimize weighted Gini
    impurity with ties broken by lowest column index, then lowest
    threshold, so a fit is a pure function of (data, config, seed). Each
    tree's randomness comes from a stream derived from (seed, tree index),
    which makes the ensemble independent of build order and worker count.

Categorical features are one-of-k encoded for both kinds through the
shared encoding path, so model features and record distances agree on
what a level means.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import encode_features
from .errors import ConfigError, DataError, DegenerateFitError, SchemaError
from .rng import derive_rng
from .tabular import ColumnSpec, Schema, Table, schema_to_dict

MODEL_FORMAT_VERSION = 1
ROLE_TAGS = ("propensity", "outcome")


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for one nuisance model.

    Args:
        kind: "logistic" or "forest".
        ridge: L2 penalty strength for logistic fits (intercept exempt).
        max_iter: Newton iteration cap for logistic fits.
        tol: gradient-norm convergence tolerance for logistic fits.
        tree_count: number of trees in a forest.
        max_depth: maximum split depth of each tree (a stump is depth 1).
        min_leaf: minimum rows required in each child of a split.
        features_per_split: fraction of encoded features drawn per split,
            in (0, 1]. ``None`` means ceil(sqrt(d)) features.
    """

    kind: str = "logistic"
    ridge: float = 1e-6
    max_iter: int = 100
    tol: float = 1e-8
    tree_count: int = 100
    max_depth: int = 6
    min_leaf: int = 5
    features_per_split: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("logistic", "forest"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.ridge < 0:
            raise ConfigError(f"ridge must be >= 0, got {self.ridge}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if self.tree_count < 1:
            raise ConfigError(f"tree_count must be >= 1, got {self.tree_count}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ConfigError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.features_per_split is not None and not (
            0.0 < self.features_per_split <= 1.0
        ):
            raise ConfigError(
                f"features_per_split must lie in (0, 1], got {self.features_per_split}"
            )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ridge": self.ridge,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "tree_count": self.tree_count,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "features_per_split": self.features_per_split,
        }


@dataclass(frozen=True)
class NuisanceModel:
    """A fitted model plus everything needed to apply or audit it."""

    kind: str
    role_tag: str
    input_schema: Schema
    config: ModelConfig
    params: dict

    @property
    def input_columns(self) -> tuple[str, ...]:
        return self.input_schema.names


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _penalized_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> float:
    z = X @ beta
    ll = float(np.sum(y * z - np.logaddexp(0.0, z)))
    return ll - 0.5 * ridge * float(np.sum(beta[1:] ** 2))


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    ridge: float = 1e-6,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> dict:
    """Fit a penalized logistic regression and return its parameters.

    ``X`` is the raw feature matrix without an intercept column; one is
    prepended internally and left unpenalized. Returns a dict with keys
    ``intercept``, ``coefficients``, ``converged``, ``n_iter`` and
    ``grad_norm``. Deterministic: no randomness is consumed.
    """
    y = np.asarray(y, dtype=np.float64)
    Xd = np.hstack([np.ones((X.shape[0], 1)), np.asarray(X, dtype=np.float64)])
    n, d = Xd.shape
    if ridge == 0.0 and (y.min() == y.max()):
        raise DegenerateFitError(
            "logistic fit with ridge=0 on single-class labels has no finite optimum"
        )
    penalty = np.full(d, ridge)
    penalty[0] = 0.0
    beta = np.zeros(d)
    ll = _penalized_loglik(Xd, y, beta, ridge)
    converged = False
    grad_norm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(Xd @ beta)
        grad = Xd.T @ (y - p) - penalty * beta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            converged = True
            it -= 1
            break
        w = p * (1.0 - p)
        H = (Xd * w[:, None]).T @ Xd + np.diag(penalty)
        # Near-separation leaves the Hessian ill-conditioned; nudge it.
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + 1e-10 * np.eye(d), grad)
        scale = 1.0
        for _ in range(30):
            candidate = beta + scale * step
            cand_ll = _penalized_loglik(Xd, y, candidate, ridge)
            if cand_ll >= ll - 1e-12:
                beta = candidate
                ll = cand_ll
                break
            scale *= 0.5
        else:
            break
    else:
        p = _sigmoid(Xd @ beta)
        grad = Xd.T @ (y - p) - penalty * beta
        grad_norm = float(np.linalg.norm(grad))
        converged = grad_norm <= tol
        it = max_iter
    return {
        "intercept": float(beta[0]),
        "coefficients": [float(b) for b in beta[1:]],
        "converged": bool(converged),
        "n_iter": int(it),
        "grad_norm": grad_norm,
    }


def predict_logistic(params: dict, X: np.ndarray) -> np.ndarray:
    beta = np.asarray(params["coefficients"], dtype=np.float64)
    return _sigmoid(params["intercept"] + X @ beta)


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[float, float] | None:
    """Lowest weighted-Gini split of one feature, or None if no valid cut.

    Scans cut points in ascending threshold order, so the first minimum is
    the lowest threshold among ties.
    """
    n = x.size
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ys = y[order]
    left_ones = np.cumsum(ys)[:-1]
    left_n = np.arange(1, n, dtype=np.float64)
    right_n = n - left_n
    valid = (xs[1:] != xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
    if not valid.any():
        return None
    right_ones = left_ones[-1] + ys[-1] - left_ones
    p_l = left_ones / left_n
    p_r = right_ones / right_n
    weighted = (left_n * 2.0 * p_l * (1.0 - p_l) + right_n * 2.0 * p_r * (1.0 - p_r)) / n
    weighted[~valid] = np.inf
    best = int(np.argmin(weighted))
    threshold = (xs[best] + xs[best + 1]) / 2.0
    return float(weighted[best]), float(threshold)


def _grow_tree(
    X: np.ndarray, y: np.ndarray, config: ModelConfig, m_try: int, rng: np.random.Generator
) -> dict:
    n, d = X.shape
    boot = rng.integers(0, n, size=n)
    Xb = X[boot]
    yb = y[boot]

    def grow(idx: np.ndarray, depth: int) -> dict:
        value = float(yb[idx].mean())
        if (
            depth >= config.max_depth
            or idx.size < 2 * config.min_leaf
            or value == 0.0
            or value == 1.0
        ):
            return {"value": value}
        feats = np.sort(rng.choice(d, size=m_try, replace=False))
        best: tuple[float, int, float] | None = None
        for f in feats:
            found = _best_split(Xb[idx, f], yb[idx], config.min_leaf)
            if found is None:
                continue
            impurity, threshold = found
            if best is None or impurity < best[0]:
                best = (impurity, int(f), threshold)
        if best is None:
            return {"value": value}
        _, col, threshold = best
        left_mask = Xb[idx, col] <= threshold
        return {
            "col": col,
            "threshold": threshold,
            "left": grow(idx[left_mask], depth + 1),
            "right": grow(idx[~left_mask], depth + 1),
            "value": value,
        }

    return grow(np.arange(n), 0)


def _tree_predict(tree: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if "col" not in node:
            out[idx] = node["value"]
            continue
        left = X[idx, node["col"]] <= node["threshold"]
        stack.append((node["left"], idx[left]))
        stack.append((node["right"], idx[~left]))
    return out


def _fit_forest(X: np.ndarray, y: np.ndarray, config: ModelConfig, seed: int, workers: int) -> dict:
    d = X.shape[1]
    if config.features_per_split is None:
        m_try = int(math.ceil(math.sqrt(d)))
    else:
        m_try = int(math.ceil(config.features_per_split * d))
    m_try = min(max(m_try, 1), d)

    def one(t: int) -> dict:
        return _grow_tree(X, y, config, m_try, derive_rng(seed, t))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(one, range(config.tree_count)))
    else:
        trees = [one(t) for t in range(config.tree_count)]
    return {"trees": trees, "m_try": m_try}


def fit_model(
    features: Table,
    labels: np.ndarray,
    config: ModelConfig,
    seed: int,
    *,
    role_tag: str,
    workers: int = 1,
) -> NuisanceModel:
    """Fit a propensity or outcome model on the given feature table.

    Args:
        features: table whose columns are exactly the model inputs.
        labels: binary 0/1 target vector aligned with the rows.
        config: model kind and hyperparameters.
        seed: master seed; only forests consume randomness.
        role_tag: "propensity" or "outcome", recorded on the model so
            downstream pipelines can reject a swapped pair.
        workers: thread cap for forest growth; never changes the result.

    Returns:
        A NuisanceModel whose params depend on the kind. Logistic params
        include the convergence report; forest params hold the trees.
    """
    if role_tag not in ROLE_TAGS:
        raise ConfigError(f"role_tag must be one of {ROLE_TAGS}, got {role_tag!r}")
    if len(features.schema.columns) == 0:
        raise DataError("model needs at least one feature column")
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != features.n_rows:
        raise DataError(
            f"labels length {y.shape} does not match {features.n_rows} feature rows"
        )
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be binary 0/1")
    X = encode_features(features)
    if config.kind == "logistic":
        params = fit_logistic(X, y, config.ridge, config.max_iter, config.tol)
    else:
        if y.min() == y.max():
            raise DegenerateFitError("forest fit needs both classes present")
        params = _fit_forest(X, y, config, seed, workers)
    return NuisanceModel(
        kind=config.kind,
        role_tag=role_tag,
        input_schema=features.schema,
        config=config,
        params=params,
    )


def predict_proba(model: NuisanceModel, features: Table) -> np.ndarray:
    """Predicted P(label = 1) per row, in (0, 1) for logistic, [0, 1] for forests."""
    if features.schema.names != model.input_columns:
        raise SchemaError(
            f"feature columns {list(features.schema.names)} do not match the "
            f"model's inputs {list(model.input_columns)}"
        )
    for name in model.input_columns:
        if features.schema.column(name).kind != model.input_schema.column(name).kind:
            raise SchemaError(f"column {name!r} changed kind since the model was fit")
    X = encode_features(features)
    if model.kind == "logistic":
        return predict_logistic(model.params, X)
    per_tree = np.stack([_tree_predict(t, X) for t in model.params["trees"]])
    return per_tree.mean(axis=0)


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve by the rank statistic.

    Equivalent to exhaustive pair counting with ties worth one half:
    (concordant + 0.5 * tied) / (positives * negatives). Average ranks
    keep the numerator exact, so the result matches pair counting bit for
    bit.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be aligned one-dimensional arrays")
    if not np.isfinite(s).all():
        raise DataError("scores must be finite")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be binary 0/1")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("auc needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    n = s.size
    boundaries = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
    group_of = np.cumsum(np.r_[True, ss[1:] != ss[:-1]]) - 1
    starts = boundaries
    ends = np.r_[boundaries[1:], n]
    avg_rank_by_group = (starts + 1 + ends) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg_rank_by_group[group_of]
    rank_sum_pos = float(np.sum(ranks[y == 1]))
    u_stat = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u_stat / float(n_pos * n_neg)


def save_model(model: NuisanceModel, path: str | Path) -> None:
    """Serialize a fitted model to a versioned JSON document."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "role_tag": model.role_tag,
        "input_schema": schema_to_dict(model.input_schema),
        "config": model.config.to_dict(),
        "params": model.params,
    }
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_model(path: str | Path) -> NuisanceModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise DataError(f"{path}: model document must be a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported model format version {version!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    try:
        cols = tuple(
            ColumnSpec(
                name=c["name"], role=c.get("role", "covariate"),
                kind=c.get("kind", "binary"), levels=c.get("levels"),
            )
            for c in doc["input_schema"]["columns"]
        )
        return NuisanceModel(
            kind=doc["kind"],
            role_tag=doc["role_tag"],
            input_schema=Schema(cols),
            config=ModelConfig(**doc["config"]),
            params=doc["params"],
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed model document ({exc!r})")
