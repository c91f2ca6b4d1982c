"""Six classifier families behind one fit/predict_proba interface.

Class weighting is inverse-frequency: w_c = N / (2 * N_c); the weight of
example i is w over its own class and enters every loss and split criterion
(KNN applies it to votes). Decisions use a fixed 0.5 threshold.

Model artifacts serialize to versioned JSON and loading refuses a version
mismatch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linear import LinearSVM, LogisticRegression
from .mlp import MLPClassifier
from .neighbors import KNNClassifier
from .trees import GradientBoostingClassifier, RandomForestClassifier

MODEL_KINDS = ("lr", "knn", "svm", "rf", "gbdt", "mlp")
ARTIFACT_VERSION = 1

# models whose features should be z-scored by the caller
SCALED_KINDS = frozenset({"lr", "svm", "knn", "mlp"})
# models whose importances come from permutation on held-out data
PERMUTATION_KINDS = frozenset({"knn", "mlp"})


class SingleClassTraining(ValueError):
    pass


class NonFiniteInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class TrainConfig:
    kind: str = "rf"
    class_weighting: bool = True
    seed: int = 0
    # trees
    n_trees: int = 200
    max_depth: int = 12
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    max_bins: int = 32
    # gbdt
    gbdt_rounds: int = 200
    gbdt_depth: int = 3
    gbdt_rate: float = 0.1
    # knn
    knn_k: int = 15
    # lr / svm
    learning_rate: float = 0.5
    epochs: int = 400
    l2: float = 1e-4
    # mlp
    hidden: int = 32
    mlp_epochs: int = 300
    mlp_rate: float = 0.02

    def for_kind(self, kind: str, seed=None) -> "TrainConfig":
        cfg = TrainConfig(**{**self.__dict__, "kind": kind})
        if seed is not None:
            cfg.seed = seed
        return cfg


def class_weights(y: np.ndarray) -> dict:
    """Inverse-frequency weights: w_c = N / (K * N_c) with K = 2 classes."""
    n = y.size
    weights = {}
    for c in (0, 1):
        n_c = int((y == c).sum())
        if n_c:
            weights[c] = n / (2.0 * n_c)
    return weights


def sample_weights(y: np.ndarray, class_weighting: bool) -> np.ndarray:
    if not class_weighting:
        return np.ones(y.size)
    cw = class_weights(y)
    return np.array([cw[int(c)] for c in y])


def _build(cfg: TrainConfig):
    if cfg.kind == "lr":
        return LogisticRegression(cfg.learning_rate, cfg.epochs, cfg.l2, cfg.seed)
    if cfg.kind == "svm":
        return LinearSVM(cfg.learning_rate, cfg.epochs, cfg.l2, cfg.seed)
    if cfg.kind == "knn":
        return KNNClassifier(cfg.knn_k, cfg.seed)
    if cfg.kind == "rf":
        return RandomForestClassifier(
            cfg.n_trees, cfg.max_depth, cfg.min_samples_leaf,
            cfg.min_samples_split, cfg.max_bins, cfg.seed,
        )
    if cfg.kind == "gbdt":
        return GradientBoostingClassifier(
            cfg.gbdt_rounds, cfg.gbdt_rate, cfg.gbdt_depth,
            cfg.min_samples_leaf, cfg.max_bins, cfg.seed,
        )
    if cfg.kind == "mlp":
        return MLPClassifier(cfg.hidden, cfg.mlp_epochs, cfg.mlp_rate, cfg.seed)
    raise ValueError(f"unknown model kind {cfg.kind!r}")


def fit(X: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """Train one classifier; deterministic given (X, y, cfg)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if not np.isfinite(X).all():
        raise NonFiniteInput("feature matrix contains NaN or inf")
    if np.unique(y).size < 2:
        raise SingleClassTraining("training labels contain a single class")
    sw = sample_weights(y, cfg.class_weighting)
    model = _build(cfg)
    model.fit(X, y, sw)
    model.n_features_in_ = X.shape[1]
    return model


def predict_proba(model, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    expected = getattr(model, "n_features_in_", None)
    if expected is not None and X.shape[1] != expected:
        raise DimensionMismatch(f"expected {expected} features, got {X.shape[1]}")
    return model.predict_proba(X)


def predict(model, X: np.ndarray) -> np.ndarray:
    return (predict_proba(model, X) >= 0.5).astype(np.int64)


def _f1_of(y_true, y_pred) -> float:
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def permutation_importance(model, X: np.ndarray, y: np.ndarray,
                           n_shuffles: int = 5, seed: int = 0) -> np.ndarray:
    """Mean F1 drop per shuffled feature, clipped at 0 and normalized."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    base = _f1_of(y, predict(model, X))
    rng = np.random.default_rng(seed)
    drops = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        acc = 0.0
        for _ in range(n_shuffles):
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(X.shape[0]), j]
            acc += base - _f1_of(y, predict(model, Xp))
        drops[j] = acc / n_shuffles
    drops = np.clip(drops, 0.0, None)
    total = drops.sum()
    return drops / total if total > 0 else drops


def importance(model, X_holdout=None, y_holdout=None, n_shuffles: int = 5, seed: int = 0) -> np.ndarray:
    """Normalized importance vector for any model kind.

    Trees report mean decrease in weighted impurity; linear models the
    absolute coefficients (meaningful over standardized features); KNN and
    MLP need held-out data for permutation importance.
    """
    kind = model.kind
    if kind in ("rf", "gbdt"):
        return np.array(model.feature_importances_)
    if kind in ("lr", "svm"):
        mag = np.abs(model.coef_)
        total = mag.sum()
        return mag / total if total > 0 else mag
    if X_holdout is None or y_holdout is None:
        raise ValueError(f"{kind} importances require held-out data")
    return permutation_importance(model, X_holdout, y_holdout, n_shuffles, seed)


_CLASSES = {
    "lr": LogisticRegression,
    "svm": LinearSVM,
    "knn": KNNClassifier,
    "rf": RandomForestClassifier,
    "gbdt": GradientBoostingClassifier,
    "mlp": MLPClassifier,
}


def model_to_json(model, feature_names=None) -> str:
    payload = {
        "version": ARTIFACT_VERSION,
        "kind": model.kind,
        "feature_names": list(feature_names) if feature_names else None,
        "n_features_in": getattr(model, "n_features_in_", None),
        "params": model.to_dict(),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str):
    payload = json.loads(text)
    if payload.get("version") != ARTIFACT_VERSION:
        raise ValueError(
            f"artifact version {payload.get('version')} != supported {ARTIFACT_VERSION}"
        )
    model = _CLASSES[payload["kind"]].from_dict(payload["params"])
    if payload.get("n_features_in") is not None:
        model.n_features_in_ = payload["n_features_in"]
    return model
