"""Cross-validated step-wise purchase prediction protocol.

Eleven measurement steps (0..10), a 12-page session filter with a 2-page
buffer, stratified 10-fold cross-validation, inverse-frequency class weights
and F1 on the purchase class. Per fold, everything fitted (Markov chains,
device conversion table, feature scalers, models) sees training sessions
only; held-out sessions influence nothing but their own feature rows.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .features import (
    SETTINGS,
    VARIANTS,
    StepMatrixBuilder,
    feature_names,
    fit_feature_context,
    static_mask,
)
from .models import (
    MODEL_KINDS,
    PERMUTATION_KINDS,
    SCALED_KINDS,
    TrainConfig,
    fit as fit_model,
    importance as model_importance,
    model_to_json,
    predict,
)
from .sessions import build_journeys


class LengthMismatch(ValueError):
    pass


class TooFewSessions(ValueError):
    pass


def f1_score(y_true, y_pred) -> tuple[float, float, float]:
    """(precision, recall, f1) on the positive class; 0 sentinel at P+R=0."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def kfold_split(ids, labels, k: int, seed: int, stratified: bool = True) -> list[list]:
    """Split ids into k disjoint folds.

    Stratified splitting shuffles each class separately and deals round-robin,
    so per-fold positive counts differ by at most 1 from proportional.
    """
    ids = list(ids)
    labels = list(labels)
    if len(ids) < k:
        raise TooFewSessions(f"{len(ids)} ids for {k} folds")
    rng = np.random.default_rng(seed)
    folds: list[list] = [[] for _ in range(k)]
    if stratified:
        for cls in (1, 0):
            members = [i for i, lab in zip(ids, labels) if lab == cls]
            order = rng.permutation(len(members))
            for pos, idx in enumerate(order):
                folds[pos % k].append(members[idx])
    else:
        order = rng.permutation(len(ids))
        for pos, idx in enumerate(order):
            folds[pos % k].append(ids[idx])
    return folds


@dataclass
class ProtocolConfig:
    steps: tuple = tuple(range(11))
    buffer: int = 2
    folds: int = 10
    settings: tuple = SETTINGS
    variants: tuple = VARIANTS
    models: tuple = MODEL_KINDS
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    markov_alpha: float = 1.0

    @property
    def min_pages(self) -> int:
        return max(self.steps) + self.buffer

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        for s in self.settings:
            if s not in SETTINGS:
                raise ValueError(f"unknown setting {s!r}")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        for m in self.models:
            if m not in MODEL_KINDS:
                raise ValueError(f"unknown model {m!r}")


@dataclass
class StepReport:
    model: str
    setting: str
    variant: str
    step: int
    f1_mean: float
    f1_std: float
    precision_mean: float
    recall_mean: float
    importance: np.ndarray
    n_folds: int
    errors: list = field(default_factory=list)


@dataclass
class ProtocolReport:
    rows: list
    names: dict  # (setting, variant) -> feature names

    def row(self, model: str, setting: str, variant: str, step: int) -> StepReport:
        for r in self.rows:
            if (r.model, r.setting, r.variant, r.step) == (model, setting, variant, step):
                return r
        raise KeyError((model, setting, variant, step))

    def static_share(self, model: str, setting: str, step: int) -> float:
        """Summed importance of static catalog features (extended variant)."""
        r = self.row(model, setting, "extended", step)
        mask = static_mask(setting, "extended")
        total = float(r.importance.sum())
        if total <= 0:
            return 1.0
        # complement form: zero dynamic importance gives exactly 1.0
        dynamic = float(r.importance[~mask].sum())
        return 1.0 - dynamic / total

    def step_report_csv(self) -> str:
        lines = ["model,setting,variant,step,f1_mean,f1_std,precision,recall"]
        for r in self.rows:
            lines.append(
                f"{r.model},{r.setting},{r.variant},{r.step},"
                f"{r.f1_mean:.6f},{r.f1_std:.6f},{r.precision_mean:.6f},{r.recall_mean:.6f}"
            )
        return "\n".join(lines) + "\n"

    def importance_csv(self) -> str:
        # extended-variant importances, one row per (model, setting, step, feature)
        lines = ["model,setting,step,feature,importance"]
        for r in self.rows:
            if r.variant != "extended":
                continue
            for name, value in zip(self.names[(r.setting, "extended")], r.importance):
                lines.append(f"{r.model},{r.setting},{r.step},{name},{value:.6f}")
        return "\n".join(lines) + "\n"


def static_share_curve(report: ProtocolReport, model: str, setting: str, steps=None) -> list[float]:
    steps = steps if steps is not None else sorted(
        {r.step for r in report.rows if r.model == model and r.setting == setting}
    )
    return [report.static_share(model, setting, step) for step in steps]


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        mean = X.mean(axis=0) if X.size else np.zeros(X.shape[1])
        std = X.std(axis=0) if X.size else np.ones(X.shape[1])
        std = np.where(std > 0, std, 1.0)  # constant columns pass through as 0
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def _model_seed(master: int, setting: str, fold: int, step: int, variant: str, kind: str) -> int:
    key = (
        SETTINGS.index(setting),
        fold,
        step,
        VARIANTS.index(variant),
        MODEL_KINDS.index(kind),
    )
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


def _eligible(sessions, min_pages: int):
    return [s for s in sessions if s.n_page_views >= min_pages]


def _setting_pool(sessions, setting: str, min_pages: int):
    pool = _eligible(sessions, min_pages)
    if setting == "identified":
        pool = [s for s in pool if s.customer_id is not None]
    return pool


def _run_fold(all_sessions, pool, fold_ids, fold_index, setting, cfg: ProtocolConfig,
              collect_artifacts: bool = False):
    """Fit context + models on everything outside fold_ids, evaluate inside."""
    eval_set = set(fold_ids)
    train_sessions = [s for s in pool if s.session_id not in eval_set]
    eval_sessions = [s for s in pool if s.session_id in eval_set]
    # journeys may draw on sessions below the page filter (they are history,
    # not protocol rows) but never on held-out sessions
    train_journeys = build_journeys(
        s for s in all_sessions if s.session_id not in eval_set
    )
    full_journeys = build_journeys(all_sessions)
    ctx = fit_feature_context(train_sessions, train_journeys, cfg.markov_alpha)

    builder_train = StepMatrixBuilder(
        train_sessions, train_journeys, ctx, setting, cfg.steps, cfg.min_pages
    )
    builder_eval = StepMatrixBuilder(
        eval_sessions, full_journeys, ctx, setting, cfg.steps, cfg.min_pages
    )

    cells = []
    artifacts = {"context": ctx.to_dict(), "scalers": {}, "models": {}} if collect_artifacts else None
    for step in cfg.steps:
        for variant in cfg.variants:
            X_tr, y_tr = builder_train.matrix(step, variant)
            X_ev, y_ev = builder_eval.matrix(step, variant)
            scaler = Scaler.fit(X_tr)
            if collect_artifacts:
                artifacts["scalers"][f"{step}/{variant}"] = scaler.to_dict()
            for kind in cfg.models:
                seed = _model_seed(cfg.seed, setting, fold_index, step, variant, kind)
                mcfg = cfg.train.for_kind(kind, seed=seed)
                scale = kind in SCALED_KINDS
                try:
                    model = fit_model(scaler.transform(X_tr) if scale else X_tr, y_tr, mcfg)
                    Xe = scaler.transform(X_ev) if scale else X_ev
                    y_hat = predict(model, Xe)
                    precision, recall, f1 = f1_score(y_ev, y_hat)
                    if kind in PERMUTATION_KINDS:
                        imp = model_importance(model, Xe, y_ev, seed=seed)
                    else:
                        imp = model_importance(model)
                    cells.append(
                        dict(model=kind, variant=variant, step=step,
                             precision=precision, recall=recall, f1=f1,
                             importance=imp, error=None)
                    )
                    if collect_artifacts:
                        artifacts["models"][f"{step}/{variant}/{kind}"] = model_to_json(model)
                except Exception as exc:  # a failed cell is reported, not fatal
                    cells.append(
                        dict(model=kind, variant=variant, step=step,
                             precision=None, recall=None, f1=None,
                             importance=None, error=f"{type(exc).__name__}: {exc}")
                    )
    return cells, artifacts


def run_protocol(sessions, cfg: ProtocolConfig, threads: int = 1) -> ProtocolReport:
    """Full protocol over every (setting, fold, step, variant, model) cell."""
    sessions = list(sessions)
    rows = []
    names = {}
    for setting in cfg.settings:
        for variant in cfg.variants:
            names[(setting, variant)] = feature_names(setting, variant)
        pool = _setting_pool(sessions, setting, cfg.min_pages)
        if len(pool) < cfg.folds:
            raise TooFewSessions(
                f"{setting}: {len(pool)} sessions pass the {cfg.min_pages}-page filter, "
                f"need >= {cfg.folds}"
            )
        ids = [s.session_id for s in pool]
        labels = [1 if s.purchase else 0 for s in pool]
        folds = kfold_split(ids, labels, cfg.folds, cfg.seed, stratified=True)

        def work(args):
            fold_index, fold_ids = args
            return _run_fold(sessions, pool, fold_ids, fold_index, setting, cfg)[0]

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool_exec:
                fold_cells = list(pool_exec.map(work, enumerate(folds)))
        else:
            fold_cells = [work(item) for item in enumerate(folds)]

        for variant in cfg.variants:
            for step in cfg.steps:
                for kind in cfg.models:
                    per_fold = [
                        c
                        for cells in fold_cells
                        for c in cells
                        if (c["model"], c["variant"], c["step"]) == (kind, variant, step)
                    ]
                    ok = [c for c in per_fold if c["error"] is None]
                    errors = [c["error"] for c in per_fold if c["error"]]
                    if ok:
                        f1s = np.array([c["f1"] for c in ok])
                        imps = np.vstack([c["importance"] for c in ok])
                        rows.append(
                            StepReport(
                                model=kind, setting=setting, variant=variant, step=step,
                                f1_mean=float(f1s.mean()), f1_std=float(f1s.std()),
                                precision_mean=float(np.mean([c["precision"] for c in ok])),
                                recall_mean=float(np.mean([c["recall"] for c in ok])),
                                importance=imps.mean(axis=0),
                                n_folds=len(ok), errors=errors,
                            )
                        )
                    else:
                        rows.append(
                            StepReport(
                                model=kind, setting=setting, variant=variant, step=step,
                                f1_mean=float("nan"), f1_std=float("nan"),
                                precision_mean=float("nan"), recall_mean=float("nan"),
                                importance=np.zeros(len(names[(setting, variant)])),
                                n_folds=0, errors=errors,
                            )
                        )
    return ProtocolReport(rows=rows, names=names)


def fold_artifacts(sessions, cfg: ProtocolConfig, setting: str = "anonymous",
                   fold_index: int = 0) -> str:
    """Serialized fold-fitted statistics (chains, conversion table, scalers,
    model parameters) for one fold; used to verify leakage freedom."""
    sessions = list(sessions)
    pool = _setting_pool(sessions, setting, cfg.min_pages)
    ids = [s.session_id for s in pool]
    labels = [1 if s.purchase else 0 for s in pool]
    folds = kfold_split(ids, labels, cfg.folds, cfg.seed, stratified=True)
    _, artifacts = _run_fold(
        sessions, pool, folds[fold_index], fold_index, setting, cfg, collect_artifacts=True
    )
    return json.dumps(artifacts, sort_keys=True, separators=(",", ":"))


def spearman_rank_correlation(xs, ys) -> float:
    """Spearman rho with average ranks for ties."""

    def ranks(values):
        arr = np.asarray(values, dtype=np.float64)
        order = np.argsort(arr, kind="stable")
        rk = np.empty(arr.size)
        rk[order] = np.arange(1, arr.size + 1)
        for v in np.unique(arr):
            mask = arr == v
            rk[mask] = rk[mask].mean()
        return rk

    rx, ry = ranks(xs), ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else 0.0
