"""K-nearest neighbors with class-weighted votes."""

from __future__ import annotations

import numpy as np


class KNNClassifier:
    """Euclidean KNN; each neighbor votes with its class weight so rare-class
    neighbors are not drowned out. Neighbor order is stable for determinism.
    """

    kind = "knn"

    def __init__(self, k: int = 15, seed: int = 0):
        self.k = k
        self.seed = seed
        self.X_ = None
        self.y_ = None
        self.vote_weight_ = None

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray):
        self.X_ = np.asarray(X, dtype=np.float64)
        self.y_ = np.asarray(y, dtype=np.float64)
        self.vote_weight_ = np.asarray(sample_weight, dtype=np.float64)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        k = min(self.k, self.X_.shape[0])
        train_sq = np.einsum("ij,ij->i", self.X_, self.X_)
        out = np.empty(X.shape[0])
        chunk = max(1, int(4_000_000 // max(self.X_.shape[0], 1)))
        for start in range(0, X.shape[0], chunk):
            q = X[start : start + chunk]
            d2 = train_sq[None, :] - 2.0 * (q @ self.X_.T)
            # query norms cancel in the ranking; stable sort fixes ties by index
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
            wv = self.vote_weight_[nn]
            yv = self.y_[nn]
            out[start : start + chunk] = (wv * yv).sum(axis=1) / wv.sum(axis=1)
        return out

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "X": self.X_.tolist(),
            "y": self.y_.tolist(),
            "vote_weight": self.vote_weight_.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KNNClassifier":
        m = cls(d["k"], d["seed"])
        m.X_ = np.array(d["X"])
        m.y_ = np.array(d["y"])
        m.vote_weight_ = np.array(d["vote_weight"])
        return m
