"""Random-forest classifier over mixed numeric/nominal features."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _trees
from .dataset import Dataset


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 100
    criterion: str = "gini"  # "gini" | "entropy"
    max_features: str = "sqrt"  # "sqrt" | "log2"
    seed: int = 0
    max_depth: int | None = None

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ForestError("n_estimators must be at least 1")
        if self.criterion not in ("gini", "entropy"):
            raise ForestError(f"unknown criterion {self.criterion!r}")
        if self.max_features not in ("sqrt", "log2"):
            raise ForestError(f"unknown max_features rule {self.max_features!r}")

    def n_split_features(self, m: int) -> int:
        k = math.sqrt(m) if self.max_features == "sqrt" else math.log2(m) if m > 1 else 1.0
        return max(1, min(m, math.ceil(k - 1e-12)))

    def label(self) -> str:
        depth = "" if self.max_depth is None else f"/depth{self.max_depth}"
        return f"{self.n_estimators}/{self.criterion}/{self.max_features}{depth}"


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "feature": int(f),
                    "threshold": float(t),
                    "left": int(l),
                    "right": int(r),
                    "value": [float(v) for v in val],
                }
                for f, t, l, r, val in zip(self.feature, self.threshold, self.left, self.right, self.value)
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        nodes = d["nodes"]
        return cls(
            feature=np.array([n["feature"] for n in nodes], dtype=np.int64),
            threshold=np.array([n["threshold"] for n in nodes], dtype=np.float64),
            left=np.array([n["left"] for n in nodes], dtype=np.int64),
            right=np.array([n["right"] for n in nodes], dtype=np.int64),
            value=np.array([n["value"] for n in nodes], dtype=np.float64),
        )


class ForestModel:
    """Fitted ensemble; class probabilities are the mean of leaf vectors."""

    def __init__(self, trees, config: ForestConfig, classes, nominal, n_categories=None):
        self.trees = list(trees)
        self.config = config
        self.classes = tuple(classes)
        self.nominal = np.asarray(nominal, dtype=np.bool_)
        self.n_categories = None if n_categories is None else np.asarray(n_categories, dtype=np.int64)
        self._pack()

    def _pack(self):
        sizes = [t.n_nodes for t in self.trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self._roots = offsets
        self._feature = np.concatenate([t.feature for t in self.trees])
        self._threshold = np.concatenate([t.threshold for t in self.trees])
        shift = lambda a, o: np.where(a >= 0, a + o, -1)
        self._left = np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)])
        self._right = np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)])
        self._value = np.concatenate([t.value for t in self.trees])

    @property
    def n_features(self) -> int:
        return len(self.nominal)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ForestError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = _trees.predict_forest(
            np.ascontiguousarray(X), self._roots, self._feature, self._threshold,
            self._left, self._right, self._value, self.nominal,
        )
        return out[0] if single else out

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(np.atleast_2d(X)), axis=1)

    def accuracy(self, ds: Dataset) -> float:
        return float(np.mean(self.predict(ds.X) == ds.y))

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "classes": list(self.classes),
            "nominal": self.nominal.tolist(),
            "n_categories": None if self.n_categories is None else self.n_categories.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            [Tree.from_dict(t) for t in d["trees"]],
            ForestConfig(**d["config"]),
            d["classes"],
            d["nominal"],
            d.get("n_categories"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def tree_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def fit_forest(train: Dataset, cfg: ForestConfig) -> ForestModel:
    """Bagged trees with per-node random feature subsets."""
    if train.n == 0:
        raise ForestError("empty training view")
    X = np.ascontiguousarray(train.X)
    y = np.ascontiguousarray(train.y)
    nominal = train.nominal_mask
    n_cats = np.array([len(f.categories) if f.nominal else 0 for f in train.schema], dtype=np.int64)
    n_classes = len(train.class_names)
    k = cfg.n_split_features(train.m)
    crit = _trees.GINI if cfg.criterion == "gini" else _trees.ENTROPY
    depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
    trees = []
    for i in range(cfg.n_estimators):
        parts = _trees.build_tree(X, y, n_classes, nominal, n_cats, k, crit, depth, tree_seed(cfg.seed, i), True)
        trees.append(Tree(*parts))
    return ForestModel(trees, cfg, train.class_names, nominal, n_cats)


def default_grid(seed: int = 0) -> list[ForestConfig]:
    """3 ensemble sizes x 2 split criteria x 2 feature-subset rules."""
    return [
        ForestConfig(n, c, r, seed)
        for n, c, r in itertools.product((100, 500, 1000), ("gini", "entropy"), ("sqrt", "log2"))
    ]


def tune(train: Dataset, validation: Dataset, grid) -> tuple[ForestConfig, list[tuple[ForestConfig, float]]]:
    """Validation-accuracy grid search; ties go to the earlier config."""
    grid = list(grid)
    if not grid:
        raise ForestError("empty grid")
    if train.n == 0 or validation.n == 0:
        raise ForestError("empty training or validation view")
    scores = []
    best, best_acc = None, -1.0
    for cfg in grid:
        acc = fit_forest(train, cfg).accuracy(validation)
        scores.append((cfg, acc))
        if acc > best_acc:
            best, best_acc = cfg, acc
    return best, scores


def write_tuning_report(scores, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_estimators", "criterion", "max_features", "max_depth", "seed", "validation_accuracy"])
        for cfg, acc in scores:
            w.writerow([cfg.n_estimators, cfg.criterion, cfg.max_features,
                        "" if cfg.max_depth is None else cfg.max_depth, cfg.seed, repr(acc)])
