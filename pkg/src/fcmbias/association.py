"""Pairwise feature association weights and the FCM weight matrix.

Numeric-numeric pairs use absolute Pearson correlation, nominal-nominal
pairs use Cramer's V, and mixed pairs first discretize the numeric feature
with fuzzy c-means (cluster count chosen by the fuzzy partition
coefficient) and then fall back to Cramer's V.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset


class AssociationError(ValueError):
    pass


@dataclass(frozen=True)
class FuzzyPartition:
    memberships: np.ndarray  # n x c
    prototypes: np.ndarray  # c
    alpha: float
    fpc: float
    n_iter: int = 0

    @property
    def c(self) -> int:
        return len(self.prototypes)


@dataclass
class DiscretizationReport:
    feature_id: str
    chosen_c: int
    fpc_by_c: dict[int, float]
    prototypes: list[float]

    def to_dict(self) -> dict:
        return {
            "feature_id": self.feature_id,
            "chosen_c": self.chosen_c,
            "fpc_by_c": {str(k): v for k, v in self.fpc_by_c.items()},
            "prototypes": self.prototypes,
        }


@dataclass
class AssociationMatrix:
    weights: np.ndarray
    feature_ids: list[str]
    diagonal_policy: str = "unit"
    discretizations: dict[str, DiscretizationReport] = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = len(self.feature_ids)
        if w.shape != (m, m):
            raise AssociationError(f"weights must be {m}x{m}")
        if not np.array_equal(w, w.T):
            raise AssociationError("association matrix must be symmetric")
        if self.diagonal_policy not in ("unit", "zero"):
            raise AssociationError(f"unknown diagonal policy {self.diagonal_policy!r}")
        self.weights = w

    def column(self, fid: str) -> np.ndarray:
        return self.weights[:, self.feature_ids.index(fid)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature"] + self.feature_ids)
            for fid, row in zip(self.feature_ids, self.weights):
                w.writerow([fid] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, diagonal_policy: str = "unit") -> "AssociationMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        ids = rows[0][1:]
        weights = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(weights, ids, diagonal_policy)

    def to_json(self) -> str:
        return json.dumps(
            {
                "feature_ids": self.feature_ids,
                "weights": self.weights.tolist(),
                "diagonal_policy": self.diagonal_policy,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "AssociationMatrix":
        d = json.loads(text)
        return cls(np.array(d["weights"], dtype=np.float64), list(d["feature_ids"]), d["diagonal_policy"])


def pearson_abs(x, y) -> float:
    """Absolute sample Pearson correlation; 0 if either column is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise AssociationError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise AssociationError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, abs(r)))


def contingency_table(x, y) -> np.ndarray:
    """Counts over the categories actually present in each column."""
    _, xi = np.unique(np.asarray(x), return_inverse=True)
    _, yi = np.unique(np.asarray(y), return_inverse=True)
    table = np.zeros((xi.max() + 1, yi.max() + 1), dtype=np.float64)
    np.add.at(table, (xi, yi), 1.0)
    return table


def cramers_v_table(table) -> float:
    t = np.asarray(table, dtype=np.float64)
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    k = min(t.shape[0] - 1, t.shape[1] - 1) if t.size else 0
    if k <= 0:
        return 0.0
    n = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    chi2 = ((t - expected) ** 2 / expected).sum()
    return float(min(1.0, np.sqrt(chi2 / (n * k))))


def cramers_v(x, y) -> float:
    """Uncorrected Cramer's V between two nominal columns."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise AssociationError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) == 0:
        raise AssociationError("empty columns")
    return cramers_v_table(contingency_table(x, y))


def fcm_memberships(x: np.ndarray, prototypes: np.ndarray, alpha: float) -> np.ndarray:
    """Membership update for fixed prototypes.

    Points sitting exactly on a prototype get crisp membership on the first
    such prototype.
    """
    d = np.abs(x[:, None] - prototypes[None, :])
    hit = d == 0.0
    with np.errstate(divide="ignore"):
        logits = -(2.0 / (alpha - 1.0)) * np.log(d)
    rows = hit.any(axis=1)
    logits[rows] = 0.0
    logits -= logits.max(axis=1, keepdims=True)
    u = np.exp(logits)
    u /= u.sum(axis=1, keepdims=True)
    if rows.any():
        first = np.argmax(hit[rows], axis=1)
        crisp = np.zeros((rows.sum(), len(prototypes)))
        crisp[np.arange(len(first)), first] = 1.0
        u[rows] = crisp
    return u


def fcm_prototypes(x: np.ndarray, u: np.ndarray, alpha: float) -> np.ndarray:
    um = u**alpha
    return (um.T @ x) / um.sum(axis=0)


def fcm_objective(x, u, prototypes, alpha) -> float:
    d2 = (np.asarray(x)[:, None] - np.asarray(prototypes)[None, :]) ** 2
    return float(np.sum(np.asarray(u) ** alpha * d2))


def fpc_value(u: np.ndarray, alpha: float) -> float:
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(u**alpha) / u.shape[0])


def fpc(p: FuzzyPartition) -> float:
    """Fuzzy partition coefficient of a partition."""
    return fpc_value(p.memberships, p.alpha)


def initial_memberships(n: int, c: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.random((n, c))
    return u / u.sum(axis=1, keepdims=True)


def fuzzy_cmeans(
    values,
    c: int,
    alpha: float = 2.0,
    seed: int = 0,
    max_iter: int = 1000,
    tol: float = 1e-9,
    init_memberships: np.ndarray | None = None,
) -> FuzzyPartition:
    """One-dimensional fuzzy c-means.

    Alternates the prototype and membership updates starting from seeded
    random memberships, until the largest prototype shift drops below
    ``tol`` or ``max_iter`` sweeps have run.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if alpha <= 1.0:
        raise AssociationError(f"alpha must exceed 1, got {alpha}")
    if c < 1:
        raise AssociationError("cluster count must be at least 1")
    if len(np.unique(x)) < c:
        raise AssociationError(f"{len(np.unique(x))} distinct values cannot support {c} clusters")
    if c == 1:
        u = np.ones((len(x), 1))
        return FuzzyPartition(u, np.array([x.mean()]), alpha, 1.0, 0)

    u = initial_memberships(len(x), c, seed) if init_memberships is None else np.array(init_memberships, dtype=np.float64)
    z = fcm_prototypes(x, u, alpha)
    it = 0
    for it in range(1, max_iter + 1):
        u = fcm_memberships(x, z, alpha)
        z_new = fcm_prototypes(x, u, alpha)
        shift = np.max(np.abs(z_new - z))
        z = z_new
        if shift < tol:
            break
    u = fcm_memberships(x, z, alpha)
    return FuzzyPartition(u, z, alpha, fpc_value(u, alpha), it)


def discretize_numeric(
    values,
    c_range=range(2, 11),
    alpha: float = 2.0,
    seed: int = 0,
    feature_id: str = "",
) -> tuple[np.ndarray, FuzzyPartition, DiscretizationReport]:
    """Crisp categories for a numeric column via FPC-selected fuzzy c-means.

    Cluster counts the data cannot support are skipped. Clusters are
    relabelled in ascending prototype order; each value takes the cluster
    of highest membership.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    n_distinct = len(np.unique(x))
    best: FuzzyPartition | None = None
    scores: dict[int, float] = {}
    for c in c_range:
        if c > n_distinct:
            continue
        p = fuzzy_cmeans(x, c, alpha=alpha, seed=seed)
        scores[c] = p.fpc
        if best is None or p.fpc > best.fpc:
            best = p
    if best is None:
        raise AssociationError(f"feature {feature_id!r}: no feasible cluster count in {list(c_range)}")
    order = np.argsort(best.prototypes, kind="stable")
    best = FuzzyPartition(best.memberships[:, order], best.prototypes[order], best.alpha, best.fpc, best.n_iter)
    labels = np.argmax(best.memberships, axis=1)
    report = DiscretizationReport(feature_id, best.c, scores, [float(v) for v in best.prototypes])
    return labels, best, report


def build_association_matrix(
    ds: Dataset,
    diagonal_policy: str = "unit",
    alpha: float = 2.0,
    seed: int = 0,
    c_range=range(2, 11),
) -> AssociationMatrix:
    """Symmetric feature-association matrix over the dataset's features."""
    m = ds.m
    nominal = ds.nominal_mask
    cache: dict[int, tuple[np.ndarray, DiscretizationReport]] = {}

    def as_nominal(j):
        if nominal[j]:
            return ds.X[:, j]
        if j not in cache:
            labels, _, rep = discretize_numeric(ds.X[:, j], c_range, alpha, seed, ds.feature_ids[j])
            cache[j] = (labels, rep)
        return cache[j][0]

    w = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            if not nominal[i] and not nominal[j]:
                v = pearson_abs(ds.X[:, i], ds.X[:, j])
            else:
                v = cramers_v(as_nominal(i), as_nominal(j))
            w[i, j] = w[j, i] = v
    np.fill_diagonal(w, 1.0 if diagonal_policy == "unit" else 0.0)
    reports = {ds.feature_ids[j]: rep for j, (_, rep) in sorted(cache.items())}
    return AssociationMatrix(w, ds.feature_ids, diagonal_policy, reports)
