"""Shapley feature attributions over a black-box prediction function.

A coalition's value is the mean prediction over background rows of the
hybrid record that takes coalition features from the explained instance
and all other features from the background row.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Predictor = Callable[[np.ndarray], np.ndarray]

EXACT_LIMIT = 15
_CHUNK_ROWS = 1 << 18


class ShapleyError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundSet:
    rows: np.ndarray
    seed: int = 0

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if rows.shape[0] < 1:
            raise ShapleyError("background set needs at least one row")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def sample(cls, X, k: int, seed: int) -> "BackgroundSet":
        """Seeded draw of ``k`` rows without replacement (all rows if fewer)."""
        X = np.asarray(X, dtype=np.float64)
        if k >= len(X):
            return cls(X.copy(), seed)
        rng = np.random.default_rng(seed)
        return cls(X[np.sort(rng.choice(len(X), size=k, replace=False))], seed)


@dataclass
class ShapExplanation:
    attributions: np.ndarray
    base_value: float
    prediction: float
    target_class: int
    feature_ids: list[str] = field(default_factory=list)
    method: str = "exact"

    @property
    def efficiency_gap(self) -> float:
        return float(np.sum(self.attributions) - (self.prediction - self.base_value))

    def metadata(self) -> dict:
        return {
            "base_value": self.base_value,
            "prediction": self.prediction,
            "target_class": self.target_class,
            "method": self.method,
        }

    def to_csv(self, path) -> None:
        ids = self.feature_ids or [f"F{i + 1}" for i in range(len(self.attributions))]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "attribution", "abs_attribution"])
            for fid, s in zip(ids, self.attributions):
                w.writerow([fid, repr(float(s)), repr(abs(float(s)))])

    def write(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=1)

    @classmethod
    def from_csv(cls, path) -> "ShapExplanation":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([float(r["attribution"]) for r in rows]),
            base_value=float("nan"),
            prediction=float("nan"),
            target_class=-1,
            feature_ids=[r["feature"] for r in rows],
            method="loaded",
        )


def _target(out, target_class: int) -> np.ndarray:
    out = np.asarray(out, dtype=np.float64)
    return out[:, target_class] if out.ndim == 2 else out


def coalition_values(predictor: Predictor, instance, masks, bg: BackgroundSet, target_class: int = 1) -> np.ndarray:
    """Marginal prediction for each row of a boolean coalition matrix."""
    x = np.asarray(instance, dtype=np.float64)
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    if masks.shape[1] != len(x) or bg.rows.shape[1] != len(x):
        raise ShapleyError("coalition, instance and background widths disagree")
    k = bg.rows.shape[0]
    per_chunk = max(1, _CHUNK_ROWS // k)
    out = np.empty(len(masks))
    for lo in range(0, len(masks), per_chunk):
        mk = masks[lo : lo + per_chunk]
        hybrid = np.where(mk[:, None, :], x[None, None, :], bg.rows[None, :, :])
        pred = _target(predictor(hybrid.reshape(-1, len(x))), target_class)
        out[lo : lo + len(mk)] = pred.reshape(len(mk), k).mean(axis=1)
    return out


def marginal_prediction(predictor: Predictor, instance, subset, bg: BackgroundSet, target_class: int = 1) -> float:
    """Prediction with features in ``subset`` fixed to the instance."""
    x = np.asarray(instance, dtype=np.float64)
    mask = np.zeros(len(x), dtype=bool)
    idx = list(subset)
    if any(i < 0 or i >= len(x) for i in idx):
        raise ShapleyError(f"feature index out of range in {idx}")
    mask[idx] = True
    return float(coalition_values(predictor, x, mask[None, :], bg, target_class)[0])


def _all_masks(m: int) -> np.ndarray:
    codes = np.arange(1 << m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def exact_shapley(
    predictor: Predictor,
    instance,
    bg: BackgroundSet,
    target_class: int = 1,
    feature_ids=None,
    exact_limit: int = EXACT_LIMIT,
) -> ShapExplanation:
    """Shapley values by enumerating all 2^m coalitions."""
    x = np.asarray(instance, dtype=np.float64)
    m = len(x)
    if m > exact_limit:
        raise ShapleyError(f"{m} features exceed the exact limit {exact_limit}; use kernel_shap")
    masks = _all_masks(m)
    v = coalition_values(predictor, x, masks, bg, target_class)
    sizes = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])
    codes = np.arange(1 << m)
    phi = np.zeros(m)
    for c in range(m):
        without = codes[(codes >> c) & 1 == 0]
        phi[c] = np.sum(weight[sizes[without]] * (v[without | (1 << c)] - v[without]))
    return ShapExplanation(phi, float(v[0]), float(v[-1]), target_class, list(feature_ids or []), "exact")


def shapley_kernel(m: int, s: int) -> float:
    """Kernel weight of a single coalition of size ``s`` (infinite at 0 and m)."""
    if s == 0 or s == m:
        return math.inf
    return (m - 1) / (math.comb(m, s) * s * (m - s))


def _subsets_of_size(m: int, s: int) -> np.ndarray:
    from itertools import combinations

    out = np.zeros((math.comb(m, s), m), dtype=bool)
    for r, comb in enumerate(combinations(range(m), s)):
        out[r, list(comb)] = True
    return out


def sample_coalitions(m: int, n_coalitions: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Proper coalitions and their regression weights.

    Sizes are visited from the extremes inwards; a size (paired with its
    complement size) is enumerated completely while the budget covers its
    share of the kernel mass, and the remaining budget is spent on paired
    random draws from the leftover sizes.
    """
    budget = n_coalitions - 2
    if n_coalitions >= (1 << m):
        masks = _all_masks(m)[1:-1]
        sizes = masks.sum(axis=1)
        return masks, np.array([shapley_kernel(m, s) for s in sizes])

    rng = np.random.default_rng(seed)
    half = (m - 1) // 2
    size_mass = np.array([(m - 1) / (s * (m - s)) for s in range(1, m)])
    pair_sizes = [(s, m - s) for s in range(1, half + 1)]
    if m % 2 == 0:
        pair_sizes.append((m // 2,))
    mass = np.array([sum(size_mass[s - 1] for s in ps) for ps in pair_sizes])
    mass /= mass.sum()
    # per-coalition weights below share the scale of shapley_kernel

    masks: list[np.ndarray] = []
    weights: list[float] = []
    left_mass = 1.0
    done = 0
    for ps, ms in zip(pair_sizes, mass):
        count = sum(math.comb(m, s) for s in ps)
        if budget * ms / left_mass + 1e-9 < count:
            break
        for s in ps:
            sub = _subsets_of_size(m, s)
            masks.append(sub)
            weights.extend([shapley_kernel(m, s)] * len(sub))
        budget -= count
        left_mass -= ms
        done += 1

    rest = pair_sizes[done:]
    if rest and budget > 0:
        rest_mass = mass[done:] / mass[done:].sum()
        drawn: dict[bytes, list] = {}
        n_draws = budget
        w_draw = left_mass * size_mass.sum() / n_draws
        while n_draws > 0:
            which = rng.choice(len(rest), p=rest_mass)
            ps = rest[which]
            s = ps[0] if len(ps) == 1 else ps[rng.integers(2)]
            z = np.zeros(m, dtype=bool)
            z[rng.choice(m, size=s, replace=False)] = True
            for cand in ((z, ~z) if n_draws >= 2 else (z,)):
                key = cand.tobytes()
                if key in drawn:
                    drawn[key][1] += w_draw
                else:
                    drawn[key] = [cand, w_draw]
                n_draws -= 1
        for z, w in drawn.values():
            masks.append(z[None, :])
            weights.append(w)
    if not masks:
        return np.zeros((0, m), dtype=bool), np.zeros(0)
    return np.vstack(masks), np.asarray(weights)


def kernel_shap(
    predictor: Predictor,
    instance,
    bg: BackgroundSet,
    n_coalitions: int = 4096,
    seed: int = 0,
    target_class: int = 1,
    feature_ids=None,
) -> ShapExplanation:
    """Shapley-kernel weighted least squares with exact efficiency.

    The empty and full coalitions enter as equality constraints: the base
    value is pinned to the empty coalition and the attributions are forced
    to sum to the prediction minus the base value.
    """
    x = np.asarray(instance, dtype=np.float64)
    m = len(x)
    if n_coalitions < m + 2:
        raise ShapleyError(f"n_coalitions must be at least m + 2 = {m + 2}")
    ends = np.array([np.zeros(m, bool), np.ones(m, bool)])
    base, pred = coalition_values(predictor, x, ends, bg, target_class)
    total = pred - base
    ids = list(feature_ids or [])
    if m == 1:
        return ShapExplanation(np.array([total]), float(base), float(pred), target_class, ids, "kernel")
    masks, weights = sample_coalitions(m, n_coalitions, seed)
    v = coalition_values(predictor, x, masks, bg, target_class)
    z = masks.astype(np.float64)
    y = v - base - z[:, -1] * total
    A = z[:, :-1] - z[:, -1:]
    sw = np.sqrt(weights)
    coef, _, rank, _ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    if rank < m - 1:
        raise ShapleyError(
            f"sampled design has rank {rank} < {m - 1}; increase n_coalitions"
        )
    phi = np.append(coef, total - coef.sum())
    return ShapExplanation(phi, float(base), float(pred), target_class, ids, "kernel")


def explain(predictor, instance, bg, method="auto", n_coalitions=4096, seed=0, target_class=1, feature_ids=None):
    m = len(np.asarray(instance))
    if method == "exact" or (method == "auto" and m <= EXACT_LIMIT and (1 << m) <= n_coalitions):
        return exact_shapley(predictor, instance, bg, target_class, feature_ids)
    if method in ("kernel", "auto"):
        return kernel_shap(predictor, instance, bg, n_coalitions, seed, target_class, feature_ids)
    raise ShapleyError(f"unknown method {method!r}")


def global_shap(
    predictor: Predictor,
    instances,
    bg: BackgroundSet,
    target_class: int = 1,
    method: str = "kernel",
    n_coalitions: int = 1024,
    seed: int = 0,
) -> np.ndarray:
    """Mean absolute attribution per feature over ``instances``."""
    X = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    if len(X) == 0:
        raise ShapleyError("no instances to aggregate")
    acc = np.zeros(X.shape[1])
    for x in X:
        acc += np.abs(explain(predictor, x, bg, method, n_coalitions, seed, target_class).attributions)
    return acc / len(X)
