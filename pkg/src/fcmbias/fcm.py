"""Quasi-nonlinear fuzzy cognitive map with the norm-rescaling transfer.

Each step maps ``A(t)`` to ``phi * f(A(t) W) + (1 - phi) * A(0)``, where
``f`` projects a non-zero vector onto the unit sphere and sends the zero
vector to zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

ZERO_NORM = 1e-12


class FCMError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    phi: float = 0.8
    max_iter: int = 100
    fp_tol: float = 1e-6
    cycle_window: int = 20

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise FCMError(f"phi must lie in [0, 1], got {self.phi}")
        if self.max_iter < 1:
            raise FCMError("max_iter must be at least 1")
        if self.fp_tol <= 0:
            raise FCMError("fp_tol must be positive")
        if self.cycle_window < 2:
            raise FCMError("cycle_window must be at least 2")


@dataclass(frozen=True)
class Termination:
    kind: str  # "fixed_point" | "limit_cycle" | "chaos"
    t_alpha: int | None = None
    period: int | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t_alpha": self.t_alpha, "period": self.period}


@dataclass
class SimulationTrace:
    states: list[np.ndarray]
    raw_states: list[np.ndarray]
    termination: Termination
    phi: float
    # iterations whose raw vector hit the transfer function's zero case
    zero_raw_steps: list[int] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t_end(self) -> int:
        return len(self.states) - 1

    @property
    def degenerate(self) -> bool:
        """True when the run touched the transfer function's discontinuity."""
        return bool(self.zero_raw_steps)

    def metadata(self) -> dict:
        return {
            "phi": self.phi,
            "termination": self.termination.to_dict(),
            "t_end": self.t_end,
            "zero_raw_steps": self.zero_raw_steps,
            "degenerate": self.degenerate,
        }

    def to_csv(self, path, feature_ids=None) -> None:
        m = len(self.states[0])
        ids = list(feature_ids) if feature_ids is not None else [f"C{i + 1}" for i in range(m)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + ids)
            for t, a in enumerate(self.states):
                w.writerow([t] + [repr(float(v)) for v in a])

    def write(self, csv_path, json_path, feature_ids=None) -> None:
        self.to_csv(csv_path, feature_ids)
        with open(json_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=1)


@dataclass(frozen=True)
class EigenReport:
    dominant_value: float
    second_value: float
    dominant_vector: np.ndarray
    strictly_dominant: bool
    a0_component: float
    a0_aligned: bool

    def to_dict(self) -> dict:
        return {
            "dominant_value": self.dominant_value,
            "second_value": self.second_value,
            "dominant_vector": self.dominant_vector.tolist(),
            "strictly_dominant": self.strictly_dominant,
            "a0_component": self.a0_component,
            "a0_aligned": self.a0_aligned,
        }


def _weights(w) -> np.ndarray:
    w = getattr(w, "weights", w)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise FCMError("weight matrix must be square")
    return w


def transfer(raw) -> np.ndarray:
    """Project onto the unit sphere; (numerically) zero vectors map to zero."""
    raw = np.asarray(raw, dtype=np.float64)
    norm = np.linalg.norm(raw)
    if norm < ZERO_NORM:
        return np.zeros_like(raw)
    return raw / norm


def reasoning_step(a_t, a_0, w, phi: float) -> np.ndarray:
    """One application of the quasi-nonlinear reasoning rule."""
    w = _weights(w)
    a_t = np.asarray(a_t, dtype=np.float64)
    a_0 = np.asarray(a_0, dtype=np.float64)
    if a_t.shape != (w.shape[0],) or a_0.shape != a_t.shape:
        raise FCMError(f"activation length must be {w.shape[0]}")
    if not 0.0 <= phi <= 1.0:
        raise FCMError(f"phi must lie in [0, 1], got {phi}")
    if phi == 0.0:
        return a_0.copy()
    return phi * transfer(a_t @ w) + (1.0 - phi) * a_0


def simulate(w, a_0, cfg: SimulationConfig = SimulationConfig()) -> SimulationTrace:
    """Iterate the reasoning rule from ``a_0`` and classify the regime.

    Stops at the first fixed point (sup-norm change below ``fp_tol``), or
    at the first cycle of period ``p <= cycle_window`` that repeats for a
    full extra period; otherwise runs ``max_iter`` steps and reports chaos.
    """
    w = _weights(w)
    a_0 = np.asarray(a_0, dtype=np.float64)
    if a_0.shape != (w.shape[0],):
        raise FCMError(f"activation length must be {w.shape[0]}")
    if not np.all(np.isfinite(a_0)):
        raise FCMError("initial activation must be finite")
    phi, eps = cfg.phi, cfg.fp_tol
    states = [a_0.copy()]
    raws: list[np.ndarray] = []
    zero_steps: list[int] = []

    def close(a, b):
        return np.max(np.abs(a - b)) < eps

    for t in range(1, cfg.max_iter + 1):
        raw = states[-1] @ w
        if np.linalg.norm(raw) < ZERO_NORM:
            zero_steps.append(t)
        nxt = a_0.copy() if phi == 0.0 else phi * transfer(raw) + (1.0 - phi) * a_0
        raws.append(raw)
        states.append(nxt)
        if close(states[t], states[t - 1]):
            return SimulationTrace(states, raws, Termination("fixed_point", t - 1), phi, zero_steps)
        for p in range(2, min(cfg.cycle_window, t // 2) + 1):
            if all(close(states[s], states[s - p]) for s in range(t - p, t + 1)):
                return SimulationTrace(
                    states, raws, Termination("limit_cycle", t - 2 * p, p), phi, zero_steps
                )
    return SimulationTrace(states, raws, Termination("chaos"), phi, zero_steps)


def eigen_diagnostics(w, a_0, gap_tol: float = 1e-9) -> EigenReport:
    """Spectral conditions for a unique fixed point at ``phi = 1``."""
    w = _weights(w)
    if not np.allclose(w, w.T, rtol=0.0, atol=1e-12):
        raise FCMError("eigen diagnostics require a symmetric weight matrix")
    vals, vecs = np.linalg.eigh(w)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    v = vecs[:, 0]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    second = float(vals[1]) if len(vals) > 1 else 0.0
    proj = float(np.asarray(a_0, dtype=np.float64) @ v)
    return EigenReport(
        dominant_value=float(vals[0]),
        second_value=second,
        dominant_vector=v,
        strictly_dominant=bool(abs(vals[0]) - abs(second) > gap_tol),
        a0_component=proj,
        a0_aligned=bool(abs(proj) > gap_tol),
    )
