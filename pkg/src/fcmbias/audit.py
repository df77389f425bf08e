"""End-to-end implicit-bias audit.

load -> split -> tune on train/validation -> refit on train+validation ->
association matrix on train+validation -> explain selected test rows ->
FCM simulations seeded with the attributions -> report.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import association as assoc
from .config import AuditConfig
from .dataset import Dataset, SplitIndices, load_csv, load_schema, normalize_numeric, stratified_split, subsample
from .fcm import EigenReport, SimulationTrace, eigen_diagnostics, simulate
from .forest import ForestConfig, ForestModel, fit_forest, tune, write_tuning_report
from .shapley import BackgroundSet, ShapExplanation, explain, global_shap

log = logging.getLogger(__name__)


class AuditError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage: %s", self.name)

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, AuditError):
            raise AuditError(self.name, exc) from exc
        return False


@dataclass
class SelectedInstance:
    row: int  # index into the full dataset
    label: int
    role: str  # "positive" | "negative" | class name

    @property
    def name(self) -> str:
        return f"{self.role}_row{self.row}"


def build_activation_vector(expl: ShapExplanation, mode: str = "absolute") -> tuple[np.ndarray, bool]:
    """Initial FCM activation from an explanation, plus an all-zero flag."""
    s = np.asarray(expl.attributions, dtype=np.float64)
    if mode == "absolute":
        a0 = np.abs(s)
    elif mode == "signed":
        a0 = s.copy()
    elif mode == "max_normalized":
        peak = np.max(np.abs(s))
        a0 = np.abs(s) / peak if peak > 0 else np.zeros_like(s)
    else:
        raise ValueError(f"unknown activation mode {mode!r}")
    zero = not np.any(a0)
    if zero:
        log.warning("all-zero attributions: the FCM starts from the zero vector")
    return a0, zero


def select_instances(model: ForestModel, test: Dataset, rows, positive: int, seed: int) -> list[SelectedInstance]:
    """One correctly classified test row per class, positive class first."""
    if test.n == 0:
        raise ValueError("empty test view")
    rows = np.asarray(rows)
    rng = np.random.default_rng(seed)
    pred = model.predict(test.X)
    order = [positive] + [k for k in range(len(test.class_names)) if k != positive]
    binary = len(test.class_names) == 2
    out = []
    for k in order:
        ok = np.flatnonzero((test.y == k) & (pred == k))
        if len(ok) == 0:
            raise ValueError(f"no correctly classified test rows of class {test.class_names[k]!r}")
        pick = int(rng.choice(ok))
        role = ("positive" if k == positive else "negative") if binary else f"class{test.class_names[k]}"
        out.append(SelectedInstance(int(rows[pick]), k, role))
    return out


def _ranks(values: np.ndarray, ids: list[str]) -> dict[str, int]:
    order = np.argsort(-values, kind="stable")
    return {ids[j]: r + 1 for r, j in enumerate(order)}


def normalize_to_max(final: np.ndarray) -> np.ndarray:
    peak = np.max(final)
    return final / peak if peak > 0 else np.zeros_like(final)


@dataclass
class PhiRun:
    phi: float
    trace: SimulationTrace
    initial: np.ndarray
    final: np.ndarray
    normalized: np.ndarray
    shap_rank: dict[str, int]
    fcm_rank: dict[str, int]
    protected_delta: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "phi": self.phi,
            "termination": self.trace.termination.to_dict(),
            "t_end": self.trace.t_end,
            "degenerate": self.trace.degenerate,
            "initial": self.initial.tolist(),
            "final": self.final.tolist(),
            "normalized_final": self.normalized.tolist(),
            "shap_rank": self.shap_rank,
            "fcm_rank": self.fcm_rank,
            "protected_delta": self.protected_delta,
        }


@dataclass
class InstanceReport:
    instance: SelectedInstance
    explanation: ShapExplanation
    zero_activation: bool
    runs: list[PhiRun] = field(default_factory=list)

    def run_at(self, phi: float) -> PhiRun:
        for r in self.runs:
            if r.phi == phi:
                return r
        raise KeyError(phi)

    def to_dict(self, class_names) -> dict:
        e = self.explanation
        return {
            "instance": self.instance.name,
            "row": self.instance.row,
            "class": class_names[self.instance.label],
            "role": self.instance.role,
            "prediction": e.prediction,
            "base_value": e.base_value,
            "target_class": class_names[e.target_class],
            "attributions": e.attributions.tolist(),
            "zero_activation": self.zero_activation,
            "runs": [r.to_dict() for r in self.runs],
        }


@dataclass
class BiasReport:
    feature_ids: list[str]
    protected: list[str]
    instances: list[InstanceReport]
    class_names: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "feature_ids": self.feature_ids,
            "protected": self.protected,
            "instances": [r.to_dict(self.class_names) for r in self.instances],
        }


def run_instance(expl: ShapExplanation, w, phis, cfg: AuditConfig, ids, protected) -> InstanceReport:
    a0, zero = build_activation_vector(expl, cfg.fcm.activation)
    pidx = [ids.index(p) for p in protected]
    rep = InstanceReport(None, expl, zero)  # instance filled by caller
    shap_mag = np.abs(expl.attributions)
    for phi in phis:
        tr = simulate(w, a0, cfg.fcm.simulation(phi))
        final = tr.final
        rep.runs.append(
            PhiRun(
                phi=phi,
                trace=tr,
                initial=a0,
                final=final,
                normalized=normalize_to_max(final),
                shap_rank=_ranks(shap_mag, ids),
                fcm_rank=_ranks(final, ids),
                protected_delta={ids[j]: float(final[j] - a0[j]) for j in pidx},
            )
        )
    return rep


def protected_delta_summary(report: BiasReport, protected=None) -> list[dict]:
    """Per instance, protected feature and phi: initial, final and delta.

    Each row also carries whether that feature's final activation is
    nondecreasing along the sorted phi grid.
    """
    protected = list(protected or report.protected)
    ids = report.feature_ids
    rows = []
    for inst in report.instances:
        runs = sorted(inst.runs, key=lambda r: r.phi)
        for fid in protected:
            j = ids.index(fid)
            finals = [r.final[j] for r in runs]
            mono = bool(all(b >= a for a, b in zip(finals, finals[1:])))
            for r in runs:
                rows.append(
                    {
                        "instance": inst.instance.name,
                        "feature": fid,
                        "phi": r.phi,
                        "initial": float(r.initial[j]),
                        "final": float(r.final[j]),
                        "delta": float(r.final[j] - r.initial[j]),
                        "monotone_in_phi": mono,
                    }
                )
    return rows


@dataclass
class AuditBundle:
    config: AuditConfig
    dataset: Dataset
    split: SplitIndices
    tuning: list[tuple[ForestConfig, float]]
    best: ForestConfig
    model: ForestModel
    test_accuracy: float
    matrix: assoc.AssociationMatrix
    eigen: EigenReport
    global_importance: np.ndarray
    report: BiasReport
    positive: int

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ids = self.dataset.feature_ids
        self.matrix.to_csv(out / "association.csv")
        (out / "association.json").write_text(self.matrix.to_json() + "\n")
        (out / "discretization.json").write_text(
            json.dumps({k: v.to_dict() for k, v in self.matrix.discretizations.items()}, indent=1) + "\n"
        )
        write_tuning_report(self.tuning, out / "tuning.csv")
        with open(out / "global_shap.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "mean_abs_attribution"])
            for fid, v in zip(ids, self.global_importance):
                w.writerow([fid, repr(float(v))])
        for inst in self.report.instances:
            name = inst.instance.name
            inst.explanation.write(out / f"shap_{name}.csv", out / f"shap_{name}.json")
            for run in inst.runs:
                run.trace.write(out / f"trace_{name}_phi{run.phi:g}.csv", out / f"trace_{name}_phi{run.phi:g}.json", ids)
        deltas = protected_delta_summary(self.report)
        with open(out / "protected_deltas.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(deltas[0]) if deltas else ["instance"], lineterminator="\n")
            w.writeheader()
            w.writerows(deltas)
        meta = {
            "config": self.config.to_dict(),
            "seeds": {
                "split": self.split.seed,
                "forest": self.best.seed,
                "association": self.config.seed,
                "background": self.config.seed,
                "kernel_shap": self.config.seed,
                "instances": self.config.seed,
            },
            "n_rows": self.dataset.n,
            "split_sizes": [len(self.split.train), len(self.split.validation), len(self.split.test)],
            "best_forest": self.best.label(),
            "test_accuracy": self.test_accuracy,
            "positive_class": self.dataset.class_names[self.positive],
            "eigen": self.eigen.to_dict(),
            "global_shap": dict(zip(ids, self.global_importance.tolist())),
            "report": self.report.to_dict(),
        }
        (out / "bias_report.json").write_text(json.dumps(meta, indent=1) + "\n")
        (out / "summary.txt").write_text(summary_table(self))
        return out


def summary_table(bundle: AuditBundle) -> str:
    ids = bundle.dataset.feature_ids
    names = {f.fid: f.name for f in bundle.dataset.schema}
    prot = set(bundle.report.protected)
    lines = [
        f"rows={bundle.dataset.n} best_forest={bundle.best.label()} test_accuracy={bundle.test_accuracy:.4f}",
        f"dominant eigenvalue={bundle.eigen.dominant_value:.4f} second={bundle.eigen.second_value:.4f} "
        f"strictly_dominant={bundle.eigen.strictly_dominant}",
        "",
    ]
    for inst in bundle.report.instances:
        run = max(inst.runs, key=lambda r: r.phi)
        e = inst.explanation
        lines.append(
            f"{inst.instance.name} prediction={e.prediction:.4f} base={e.base_value:.4f} "
            f"phi={run.phi:g} termination={run.trace.termination.kind} t_end={run.trace.t_end}"
        )
        lines.append(f"{'id':>5} {'feature':<20} {'|shap|':>9} {'rank':>4} {'final':>9} {'norm':>7} {'rank':>4}")
        for j, fid in enumerate(ids):
            mark = "*" if fid in prot else " "
            lines.append(
                f"{fid:>5}{mark}{names[fid][:20]:<20} {abs(e.attributions[j]):9.5f} {run.shap_rank[fid]:4d} "
                f"{run.final[j]:9.5f} {run.normalized[j]:7.4f} {run.fcm_rank[fid]:4d}"
            )
        lines.append("")
    return "\n".join(lines)


def load_dataset(cfg: AuditConfig) -> Dataset:
    ds = load_csv(cfg.dataset.path, load_schema(cfg.dataset.schema))
    if cfg.dataset.max_rows:
        ds = subsample(ds, cfg.dataset.max_rows, cfg.seed)
    if cfg.dataset.normalize:
        ds = normalize_numeric(ds)
    return ds


def positive_index(ds: Dataset, cfg: AuditConfig) -> int:
    name = cfg.shapley.positive_class
    if name is None:
        return 1 if len(ds.class_names) > 1 else 0
    if name not in ds.class_names:
        raise ValueError(f"positive class {name!r} not among {ds.class_names}")
    return ds.class_names.index(name)


def protected_ids(ds: Dataset, cfg: AuditConfig) -> list[str]:
    ids = ds.feature_ids
    prot = [ids[ds.index_of(p)] for p in cfg.protected] if cfg.protected else ds.protected_ids
    if not prot:
        raise ValueError("no protected features declared")
    return prot


def fit_pipeline_model(ds: Dataset, split: SplitIndices, cfg: AuditConfig):
    train, val = ds.take(split.train), ds.take(split.validation)
    best, scores = tune(train, val, cfg.forest.grid(cfg.seed))
    model = fit_forest(ds.take(split.pool), best)
    return best, scores, model


def build_matrix(pool: Dataset, cfg: AuditConfig) -> assoc.AssociationMatrix:
    a = cfg.association
    return assoc.build_association_matrix(
        pool, a.diagonal, a.alpha, cfg.seed, range(a.c_min, a.c_max + 1)
    )


def run_audit(cfg: AuditConfig, out_dir=None) -> AuditBundle:
    """Run the whole pipeline; writes the artifact bundle when ``out_dir`` is given."""
    cfg.validate()
    seed = cfg.seed
    with _stage("load"):
        ds = load_dataset(cfg)
        prot = protected_ids(ds, cfg)
        positive = positive_index(ds, cfg)
        ids = ds.feature_ids
    with _stage("split"):
        split = stratified_split(ds, cfg.split.fractions, seed)
        pool = ds.take(split.pool)
        test = ds.take(split.test)
    with _stage("train"):
        best, scores, model = fit_pipeline_model(ds, split, cfg)
        test_acc = model.accuracy(test)
        log.info("best forest %s, test accuracy %.4f", best.label(), test_acc)
    with _stage("associate"):
        matrix = build_matrix(pool, cfg)
    with _stage("explain"):
        sh = cfg.shapley
        bg = BackgroundSet.sample(pool.X, sh.background_size, seed)
        gbg = BackgroundSet.sample(pool.X, sh.global_background_size, seed)
        gX = pool.X
        if sh.global_instances is not None and sh.global_instances < pool.n:
            rng = np.random.default_rng(seed)
            gX = pool.X[np.sort(rng.choice(pool.n, sh.global_instances, replace=False))]
        g_imp = global_shap(model.predict_proba, gX, gbg, positive, sh.method, sh.global_n_coalitions, seed)
        chosen = select_instances(model, test, split.test, positive, seed)
        expls = [
            explain(model.predict_proba, ds.X[c.row], bg, sh.method, sh.n_coalitions, seed, positive, ids)
            for c in chosen
        ]
    with _stage("simulate"):
        eig = eigen_diagnostics(matrix.weights, np.abs(expls[0].attributions))
        reports = []
        for c, e in zip(chosen, expls):
            rep = run_instance(e, matrix.weights, cfg.fcm.phis, cfg, ids, prot)
            rep.instance = c
            reports.append(rep)
    report = BiasReport(ids, prot, reports, ds.class_names)
    bundle = AuditBundle(
        cfg, ds, split, scores, best, model, test_acc, matrix, eig, g_imp, report, positive
    )
    if out_dir is not None:
        with _stage("write"):
            bundle.write(out_dir)
    return bundle
