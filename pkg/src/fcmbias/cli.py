"""Command-line entry point.

Stage subcommands write their artifacts into the output directory so that
later stages can pick them up; ``audit`` runs everything in one go.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import audit as A
from .association import AssociationMatrix
from .config import AuditConfig, load_config
from .dataset import stratified_split, write_csv
from .forest import ForestModel, write_tuning_report
from .shapley import BackgroundSet, ShapExplanation, explain

log = logging.getLogger("fcmbias")


def _prepare(cfg: AuditConfig):
    ds = A.load_dataset(cfg)
    split = stratified_split(ds, cfg.split.fractions, cfg.seed)
    return ds, split


def cmd_ingest(cfg: AuditConfig, out: Path) -> None:
    ds, split = _prepare(cfg)
    write_csv(ds, out / "dataset.csv")
    parts = {"train": split.train.tolist(), "validation": split.validation.tolist(), "test": split.test.tolist()}
    (out / "split.json").write_text(json.dumps({"seed": split.seed, **parts}) + "\n")
    print(f"rows={ds.n} features={ds.m} train={len(split.train)} validation={len(split.validation)} test={len(split.test)}")


def cmd_associate(cfg: AuditConfig, out: Path) -> None:
    ds, split = _prepare(cfg)
    matrix = A.build_matrix(ds.take(split.pool), cfg)
    matrix.to_csv(out / "association.csv")
    (out / "association.json").write_text(matrix.to_json() + "\n")
    (out / "discretization.json").write_text(
        json.dumps({k: v.to_dict() for k, v in matrix.discretizations.items()}, indent=1) + "\n"
    )
    print(f"association matrix {ds.m}x{ds.m} written to {out / 'association.csv'}")


def _train(cfg: AuditConfig, out: Path):
    ds, split = _prepare(cfg)
    best, scores, model = A.fit_pipeline_model(ds, split, cfg)
    write_tuning_report(scores, out / "tuning.csv")
    model.save(out / "model.json")
    return ds, split, model, best


def cmd_train(cfg: AuditConfig, out: Path) -> None:
    ds, split, model, best = _train(cfg, out)
    acc = model.accuracy(ds.take(split.test))
    print(f"best forest {best.label()} test accuracy {acc:.4f}")


def cmd_explain(cfg: AuditConfig, out: Path) -> None:
    if (out / "model.json").exists():
        log.info("reusing %s", out / "model.json")
        ds, split = _prepare(cfg)
        model = ForestModel.load(out / "model.json")
    else:
        ds, split, model, _ = _train(cfg, out)
    positive = A.positive_index(ds, cfg)
    pool, test = ds.take(split.pool), ds.take(split.test)
    bg = BackgroundSet.sample(pool.X, cfg.shapley.background_size, cfg.seed)
    chosen = A.select_instances(model, test, split.test, positive, cfg.seed)
    sh = cfg.shapley
    for c in chosen:
        e = explain(model.predict_proba, ds.X[c.row], bg, sh.method, sh.n_coalitions, cfg.seed, positive, ds.feature_ids)
        e.write(out / f"shap_{c.name}.csv", out / f"shap_{c.name}.json")
        print(f"{c.name}: prediction={e.prediction:.4f} base={e.base_value:.4f}")


def cmd_simulate(cfg: AuditConfig, out: Path) -> None:
    if not (out / "association.csv").exists():
        raise SystemExit(f"{out / 'association.csv'} missing; run 'associate' first")
    shap_files = sorted(out.glob("shap_*.csv"))
    if not shap_files:
        raise SystemExit(f"no shap_*.csv in {out}; run 'explain' first")
    matrix = AssociationMatrix.from_csv(out / "association.csv", cfg.association.diagonal)
    ids = matrix.feature_ids
    protected = cfg.protected or []
    for path in shap_files:
        name = path.stem[len("shap_"):]
        expl = ShapExplanation.from_csv(path)
        rep = A.run_instance(expl, matrix.weights, cfg.fcm.phis, cfg, ids, protected)
        for run in rep.runs:
            stem = f"trace_{name}_phi{run.phi:g}"
            run.trace.write(out / f"{stem}.csv", out / f"{stem}.json", ids)
            deltas = " ".join(f"{k}={v:+.4f}" for k, v in run.protected_delta.items())
            print(f"{name} phi={run.phi:g} {run.trace.termination.kind} t_end={run.trace.t_end} {deltas}")


def cmd_audit(cfg: AuditConfig, out: Path) -> None:
    bundle = A.run_audit(cfg, out)
    print(A.summary_table(bundle))


COMMANDS = {
    "ingest": (cmd_ingest, "load, normalize and split the dataset"),
    "associate": (cmd_associate, "build the feature association matrix"),
    "train": (cmd_train, "tune and fit the random forest"),
    "explain": (cmd_explain, "Shapley attributions for the selected test rows"),
    "simulate": (cmd_simulate, "run the FCM on stored attributions"),
    "audit": (cmd_audit, "full pipeline"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcmbias", description="Implicit-bias audit with fuzzy cognitive maps.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="YAML config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--phi", type=float, nargs="+", help="override the phi grid")
        p.add_argument("--out-dir", type=Path, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.phi is not None:
        cfg.fcm.phis = list(args.phi)
    if args.out_dir is not None:
        cfg.out_dir = str(args.out_dir)
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        COMMANDS[args.command][0](cfg, out)
    except A.AuditError as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
