"""Run the full audit for a config and report wall-clock time per run.

    python scripts/run_audit.py configs/german.yaml --out-dir runs/german
"""

import argparse
import logging
import time
from pathlib import Path

from fcmbias.audit import run_audit, summary_table
from fcmbias.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--out-dir", type=Path)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out_dir or Path(cfg.out_dir)
    t0 = time.perf_counter()
    bundle = run_audit(cfg, out)
    print(summary_table(bundle))
    print(f"wall time {time.perf_counter() - t0:.1f}s, artifacts in {out}")


if __name__ == "__main__":
    main()
