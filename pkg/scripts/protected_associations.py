"""Association of every feature with the protected ones, on all rows.

Also prints the cluster count fuzzy c-means picked for each numeric
feature. Useful for checking how a recoding of a protected attribute
changes its associations.

    python scripts/protected_associations.py configs/german.yaml
"""

import argparse
from pathlib import Path

from fcmbias.audit import build_matrix, load_dataset, protected_ids
from fcmbias.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    args = ap.parse_args()

    cfg = load_config(args.config)
    ds = load_dataset(cfg)
    prot = protected_ids(ds, cfg)
    w = build_matrix(ds, cfg)
    cols = [ds.index_of(p) for p in prot]

    print(f"{'id':>4} {'feature':<22}" + "".join(f"{p:>8}" for p in prot))
    for j, f in enumerate(ds.schema):
        print(f"{f.fid:>4} {f.name[:22]:<22}" + "".join(f"{w.weights[j, c]:8.3f}" for c in cols))
    print()
    for fid, rep in w.discretizations.items():
        print(f"{fid}: c={rep.chosen_c} prototypes={[round(z, 3) for z in rep.prototypes]}")


if __name__ == "__main__":
    main()
