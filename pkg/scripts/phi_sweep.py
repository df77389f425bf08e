"""Protected-neuron final activations over a fine phi grid.

Reads the association matrix and the stored explanations from an audit
bundle directory, so no model has to be retrained.

    python scripts/phi_sweep.py runs/german --protected F9 F13 F20
"""

import argparse
from pathlib import Path

import numpy as np

from fcmbias.association import AssociationMatrix
from fcmbias.fcm import SimulationConfig, simulate
from fcmbias.shapley import ShapExplanation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("bundle", type=Path)
    ap.add_argument("--protected", nargs="+", required=True)
    ap.add_argument("--steps", type=int, default=11)
    args = ap.parse_args()

    w = AssociationMatrix.from_csv(args.bundle / "association.csv")
    idx = [w.feature_ids.index(p) for p in args.protected]
    phis = np.linspace(0.0, 1.0, args.steps)
    for path in sorted(args.bundle.glob("shap_*.csv")):
        a0 = np.abs(ShapExplanation.from_csv(path).attributions)
        print(path.stem[len("shap_"):])
        print(f"{'phi':>6} {'regime':<12}" + "".join(f"{p:>9}" for p in args.protected))
        for phi in phis:
            tr = simulate(w.weights, a0, SimulationConfig(phi=float(phi)))
            print(f"{phi:6.2f} {tr.termination.kind:<12}" + "".join(f"{tr.final[j]:9.4f}" for j in idx))
        print()


if __name__ == "__main__":
    main()
