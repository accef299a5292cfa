"""RUC I_3 sweep plus finite-size-scaling collapse for one unraveling.

Desk scale (minutes):
    python scripts/ruc_sweep.py --unraveling spin_optimized --L 8 12 16 --trajectories 200

Full-precision job (hours to days; 2^24 amplitudes at L = 24):
    python scripts/ruc_sweep.py --unraveling conventional --L 12 16 20 24 --trajectories 400 \
        --p 0.12 0.14 0.16 0.17 0.18 0.20 0.22 --workers 8
"""

import argparse
import json
from pathlib import Path

from unravel.analysis import curve_crossings, read_table_csv
from unravel.cli import main as cli

DEFAULT_P = {
    "conventional": [0.10, 0.14, 0.18, 0.22, 0.26],
    "spin_optimized": [0.03, 0.06, 0.09, 0.12, 0.15],
    "heuristic": [0.03, 0.06, 0.09, 0.12, 0.15],
    "minimal": [0.10, 0.14, 0.18, 0.22, 0.26],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--unraveling", default="conventional", choices=sorted(DEFAULT_P))
    ap.add_argument("--L", nargs="+", type=int, default=[8, 12, 16])
    ap.add_argument("--p", nargs="+", type=float)
    ap.add_argument("--trajectories", type=int, default=200)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="runs/ruc")
    args = ap.parse_args()

    out = Path(args.out) / args.unraveling
    ps = args.p or DEFAULT_P[args.unraveling]
    argv = ["ruc", "--unraveling", args.unraveling, "--L", *map(str, args.L), "--p", *map(str, ps),
            "--trajectories", str(args.trajectories), "--workers", str(args.workers),
            "--seed", str(args.seed), "--out", str(out)]
    if cli(argv) != 0:
        raise SystemExit("ruc sweep failed")
    table = read_table_csv(out / "summary.csv")
    for a, b, x in curve_crossings(table, 1.0):
        print(f"vN I_3 crossing L={a}/{b}: p = {x:.4f}")
    if len(set(args.L)) >= 3 and len(ps) >= 5:
        if cli(["collapse", str(out / "summary.csv"), "--out", str(out / "collapse")]) != 0:
            raise SystemExit("collapse failed")
        print(json.dumps(json.loads((out / "collapse" / "collapse.json").read_text())["results"], indent=2))


if __name__ == "__main__":
    main()
