"""Coverage of the collapse bootstrap intervals on synthetic scaling data.

    python scripts/collapse_coverage.py --reps 100 --noise 0.02
"""

import argparse

import numpy as np

from unravel.analysis import fss_collapse, synthetic_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--noise", type=float, default=0.02)
    ap.add_argument("--p-c", type=float, default=0.15)
    ap.add_argument("--nu", type=float, default=1.3)
    ap.add_argument("--n-boot", type=int, default=200)
    args = ap.parse_args()

    hit_pc = hit_nu = both = 0
    for rep in range(args.reps):
        table = synthetic_table(np.random.default_rng(1000 + rep), p_c=args.p_c, nu=args.nu, noise=args.noise)
        res = fss_collapse(table, n_boot=args.n_boot, seed=rep)
        a = res.p_c_ci[0] <= args.p_c <= res.p_c_ci[1]
        b = res.nu_ci[0] <= args.nu <= res.nu_ci[1]
        hit_pc, hit_nu, both = hit_pc + a, hit_nu + b, both + (a and b)
        print(f"{rep},{res.p_c:.5f},{res.nu:.4f},{int(a)},{int(b)}", flush=True)
    print(f"coverage p_c {hit_pc}/{args.reps}, nu {hit_nu}/{args.reps}, both {both}/{args.reps}")


if __name__ == "__main__":
    main()
