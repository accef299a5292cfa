"""Regenerate the stored spin-model-optimal rotation for the depolarizing channel.

    python scripts/make_rotation_data.py --n-starts 16 --seed 0

Writes src/unravel/data/depolarizing_rotation.json (about 10 minutes on one core).
"""

import argparse
from pathlib import Path

from unravel.channels import ChannelKind, rotation_to_json
from unravel.spin_model import optimize_basis_spin

DATA = Path(__file__).resolve().parents[1] / "src" / "unravel" / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-starts", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    res = optimize_basis_spin(ChannelKind.DEPOLARIZING, n_starts=args.n_starts, seed=args.seed, n_workers=args.workers)
    path = DATA / "depolarizing_rotation.json"
    path.write_text(rotation_to_json(res.kind, res.rotation) + "\n")
    print(f"p_c^(2) = {res.pc2:.6f} after {res.objective_evals} evaluations -> {path}")


if __name__ == "__main__":
    main()
