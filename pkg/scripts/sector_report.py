"""Print symmetry blocks, hidden sectors and <r> of a Stark ladder.

    python scripts/sector_report.py --L 6 --gamma 1
"""

import argparse
from collections import Counter

from hsfrag.hamiltonian import Stark, build_hamiltonian
from hsfrag.lattice import LadderGeometry, enumerate_sector
from hsfrag.spectral import hidden_sectors, mean_gap_ratio, symmetry_group


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--L", type=int, default=6)
    ap.add_argument("--Q", type=int, default=None)
    ap.add_argument("--gamma", type=float, default=1.0)
    args = ap.parse_args()
    Q = args.L if args.Q is None else args.Q
    basis = enumerate_sector(args.L, Q)
    H = build_hamiltonian(LadderGeometry.default(args.L), Stark(args.gamma), basis)
    print(f"L={args.L} Q={Q} gamma={args.gamma} dim={basis.dim}")
    print("commuting lattice symmetries:", [name for name, _ in symmetry_group(H)])
    found = hidden_sectors(H)
    if found is None:
        print("hidden sectors: none")
    else:
        sizes = Counter(found[1].tolist())
        print("hidden sector sizes (symmetry orbits merged):", sorted(sizes.values(), reverse=True))
    print(f"<r> resolved={mean_gap_ratio(H):.4f} lattice-only={mean_gap_ratio(H, resolve_hidden=False):.4f}")


if __name__ == "__main__":
    main()
