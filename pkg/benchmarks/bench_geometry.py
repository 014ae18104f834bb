"""Time the compiled geometry kernels against the numpy fallback.

Usage: python3 benchmarks/bench_geometry.py [--molecules N] [--atoms A] [--repeat R]
"""

from __future__ import annotations

import argparse
import random
import sys
import time

import numpy as np

from molbench import _geom_fallback
from molbench.model import Atom, Bond, Molecule, enumerate_angles, enumerate_torsions


def _tree(rng: random.Random, n: int) -> Molecule:
    pos = [(0.0, 0.0, 0.0)]
    bonds = []
    for k in range(1, n):
        p = rng.randrange(k)
        pos.append(tuple(c + rng.uniform(-1.5, 1.5) for c in pos[p]))
        bonds.append(Bond(p, k))
    return Molecule(f"t{n}", tuple(Atom("C", 0, x) for x in pos), tuple(bonds))


def _workload(n_mol: int, n_atoms: int, seed: int):
    rng = random.Random(seed)
    out = []
    for _ in range(n_mol):
        m = _tree(rng, n_atoms)
        pa = np.array(m.positions, dtype=np.float64)
        pb = pa + np.array([[rng.uniform(-0.2, 0.2) for _ in range(3)] for _ in range(n_atoms)])
        out.append((
            pa, pb,
            np.array([(b.i, b.j) for b in m.bonds], dtype=np.int64).reshape(-1, 2),
            np.array(enumerate_angles(m), dtype=np.int64).reshape(-1, 3),
            np.array(enumerate_torsions(m), dtype=np.int64).reshape(-1, 4),
        ))
    return out


def _time(kern, work, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for args in work:
            kern.deviations(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--molecules", type=int, default=2000)
    ap.add_argument("--atoms", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    work = _workload(args.molecules, args.atoms, args.seed)
    n_prims = sum(len(w[2]) + len(w[3]) + len(w[4]) for w in work)
    backends = {"python": _geom_fallback}
    try:
        from molbench import _geomkern
        backends["cython"] = _geomkern
    except ImportError:
        print("compiled kernels not built; timing the fallback only", file=sys.stderr)

    results = {name: _time(k, work, args.repeat) for name, k in backends.items()}
    print(f"{args.molecules} molecules x {args.atoms} atoms, {n_prims} primitives per pass")
    for name, t in results.items():
        print(f"  {name:<7} {t * 1e3:9.1f} ms   {n_prims / t / 1e6:7.2f} M primitives/s")
    if "cython" in results:
        print(f"  speedup {results['python'] / results['cython']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
