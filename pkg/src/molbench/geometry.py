"""Bond length, bond angle and torsion deviations between conformer pairs.

Angle deltas use ``min(|a - b|, 180 - |a - b|)`` and torsion deltas
``min(|a - b|, 360 - |a - b|)``. The plain ``|a - b|`` for angles is kept
alongside as a diagnostic. Degenerate primitives (zero-length bonds,
collinear torsion atoms) are skipped and counted, never zero-filled.

The per-primitive kernels come from the compiled ``_geomkern`` extension
when it is importable, otherwise from the numpy implementation in
``_geom_fallback``. Set ``MOLBENCH_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from molbench import _geom_fallback
from molbench.model import Bond, Molecule, enumerate_angles, enumerate_torsions

if os.environ.get("MOLBENCH_PURE_PYTHON", "") not in ("", "0"):
    _backend = _geom_fallback
else:
    try:
        from molbench import _geomkern as _backend
    except ImportError:  # extension not built
        _backend = _geom_fallback

BACKEND = "cython" if _backend is not _geom_fallback else "python"

POOLED = "pooled"
PER_MOLECULE = "per-molecule"


class DegenerateAngle(ValueError):
    pass


class DegenerateTorsion(ValueError):
    pass


class TopologyMismatch(ValueError):
    pass


def get_backend(name: str | None = None):
    """Kernel module by name (``"cython"`` / ``"python"``); default is the active one."""
    if name is None:
        return _backend
    if name == "python":
        return _geom_fallback
    if name == "cython":
        from molbench import _geomkern
        return _geomkern
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class ConformerPair:
    initial: Molecule
    optimized: Molecule

    def __post_init__(self) -> None:
        if not self.initial.same_topology(self.optimized):
            raise TopologyMismatch(
                f"{self.initial.name!r} vs {self.optimized.name!r}: conformers differ in topology"
            )

    @property
    def name(self) -> str:
        return self.initial.name


def bond_angle(positions, i: int, j: int, k: int) -> float:
    """Angle at ``j`` in degrees, in [0, 180]."""
    ang, deg = _geom_fallback.bond_angles(np.asarray(positions, dtype=float), [(i, j, k)])
    if deg[0]:
        raise DegenerateAngle(f"zero-length bond vector in angle ({i}, {j}, {k})")
    return float(ang[0])


def dihedral(positions, i: int, j: int, k: int, l: int) -> float:  # noqa: E741
    """Signed dihedral in degrees, in (-180, 180]."""
    phi, deg = _geom_fallback.dihedrals(np.asarray(positions, dtype=float), [(i, j, k, l)])
    if deg[0]:
        raise DegenerateTorsion(f"collinear atoms in torsion ({i}, {j}, {k}, {l})")
    return float(phi[0])


def angle_difference(a: float, b: float) -> float:
    d = abs(a - b)
    return min(d, 180.0 - d)


def torsion_difference(a: float, b: float) -> float:
    d = abs(a - b)
    return min(d, 360.0 - d)


def bond_length_delta(pair: ConformerPair, bond: Bond | tuple[int, int]) -> float:
    i, j = (bond.i, bond.j) if isinstance(bond, Bond) else bond
    if not pair.initial.has_bond(i, j):
        raise ValueError(f"no bond between atoms {i} and {j}")
    pa, pb = pair.initial.positions, pair.optimized.positions
    return abs(math.dist(pa[i], pa[j]) - math.dist(pb[i], pb[j]))


def bond_angle_delta(pair: ConformerPair, triple: tuple[int, int, int]) -> float:
    a = bond_angle(pair.initial.positions, *triple)
    b = bond_angle(pair.optimized.positions, *triple)
    return angle_difference(a, b)


def torsion_delta(pair: ConformerPair, quad: tuple[int, int, int, int]) -> float:
    a = dihedral(pair.initial.positions, *quad)
    b = dihedral(pair.optimized.positions, *quad)
    return torsion_difference(a, b)


@dataclass
class MoleculeDeviation:
    """Per-primitive deltas for one conformer pair; degenerate entries removed."""

    name: str
    bond_deltas: np.ndarray
    angle_deltas: np.ndarray
    angle_raw_deltas: np.ndarray
    torsion_deltas: np.ndarray
    degenerate_angles: int = 0
    degenerate_torsions: int = 0

    @property
    def degenerate_count(self) -> int:
        return self.degenerate_angles + self.degenerate_torsions

    @staticmethod
    def _mean(xs: np.ndarray) -> float | None:
        return math.fsum(xs.tolist()) / len(xs) if len(xs) else None

    @property
    def mean_dr(self) -> float | None:
        return self._mean(self.bond_deltas)

    @property
    def mean_dtheta(self) -> float | None:
        return self._mean(self.angle_deltas)

    @property
    def mean_dphi(self) -> float | None:
        return self._mean(self.torsion_deltas)

    def row(self) -> dict:
        return {
            "name": self.name,
            "bond_count": len(self.bond_deltas),
            "mean_dr": self.mean_dr,
            "angle_count": len(self.angle_deltas),
            "mean_dtheta": self.mean_dtheta,
            "torsion_count": len(self.torsion_deltas),
            "mean_dphi": self.mean_dphi,
            "degenerate_count": self.degenerate_count,
        }


def molecule_deviations(pair: ConformerPair, backend=None) -> MoleculeDeviation:
    be = backend or _backend
    mol = pair.initial
    pairs = np.array([(b.i, b.j) for b in mol.bonds], dtype=np.int64).reshape(-1, 2)
    triples = np.array(enumerate_angles(mol), dtype=np.int64).reshape(-1, 3)
    quads = np.array(enumerate_torsions(mol), dtype=np.int64).reshape(-1, 4)
    pa = np.array(mol.positions, dtype=np.float64).reshape(-1, 3)
    pb = np.array(pair.optimized.positions, dtype=np.float64).reshape(-1, 3)
    dr, dth, raw, adeg, dph, tdeg = be.deviations(pa, pb, pairs, triples, quads)
    akeep = adeg == 0
    tkeep = tdeg == 0
    return MoleculeDeviation(
        name=mol.name,
        bond_deltas=np.asarray(dr),
        angle_deltas=np.asarray(dth)[akeep],
        angle_raw_deltas=np.asarray(raw)[akeep],
        torsion_deltas=np.asarray(dph)[tkeep],
        degenerate_angles=int((~akeep).sum()),
        degenerate_torsions=int((~tkeep).sum()),
    )


@dataclass
class DeviationSummary:
    pooling: str
    mean_bond_length_delta: float | None
    mean_bond_angle_delta: float | None
    mean_torsion_delta: float | None
    mean_bond_angle_raw_delta: float | None
    n_bonds: int = 0
    n_angles: int = 0
    n_torsions: int = 0
    n_degenerate: int = 0
    n_molecules: int = 0
    undefined: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "pooling": self.pooling,
            "mean_bond_length_delta": self.mean_bond_length_delta,
            "mean_bond_angle_delta": self.mean_bond_angle_delta,
            "mean_torsion_delta": self.mean_torsion_delta,
            "mean_bond_angle_raw_delta": self.mean_bond_angle_raw_delta,
            "n_bonds": self.n_bonds,
            "n_angles": self.n_angles,
            "n_torsions": self.n_torsions,
            "n_degenerate": self.n_degenerate,
            "n_molecules": self.n_molecules,
            "undefined": list(self.undefined),
        }


_FIELDS = (
    ("mean_bond_length_delta", "bond_deltas"),
    ("mean_bond_angle_delta", "angle_deltas"),
    ("mean_torsion_delta", "torsion_deltas"),
    ("mean_bond_angle_raw_delta", "angle_raw_deltas"),
)


def _summarize(devs: Sequence[MoleculeDeviation], pooling: str) -> DeviationSummary:
    if pooling not in (POOLED, PER_MOLECULE):
        raise ValueError(f"unknown pooling {pooling!r}")
    means: dict[str, float | None] = {}
    undefined = []
    for key, attr in _FIELDS:
        if pooling == POOLED:
            vals = [x for d in devs for x in getattr(d, attr).tolist()]
        else:
            vals = [math.fsum(a.tolist()) / len(a) for d in devs if len(a := getattr(d, attr))]
        if vals:
            means[key] = math.fsum(vals) / len(vals)
        else:
            means[key] = None
            undefined.append(key)
    return DeviationSummary(
        pooling=pooling,
        n_bonds=sum(len(d.bond_deltas) for d in devs),
        n_angles=sum(len(d.angle_deltas) for d in devs),
        n_torsions=sum(len(d.torsion_deltas) for d in devs),
        n_degenerate=sum(d.degenerate_count for d in devs),
        n_molecules=len(devs),
        undefined=undefined,
        **means,
    )


def summarize_deviations(
    pairs: Iterable[ConformerPair | MoleculeDeviation], pooling: str = POOLED
) -> DeviationSummary:
    """Average deltas over a dataset.

    ``pooled`` averages every primitive instance across all molecules;
    ``per-molecule`` averages within each molecule first. Means with no
    contributing instances are ``None`` and listed in ``undefined``.
    """
    devs = [p if isinstance(p, MoleculeDeviation) else molecule_deviations(p) for p in pairs]
    return _summarize(devs, pooling)


def fold_deviations(devs: Sequence[MoleculeDeviation], k: int = 1, pooling: str = POOLED,
                    allow_short: bool = False) -> dict:
    """Fold-aggregated bond / angle / torsion means as ``FoldedMetric`` dicts."""
    from molbench.stats import fold_metric

    out = {}
    names = {
        "mean_bond_length_delta": ("bond_length", "A"),
        "mean_bond_angle_delta": ("bond_angle", "deg"),
        "mean_torsion_delta": ("torsion", "deg"),
        "mean_bond_angle_raw_delta": ("bond_angle_raw", "deg"),
    }
    for key, (label, unit) in names.items():
        def reducer(chunk, key=key):
            v = getattr(_summarize(chunk, pooling), key)
            return math.nan if v is None else v
        reducer.__name__ = f"{pooling}-mean"
        out[label] = fold_metric(devs, k=k, reducer=reducer, name=label, unit=unit,
                                 allow_short=allow_short).as_dict()
    return out


CSV_COLUMNS = ["name", "bond_count", "mean_dr", "angle_count", "mean_dtheta",
               "torsion_count", "mean_dphi", "degenerate_count"]


def deviation_rows_csv(devs: Sequence[MoleculeDeviation]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for d in devs:
        row = d.row()
        w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                    for k, v in row.items()})
    return buf.getvalue()


def histogram_csv(values: Sequence[float], bins: int = 50, value_range=None) -> str:
    """Histogram of raw values as ``lo,hi,count`` rows, for external plotting."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=value_range)
    lines = ["lo,hi,count"]
    lines += [f"{float(edges[i])!r},{float(edges[i + 1])!r},{int(c)}" for i, c in enumerate(counts)]
    return "\n".join(lines) + "\n"


def pair_from_sdf(initial: Sequence, optimized: Sequence) -> list[ConformerPair]:
    """Match two record lists by position, checking topology equality."""
    if len(initial) != len(optimized):
        raise TopologyMismatch(f"{len(initial)} initial vs {len(optimized)} optimized records")
    return [ConformerPair(getattr(a, "molecule", a), getattr(b, "molecule", b))
            for a, b in zip(initial, optimized)]
