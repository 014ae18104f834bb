"""Kekulization: replace aromatic bonds with an explicit single/double assignment.

Each aromatic atom may take at most one double bond from its aromatic
bonds. Whether it needs one is decided against the corrected valency
table: with every aromatic bond single the atom has some total valence
``t``; it *requires* a double if only ``t + 1`` is allowed, *forbids* one if
only ``t`` is allowed, and is *flexible* if both are. The double bonds then
form a matching on the aromatic subgraph covering every required atom,
found by backtracking.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from molbench.model import Bond, BondOrder, Molecule
from molbench.valency.stability import atom_environment
from molbench.valency.tables import ValencyTable, corrected_table

_CORRECTED = corrected_table()


class KekulizeError(ValueError):
    kind = "KekulizeError"


class NoKekuleStructure(KekulizeError):
    kind = "NoKekuleStructure"


class UnkekulizableAtom(KekulizeError):
    kind = "UnkekulizableAtom"


def _all_single(mol: Molecule, idx: int) -> int:
    env = atom_environment(mol, idx)
    return env.v_other + 2 * env.n_arom


def double_bond_options(mol: Molecule, idx: int, table: ValencyTable = _CORRECTED) -> frozenset[int]:
    """Numbers of aromatic double bonds (0 and/or 1) that give an allowed valence."""
    atom = mol.atoms[idx]
    allowed = table.allowed(atom.element, atom.formal_charge, 0)
    base = _all_single(mol, idx)
    return frozenset(d for d in (0, 1) if base + 2 * d in allowed)


def double_bond_demand(mol: Molecule, idx: int, table: ValencyTable = _CORRECTED) -> int:
    """1 if the atom needs one aromatic double bond, 0 if all-single already fits.

    Measured against the smallest allowed valence at or above the all-single
    total.

    Raises:
        UnkekulizableAtom: no allowed valence is reachable with at most one double.
    """
    atom = mol.atoms[idx]
    base = _all_single(mol, idx)
    above = [v for v in table.allowed(atom.element, atom.formal_charge, 0) if v >= base]
    if not above or min(above) - base > 2:
        raise UnkekulizableAtom(
            f"{mol.name!r}: atom {idx} ({atom.element.value}{atom.formal_charge:+d}) "
            f"cannot reach an allowed valence from {base / 2:g}"
        )
    return (min(above) - base) // 2


def _find_matching(
    required: set[int], eligible: set[int], adj: dict[int, list[int]]
) -> dict[int, int] | None:
    """Match every required atom to an eligible aromatic neighbour.

    Most-constrained atom first, ties broken by aromatic degree then index;
    partners are tried required-first, then by index.
    """
    mate: dict[int, int] = {}

    def options(a: int) -> list[int]:
        return [b for b in adj[a] if b in eligible and b not in mate]

    def pick() -> int | None:
        best = None
        best_key = None
        for a in required:
            if a in mate:
                continue
            key = (len(options(a)), len(adj[a]), a)
            if best_key is None or key < best_key:
                best, best_key = a, key
        return best

    def solve() -> bool:
        a = pick()
        if a is None:
            return True
        cands = sorted(options(a), key=lambda b: (b not in required, b))
        for b in cands:
            mate[a] = b
            mate[b] = a
            if solve():
                return True
            del mate[a]
            del mate[b]
        return False

    return mate if solve() else None


def kekulize(mol: Molecule, table: ValencyTable = _CORRECTED) -> Molecule:
    """Return a copy of ``mol`` with every aromatic bond made single or double.

    Molecules without aromatic bonds come back unchanged. Non-aromatic bonds
    are never touched.

    Raises:
        UnkekulizableAtom: an aromatic atom has no allowed valence within reach.
        NoKekuleStructure: no matching covers every atom that needs a double.
    """
    if not mol.has_aromatic:
        return mol
    arom_atoms = sorted({x for b in mol.bonds if b.order.is_aromatic for x in (b.i, b.j)})
    required: set[int] = set()
    eligible: set[int] = set()
    for idx in arom_atoms:
        opts = double_bond_options(mol, idx, table)
        if not opts:
            atom = mol.atoms[idx]
            raise UnkekulizableAtom(
                f"{mol.name!r}: aromatic atom {idx} ({atom.element.value}{atom.formal_charge:+d}) "
                f"has no allowed valence with at most one double bond"
            )
        if 1 in opts:
            eligible.add(idx)
            if 0 not in opts:
                required.add(idx)

    adj: dict[int, list[int]] = {a: [] for a in arom_atoms}
    for b in mol.bonds:
        if b.order.is_aromatic:
            adj[b.i].append(b.j)
            adj[b.j].append(b.i)
    for a in adj:
        adj[a].sort()

    mate = _find_matching(required, eligible, adj)
    if mate is None:
        raise NoKekuleStructure(
            f"{mol.name!r}: {len(required)} atoms need a double bond but no matching covers them"
        )
    bonds = []
    for b in mol.bonds:
        if b.order.is_aromatic:
            order = BondOrder.DOUBLE if mate.get(b.i) == b.j else BondOrder.SINGLE
            bonds.append(Bond(b.i, b.j, order))
        else:
            bonds.append(b)
    return mol.with_bonds(bonds)


@dataclass(frozen=True)
class KekulizeFailure:
    name: str
    kind: str
    message: str = ""

    def line(self) -> str:
        return f"{self.name}\t{self.kind}"


def _kekulize_record(rec):
    try:
        return type(rec)(kekulize(rec.molecule), dict(rec.properties)), None
    except KekulizeError as exc:
        return None, KekulizeFailure(rec.molecule.name, exc.kind, str(exc))


def kekulize_dataset(records: Iterable, workers: int = 1) -> tuple[list, list[KekulizeFailure]]:
    """Kekulize every record, keeping input order; failures are returned, not raised."""
    records = list(records)
    if workers > 1 and len(records) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_kekulize_record, records, chunksize=64))
    else:
        results = [_kekulize_record(r) for r in records]
    kept = [r for r, f in results if r is not None]
    failures = [f for r, f in results if f is not None]
    return kept, failures


def format_failure_log(failures: Sequence[KekulizeFailure]) -> str:
    return "".join(f.line() + "\n" for f in failures)
