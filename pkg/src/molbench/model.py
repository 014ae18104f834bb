"""Core molecular data types and graph helpers.

Hydrogens are always explicit atoms. Valence arithmetic elsewhere in the
package uses integer half-units (single bond = 2, aromatic at 1.5 = 3) so
that fractional aromatic contributions compare exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

MIN_CHARGE = -2
MAX_CHARGE = 3


class ChemModelError(ValueError):
    """Raised when a molecule violates the data-model invariants."""


class UnknownElementError(ChemModelError):
    pass


class Element(str, Enum):
    H = "H"
    B = "B"
    C = "C"
    N = "N"
    O = "O"
    F = "F"
    Al = "Al"
    Si = "Si"
    P = "P"
    S = "S"
    Cl = "Cl"
    Br = "Br"
    Se = "Se"
    I = "I"  # noqa: E741
    Hg = "Hg"
    Bi = "Bi"

    @classmethod
    def parse(cls, symbol: str | Element) -> Element:
        if isinstance(symbol, Element):
            return symbol
        try:
            return cls(symbol.strip())
        except ValueError:
            raise UnknownElementError(f"unsupported element symbol {symbol!r}") from None

    def __str__(self) -> str:
        return self.value


class BondOrder(Enum):
    """Bond kinds; values are the V2000 bond-type codes."""

    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def half_units(self) -> int | None:
        """Valence contribution in half-units, ``None`` for aromatic bonds."""
        if self is BondOrder.AROMATIC:
            return None
        return 2 * self.value

    @property
    def is_aromatic(self) -> bool:
        return self is BondOrder.AROMATIC


@dataclass(frozen=True)
class Atom:
    element: Element
    formal_charge: int = 0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "element", Element.parse(self.element))
        charge = self.formal_charge
        if isinstance(charge, bool) or int(charge) != charge:
            raise ChemModelError(f"formal charge must be an integer, got {charge!r}")
        if not MIN_CHARGE <= charge <= MAX_CHARGE:
            raise ChemModelError(
                f"formal charge {charge} outside supported range [{MIN_CHARGE}, {MAX_CHARGE}]"
            )
        object.__setattr__(self, "formal_charge", int(charge))
        pos = tuple(float(c) for c in self.position)
        if len(pos) != 3 or not all(math.isfinite(c) for c in pos):
            raise ChemModelError(f"position must be 3 finite numbers, got {self.position!r}")
        object.__setattr__(self, "position", pos)

    def with_position(self, position: Sequence[float]) -> Atom:
        return Atom(self.element, self.formal_charge, tuple(position))


@dataclass(frozen=True)
class Bond:
    """Undirected bond; indices are normalized so that ``i < j``."""

    i: int
    j: int
    order: BondOrder = BondOrder.SINGLE

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise ChemModelError(f"self-bond on atom {self.i}")
        if self.i < 0 or self.j < 0:
            raise ChemModelError(f"negative atom index in bond ({self.i}, {self.j})")
        if self.i > self.j:
            a, b = self.j, self.i
            object.__setattr__(self, "i", a)
            object.__setattr__(self, "j", b)
        if not isinstance(self.order, BondOrder):
            object.__setattr__(self, "order", BondOrder(self.order))

    def other(self, idx: int) -> int:
        if idx == self.i:
            return self.j
        if idx == self.j:
            return self.i
        raise ValueError(f"atom {idx} not in bond ({self.i}, {self.j})")


@dataclass(frozen=True)
class Molecule:
    """Immutable molecule: ordered atoms plus a typed bond list."""

    name: str
    atoms: tuple[Atom, ...] = ()
    bonds: tuple[Bond, ...] = ()
    _pairs: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.atoms)
        seen = set()
        for b in self.bonds:
            if b.j >= n:
                raise ChemModelError(f"bond ({b.i}, {b.j}) references atom beyond count {n}")
            key = (b.i, b.j)
            if key in seen:
                raise ChemModelError(f"duplicate bond between atoms {b.i} and {b.j}")
            seen.add(key)
        object.__setattr__(self, "_pairs", frozenset(seen))

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append(b.j)
            adj[b.j].append(b.i)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def incident(self) -> tuple[tuple[Bond, ...], ...]:
        inc: list[list[Bond]] = [[] for _ in self.atoms]
        for b in self.bonds:
            inc[b.i].append(b)
            inc[b.j].append(b)
        return tuple(tuple(x) for x in inc)

    @property
    def positions(self) -> list[tuple[float, float, float]]:
        return [a.position for a in self.atoms]

    @property
    def net_charge(self) -> int:
        return sum(a.formal_charge for a in self.atoms)

    @property
    def has_aromatic(self) -> bool:
        return any(b.order.is_aromatic for b in self.bonds)

    def has_bond(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._pairs

    def bond_between(self, i: int, j: int) -> Bond | None:
        for b in self.incident[i]:
            if b.other(i) == j:
                return b
        return None

    def with_positions(self, positions: Sequence[Sequence[float]]) -> Molecule:
        if len(positions) != len(self.atoms):
            raise ChemModelError(
                f"got {len(positions)} positions for {len(self.atoms)} atoms"
            )
        atoms = tuple(a.with_position(p) for a, p in zip(self.atoms, positions))
        return Molecule(self.name, atoms, self.bonds)

    def with_bonds(self, bonds: Iterable[Bond]) -> Molecule:
        return Molecule(self.name, self.atoms, tuple(bonds))

    def same_topology(self, other: Molecule) -> bool:
        """True when elements, charges and bond lists agree (positions ignored)."""
        if len(self.atoms) != len(other.atoms):
            return False
        for a, b in zip(self.atoms, other.atoms):
            if a.element is not b.element or a.formal_charge != b.formal_charge:
                return False
        key = lambda b: (b.i, b.j, b.order.value)  # noqa: E731
        return sorted(map(key, self.bonds)) == sorted(map(key, other.bonds))


def connected_components(mol: Molecule) -> list[list[int]]:
    """Partition atom indices into bond-connected components.

    Components are listed in order of their smallest atom index and each is
    sorted ascending.
    """
    n = len(mol.atoms)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for b in mol.bonds:
        ri, rj = find(b.i), find(b.j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for idx in range(n):
        groups.setdefault(find(idx), []).append(idx)
    return [groups[r] for r in sorted(groups)]


def n_components(mol: Molecule) -> int:
    return len(connected_components(mol))


def enumerate_angles(mol: Molecule) -> list[tuple[int, int, int]]:
    """All bonded triples ``(i, j, k)`` centred on ``j`` with ``i < k``."""
    out = []
    for j, nbrs in enumerate(mol.neighbors):
        for a in range(len(nbrs)):
            for b in range(a + 1, len(nbrs)):
                out.append((nbrs[a], j, nbrs[b]))
    return out


def enumerate_torsions(mol: Molecule) -> list[tuple[int, int, int, int]]:
    """All simple bonded paths ``i-j-k-l``, one per reversal pair (``j < k``)."""
    out = []
    nbrs = mol.neighbors
    for b in sorted(mol.bonds, key=lambda b: (b.i, b.j)):
        j, k = b.i, b.j
        for i in nbrs[j]:
            if i == k:
                continue
            for l in nbrs[k]:  # noqa: E741
                if l == j or l == i:
                    continue
                out.append((i, j, k, l))
    return out
