"""Valency lookup tables: built-in reference tables, derivation and (de)serialization.

Keys are ``(element, formal_charge, n_arom)``; values are sets of allowed
valences in half-units. For total-valence tables ``n_arom`` is always 0 and
the value is the full valence; for tuple tables the value is the
non-aromatic bond order ``v_other``.

Text format, one entry per line, sorted by key then value::

    element<TAB>charge<TAB>n_arom<TAB>v_other<TAB>count

``v_other`` is written in bond-order units (always integral). Built-in
tables carry a count of 0.
"""

from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from molbench.model import Element, Molecule

Key = tuple[Element, int, int]

TOTAL = "total"
TUPLE = "tuple"

# (element, charge) -> allowed valences, as printed in the reference tables
_CORRECTED = {
    ("H", 0): (1,),
    ("B", -1): (4,), ("B", 0): (3,),
    ("C", -1): (3,), ("C", 0): (4,), ("C", 1): (3,),
    ("N", -2): (1,), ("N", -1): (2,), ("N", 0): (3,), ("N", 1): (4,),
    ("O", -1): (1,), ("O", 0): (2,), ("O", 1): (3,),
    ("F", 0): (1,),
    ("Si", 0): (4,), ("Si", 1): (5,),
    ("P", 0): (3, 5), ("P", 1): (4,),
    ("S", -1): (1,), ("S", 0): (2, 3, 6), ("S", 1): (3,), ("S", 2): (4,), ("S", 3): (2, 5),
    ("Cl", 0): (1,), ("Cl", 1): (2,),
    ("Br", 0): (1,), ("Br", 1): (2,),
    ("I", 0): (1,), ("I", 1): (2,), ("I", 2): (3,),
    ("Bi", 0): (3,), ("Bi", 2): (5,),
}

_LEGACY = {
    ("H", -1): (0,), ("H", 0): (1,), ("H", 1): (0,),
    ("B", -1): (4,), ("B", 0): (3,),
    ("C", -1): (3,), ("C", 0): (3, 4), ("C", 1): (3,),
    ("N", -2): (1,), ("N", -1): (2,), ("N", 0): (2, 3), ("N", 1): (2, 3, 4),
    ("O", -1): (1,), ("O", 0): (2,), ("O", 1): (3,),
    ("F", -1): (0,), ("F", 0): (1,),
    ("Al", 0): (3,),
    ("Si", 0): (4,), ("Si", 1): (5,),
    ("P", 0): (3, 5), ("P", 1): (4,),
    ("S", -1): (1, 3), ("S", 0): (2, 6), ("S", 1): (2, 3), ("S", 2): (4,), ("S", 3): (5,),
    ("Cl", 0): (1,), ("Cl", 1): (2,),
    ("Br", 0): (1,), ("Br", 1): (2,),
    ("Se", 0): (2, 4, 6),
    ("I", 0): (1,), ("I", 1): (2,), ("I", 2): (3,),
    ("Hg", 0): (1, 2),
    ("Bi", 0): (3,), ("Bi", 2): (5,),
}

# red: chemically implausible entries; blue: observed but missing historically
LEGACY_ANNOTATIONS: dict[tuple[str, int, int], str] = {
    ("H", -1, 0): "red", ("H", 1, 0): "red",
    ("B", -1, 4): "blue",
    ("C", 0, 3): "red",
    ("N", 0, 2): "red", ("N", 1, 2): "red", ("N", 1, 3): "red",
    ("F", -1, 0): "red",
    ("Si", 1, 5): "blue",
    ("S", -1, 1): "blue", ("S", -1, 3): "red", ("S", 1, 2): "red",
    ("I", 2, 3): "blue",
}

# (element, n_arom, charge) -> allowed v_other
_TUPLE = {
    ("H", 0, 0): (1,),
    ("B", 0, -1): (4,), ("B", 0, 0): (3,),
    ("C", 0, -1): (3,), ("C", 0, 0): (4,), ("C", 0, 1): (3,),
    ("C", 2, -1): (1,), ("C", 2, 0): (2, 1), ("C", 2, 1): (1,),
    ("C", 3, -1): (0,), ("C", 3, 0): (0,), ("C", 3, 1): (0,),
    ("N", 0, -2): (1,), ("N", 0, -1): (2,), ("N", 0, 0): (3,), ("N", 0, 1): (4,),
    ("N", 2, -1): (0,), ("N", 2, 0): (0, 1), ("N", 2, 1): (0, 1, 2),
    ("N", 3, 0): (0,), ("N", 3, 1): (0,),
    ("O", 0, 0): (2,), ("O", 0, 1): (3,),
    ("O", 2, 0): (0,),
    ("F", 0, 0): (1,),
    ("Si", 0, 0): (4,), ("Si", 0, 1): (5,),
    ("P", 0, 0): (3, 5), ("P", 0, 1): (4,),
    ("S", 0, -1): (1,), ("S", 0, 0): (2, 3, 6), ("S", 0, 1): (3,), ("S", 0, 2): (4,), ("S", 0, 3): (2, 5),
    ("S", 2, 0): (0,), ("S", 2, 1): (0, 1),
    ("S", 3, 1): (0,),
    ("Cl", 0, 0): (1,), ("Cl", 0, 1): (2,),
    ("Br", 0, 0): (1,), ("Br", 0, 1): (2,),
    ("I", 0, 0): (1,), ("I", 0, 1): (2,), ("I", 0, 2): (3,),
    ("Bi", 0, 0): (3,), ("Bi", 0, 2): (5,),
}


class ValencyTableError(ValueError):
    pass


class AromaticInputForTotalMode(ValencyTableError):
    """A total-valence table was requested from a corpus containing aromatic bonds."""


@dataclass(frozen=True)
class ValencyTable:
    """Immutable mapping ``(element, charge, n_arom) -> allowed valences (half-units)``."""

    flavor: str
    key_mode: str
    entries: Mapping[Key, frozenset[int]]
    counts: Mapping[tuple[Element, int, int, int], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.key_mode not in (TOTAL, TUPLE):
            raise ValencyTableError(f"unknown key mode {self.key_mode!r}")
        norm = {}
        for (el, chg, n_arom), vals in self.entries.items():
            if self.key_mode == TOTAL and n_arom != 0:
                raise ValencyTableError("total-valence tables only hold n_arom = 0 entries")
            norm[(Element.parse(el), int(chg), int(n_arom))] = frozenset(int(v) for v in vals)
        object.__setattr__(self, "entries", norm)
        object.__setattr__(self, "counts", dict(self.counts))

    def allowed(self, element: Element, charge: int, n_arom: int = 0) -> frozenset[int]:
        """Allowed half-unit values for a key; empty when the key is absent."""
        return self.entries.get((element, charge, n_arom), frozenset())

    def __contains__(self, key: Key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def rows(self) -> list[tuple[str, int, int, int, int]]:
        """Sorted ``(element, charge, n_arom, valence, count)`` rows in bond-order units."""
        out = []
        for (el, chg, n_arom), vals in self.entries.items():
            for v in vals:
                out.append((el.value, chg, n_arom, v // 2, self.counts.get((el, chg, n_arom, v), 0)))
        out.sort()
        return out

    def dumps(self) -> str:
        return "".join(f"{e}\t{c}\t{n}\t{v}\t{k}\n" for e, c, n, v, k in self.rows())

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str, flavor: str = "file", key_mode: str | None = None) -> ValencyTable:
        entries: dict[Key, set[int]] = {}
        counts: dict[tuple[Element, int, int, int], int] = {}
        for n, line in enumerate(io.StringIO(text), 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValencyTableError(f"line {n}: expected 5 tab-separated fields")
            try:
                el = Element.parse(parts[0])
                chg, n_arom, v, count = (int(p) for p in parts[1:])
            except ValueError as exc:
                raise ValencyTableError(f"line {n}: {exc}") from None
            entries.setdefault((el, chg, n_arom), set()).add(2 * v)
            counts[(el, chg, n_arom, 2 * v)] = count
        if key_mode is None:
            key_mode = TUPLE if any(k[2] for k in entries) else TOTAL
        return cls(flavor, key_mode, entries, counts)

    @classmethod
    def load(cls, path: str | os.PathLike, key_mode: str | None = None) -> ValencyTable:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read(), flavor=f"file:{os.fspath(path)}", key_mode=key_mode)


def _half(table: Mapping) -> dict[Key, set[int]]:
    return {k: {2 * v for v in vals} for k, vals in table.items()}


def corrected_table() -> ValencyTable:
    return ValencyTable("corrected", TOTAL, _half({(e, c, 0): v for (e, c), v in _CORRECTED.items()}))


def legacy_table() -> ValencyTable:
    return ValencyTable("legacy", TOTAL, _half({(e, c, 0): v for (e, c), v in _LEGACY.items()}))


def tuple_table() -> ValencyTable:
    return ValencyTable("tuple", TUPLE, _half({(e, c, n): v for (e, n, c), v in _TUPLE.items()}))


BUILTIN = {
    "corrected": corrected_table,
    "legacy": legacy_table,
    "tuple": tuple_table,
}


def resolve_table(spec: str, key_mode: str | None = None) -> ValencyTable:
    """Resolve ``builtin:<name>`` or a path to a serialized table."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN:
            raise ValencyTableError(
                f"unknown built-in table {name!r}; choose from {', '.join(sorted(BUILTIN))}"
            )
        return BUILTIN[name]()
    return ValencyTable.load(spec, key_mode=key_mode)


def build_valency_table(molecules: Iterable, key_mode: str = TUPLE) -> ValencyTable:
    """Record every observed atom environment with its observation count.

    Accepts molecules or SDF records. Total mode requires aromatic-free input.
    """
    from molbench.valency.stability import atom_environment

    counter: Counter = Counter()
    for item in molecules:
        mol: Molecule = getattr(item, "molecule", item)
        if key_mode == TOTAL and mol.has_aromatic:
            raise AromaticInputForTotalMode(
                f"{mol.name!r} has aromatic bonds; kekulize before building a total-valence table"
            )
        for idx in range(len(mol.atoms)):
            env = atom_environment(mol, idx)
            if key_mode == TOTAL:
                counter[(env.element, env.formal_charge, 0, env.v_other)] += 1
            else:
                counter[(env.element, env.formal_charge, env.n_arom, env.v_other)] += 1
    entries: dict[Key, set[int]] = {}
    for el, chg, n_arom, v in counter:
        entries.setdefault((el, chg, n_arom), set()).add(v)
    return ValencyTable(f"derived-{key_mode}", key_mode, entries, dict(counter))


def merge_tables(a: ValencyTable, b: ValencyTable) -> ValencyTable:
    """Union of two derived tables with summed counts (order independent)."""
    if a.key_mode != b.key_mode:
        raise ValencyTableError("cannot merge tables with different key modes")
    entries: dict[Key, set[int]] = {k: set(v) for k, v in a.entries.items()}
    for k, v in b.entries.items():
        entries.setdefault(k, set()).update(v)
    counts = Counter(a.counts)
    counts.update(b.counts)
    return ValencyTable(a.flavor, a.key_mode, entries, dict(counts))


@dataclass
class TableDiff:
    added: list[tuple[str, int, int, int]]
    missing: list[tuple[str, int, int, int]]

    def as_dict(self) -> dict:
        return {"added": [list(r) for r in self.added], "missing": [list(r) for r in self.missing]}


def diff_tables(table: ValencyTable, reference: ValencyTable) -> TableDiff:
    """Entries in ``table`` absent from ``reference`` (added) and vice versa (missing)."""
    mine = {r[:4] for r in table.rows()}
    ref = {r[:4] for r in reference.rows()}
    return TableDiff(sorted(mine - ref), sorted(ref - mine))
