"""Atom environments, valence rules and the stability / V&C metrics."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from molbench.model import Element, Molecule, n_components
from molbench.valency.tables import TOTAL, TUPLE, ValencyTable


class IncompatibleTable(ValueError):
    pass


class AromaticBondsInKekulizedMode(ValueError):
    pass


class StabilityMode(Enum):
    LEGACY_AROM1 = "legacy-arom1"
    AROM15 = "arom15"
    AROM_TUPLE = "arom-tuple"
    KEKULIZED = "kekulized"

    @property
    def key_mode(self) -> str:
        return TUPLE if self is StabilityMode.AROM_TUPLE else TOTAL

    @property
    def aromatic_half_units(self) -> int:
        """Half-unit contribution of one aromatic bond under total-valence rules."""
        return 2 if self is StabilityMode.LEGACY_AROM1 else 3


@dataclass(frozen=True)
class AtomEnvironment:
    element: Element
    formal_charge: int
    n_arom: int
    v_other: int  # half-units

    def __post_init__(self) -> None:
        if self.n_arom < 0:
            raise ValueError("n_arom must be non-negative")
        if self.v_other % 2:
            raise ValueError("v_other must be an even half-unit count")


def atom_environment(mol: Molecule, idx: int) -> AtomEnvironment:
    atom = mol.atoms[idx]
    n_arom = 0
    v_other = 0
    for b in mol.incident[idx]:
        hu = b.order.half_units
        if hu is None:
            n_arom += 1
        else:
            v_other += hu
    return AtomEnvironment(atom.element, atom.formal_charge, n_arom, v_other)


def total_valence(env: AtomEnvironment, aromatic_weight: float) -> int:
    """``v_other + n_arom * weight`` in half-units; weight must be 1 or 1.5."""
    if aromatic_weight == 1:
        per = 2
    elif aromatic_weight == 1.5:
        per = 3
    else:
        raise ValueError(f"aromatic weight must be 1 or 1.5, got {aromatic_weight!r}")
    return env.v_other + env.n_arom * per


def _check(mode: StabilityMode, table: ValencyTable) -> None:
    if table.key_mode != mode.key_mode:
        raise IncompatibleTable(
            f"mode {mode.value} needs a {mode.key_mode}-keyed table, got {table.flavor} ({table.key_mode})"
        )


def _env_stable(env: AtomEnvironment, mode: StabilityMode, table: ValencyTable) -> bool:
    if mode is StabilityMode.AROM_TUPLE:
        return env.v_other in table.allowed(env.element, env.formal_charge, env.n_arom)
    total = env.v_other + env.n_arom * mode.aromatic_half_units
    # odd half-unit totals are non-integral and never match an allowed valence
    return total % 2 == 0 and total in table.allowed(env.element, env.formal_charge, 0)


def is_atom_stable(mol: Molecule, idx: int, mode: StabilityMode, table: ValencyTable) -> bool:
    _check(mode, table)
    if mode is StabilityMode.KEKULIZED and mol.has_aromatic:
        raise AromaticBondsInKekulizedMode(f"{mol.name!r} contains aromatic bonds")
    return _env_stable(atom_environment(mol, idx), mode, table)


def stable_atoms(mol: Molecule, mode: StabilityMode, table: ValencyTable) -> list[bool]:
    _check(mode, table)
    if mode is StabilityMode.KEKULIZED and mol.has_aromatic:
        raise AromaticBondsInKekulizedMode(f"{mol.name!r} contains aromatic bonds")
    return [_env_stable(atom_environment(mol, i), mode, table) for i in range(len(mol.atoms))]


def molecule_stability(mol: Molecule, mode: StabilityMode, table: ValencyTable) -> tuple[float, bool]:
    """Fraction of stable atoms and whether every atom is stable.

    An empty molecule counts as fully stable.
    """
    flags = stable_atoms(mol, mode, table)
    if not flags:
        return 1.0, True
    n = sum(flags)
    return n / len(flags), n == len(flags)


def mode_for_table(table: ValencyTable) -> StabilityMode:
    return StabilityMode.AROM_TUPLE if table.key_mode == TUPLE else StabilityMode.KEKULIZED


def valid_and_connected(mol: Molecule, table: ValencyTable) -> bool:
    """All atoms stable and a single connected component.

    Total-valence tables apply kekulized rules (aromatic input rejected);
    tuple tables apply the aromatic-tuple rules.
    """
    _, ok = molecule_stability(mol, mode_for_table(table), table)
    return ok and n_components(mol) == 1


@dataclass(frozen=True)
class MoleculeStability:
    name: str
    n_atoms: int
    n_stable: int
    all_stable: bool
    valid_connected: bool

    @property
    def fraction(self) -> float:
        return self.n_stable / self.n_atoms if self.n_atoms else 1.0


def evaluate_molecule(mol: Molecule, mode: StabilityMode, table: ValencyTable) -> MoleculeStability:
    flags = stable_atoms(mol, mode, table)
    n = sum(flags)
    all_ok = n == len(flags)
    return MoleculeStability(
        name=mol.name,
        n_atoms=len(flags),
        n_stable=n,
        all_stable=all_ok,
        valid_connected=all_ok and n_components(mol) == 1,
    )


@dataclass
class StabilityReport:
    mode: StabilityMode
    table_flavor: str
    molecules: list[MoleculeStability]
    atom_stability: object  # FoldedMetric
    molecule_stability: object
    valid_connected: object

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "table": self.table_flavor,
            "n_molecules": len(self.molecules),
            "atom_stability": self.atom_stability.as_dict(),
            "molecule_stability": self.molecule_stability.as_dict(),
            "valid_and_connected": self.valid_connected.as_dict(),
        }


def evaluate_stability(
    molecules: Iterable[Molecule],
    mode: StabilityMode,
    table: ValencyTable,
    folds: int = 1,
    allow_short: bool = False,
) -> StabilityReport:
    """Per-molecule stability plus fold-aggregated atom stability, MS and V&C.

    Atom stability within a fold pools atoms across its molecules.
    """
    from molbench.stats import fold_metric

    per = [evaluate_molecule(getattr(m, "molecule", m), mode, table) for m in molecules]

    def pooled(chunk: Sequence[MoleculeStability]) -> float:
        atoms = sum(p.n_atoms for p in chunk)
        return sum(p.n_stable for p in chunk) / atoms if atoms else 1.0

    kw = dict(k=folds, allow_short=allow_short)
    return StabilityReport(
        mode=mode,
        table_flavor=table.flavor,
        molecules=per,
        atom_stability=fold_metric(per, reducer=pooled, name="atom_stability", **kw),
        molecule_stability=fold_metric(
            [float(p.all_stable) for p in per], name="molecule_stability", **kw
        ),
        valid_connected=fold_metric(
            [float(p.valid_connected) for p in per], name="valid_and_connected", **kw
        ),
    )
