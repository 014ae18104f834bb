from molbench.valency.stability import (
    AromaticBondsInKekulizedMode,
    AtomEnvironment,
    IncompatibleTable,
    MoleculeStability,
    StabilityMode,
    StabilityReport,
    atom_environment,
    evaluate_molecule,
    evaluate_stability,
    is_atom_stable,
    molecule_stability,
    stable_atoms,
    total_valence,
    valid_and_connected,
)
from molbench.valency.tables import (
    BUILTIN,
    LEGACY_ANNOTATIONS,
    TOTAL,
    TUPLE,
    AromaticInputForTotalMode,
    TableDiff,
    ValencyTable,
    ValencyTableError,
    build_valency_table,
    corrected_table,
    diff_tables,
    legacy_table,
    merge_tables,
    resolve_table,
    tuple_table,
)

__all__ = [
    "AromaticBondsInKekulizedMode", "AtomEnvironment", "IncompatibleTable", "MoleculeStability",
    "StabilityMode", "StabilityReport", "atom_environment", "evaluate_molecule",
    "evaluate_stability", "is_atom_stable", "molecule_stability", "stable_atoms",
    "total_valence", "valid_and_connected", "BUILTIN", "LEGACY_ANNOTATIONS", "TOTAL", "TUPLE",
    "AromaticInputForTotalMode", "TableDiff", "ValencyTable", "ValencyTableError",
    "build_valency_table", "corrected_table", "diff_tables", "legacy_table", "merge_tables",
    "resolve_table", "tuple_table",
]
