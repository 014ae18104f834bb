"""Dataset reprocessing: fragment filtering, kekulization, table regeneration."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Sequence

from molbench.chemio import SdfRecord
from molbench.kekulize import KekulizeFailure, kekulize_dataset
from molbench.model import n_components
from molbench.valency.tables import (
    TOTAL,
    TUPLE,
    ValencyTable,
    build_valency_table,
    corrected_table,
    diff_tables,
    tuple_table,
)


@dataclass
class CurationReport:
    input: int = 0
    removed_fragmented: int = 0
    kekulize_failures: int = 0
    output: int = 0
    removed_names: list[str] = field(default_factory=list)
    failures: list[KekulizeFailure] = field(default_factory=list)
    table_path: str | None = None

    @property
    def removed_fraction(self) -> float:
        return self.removed_fragmented / self.input if self.input else 0.0

    def as_dict(self) -> dict:
        """Fixed keys first; extras only when populated."""
        out = {
            "input": self.input,
            "removed_fragmented": self.removed_fragmented,
            "kekulize_failures": self.kekulize_failures,
            "output": self.output,
            "removed_fraction": self.removed_fraction,
        }
        if self.table_path:
            out["table_path"] = self.table_path
        return out


def filter_fragmented(records: Sequence[SdfRecord]) -> tuple[list, list, CurationReport]:
    """Split records into connected (kept) and multi-component (removed)."""
    kept, removed = [], []
    for rec in records:
        (removed if n_components(rec.molecule) > 1 else kept).append(rec)
    report = CurationReport(
        input=len(records),
        removed_fragmented=len(removed),
        output=len(kept),
        removed_names=[r.molecule.name for r in removed],
    )
    return kept, removed, report


def curate(records: Sequence[SdfRecord], workers: int = 1) -> tuple[list, CurationReport]:
    """Filter fragmented records, then kekulize the rest; order is preserved."""
    kept, _, report = filter_fragmented(list(records))
    curated, failures = kekulize_dataset(kept, workers=workers)
    report.kekulize_failures = len(failures)
    report.failures = failures
    report.output = len(curated)
    return curated, report


@dataclass
class RegeneratedTables:
    total: ValencyTable
    tuple: ValencyTable | None
    total_diff: dict
    tuple_diff: dict | None

    def write(self, directory: str | os.PathLike) -> dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {"total": os.path.join(directory, "valency_total.tsv")}
        self.total.dump(paths["total"])
        if self.tuple is not None:
            paths["tuple"] = os.path.join(directory, "valency_tuple.tsv")
            self.tuple.dump(paths["tuple"])
        return paths

    def diff_dict(self) -> dict:
        return {"total_vs_corrected": self.total_diff, "tuple_vs_builtin": self.tuple_diff}


def regenerate_tables(
    curated: Sequence[SdfRecord], pre_kekulized: Sequence[SdfRecord] | None = None
) -> RegeneratedTables:
    """Total-valence table from curated records, tuple table from the
    filtered but not yet kekulized stream, each diffed against the built-ins."""
    total = build_valency_table(curated, TOTAL)
    tup = build_valency_table(pre_kekulized, TUPLE) if pre_kekulized is not None else None
    return RegeneratedTables(
        total=total,
        tuple=tup,
        total_diff=diff_tables(total, corrected_table()).as_dict(),
        tuple_diff=diff_tables(tup, tuple_table()).as_dict() if tup is not None else None,
    )


def split_assignment(name: str, fractions: Sequence[float] = (0.8, 0.1, 0.1),
                     labels: Sequence[str] = ("train", "val", "test")) -> str:
    """Deterministic split label from a SHA-256 hash of the molecule name."""
    if len(fractions) != len(labels) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must match labels and sum to 1")
    h = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big") / 2 ** 64
    acc = 0.0
    for frac, label in zip(fractions, labels):
        acc += frac
        if h < acc:
            return label
    return labels[-1]
