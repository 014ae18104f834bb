"""Fold-based aggregation and report assembly.

Folds are contiguous blocks in input order. Spread across folds is the
population standard deviation.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence, Union

Reducer = Union[str, Callable[[Sequence[Any]], float]]

STD_KIND = "population"


class EmptyInput(ValueError):
    pass


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class FoldedMetric:
    name: str
    per_fold: tuple[float, ...]
    mean: float
    std: float
    fold_size: int
    reducer: str
    unit: str = ""
    n_values: int = 0

    @property
    def k(self) -> int:
        return len(self.per_fold)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "unit": self.unit,
            "mean": self.mean,
            "std": self.std,
            "per_fold": list(self.per_fold),
            "folds": self.k,
            "fold_size": self.fold_size,
            "n_values": self.n_values,
            "reducer": self.reducer,
            "std_kind": STD_KIND,
        }


def _pstd(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    m = math.fsum(xs) / len(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))


def fold_metric(
    values: Sequence[Any],
    k: int = 5,
    reducer: Reducer = "mean",
    name: str = "",
    unit: str = "",
    allow_short: bool = False,
) -> FoldedMetric:
    """Reduce each of ``k`` contiguous folds, then take mean and population std.

    Args:
        values: Per-molecule values in fold-assignment order.
        k: Number of folds.
        reducer: ``"mean"``, ``"median"`` or a callable applied to each fold's slice.
        allow_short: Permit a final short fold when ``len(values)`` is not a
            multiple of ``k`` (fold size is then rounded up).

    Raises:
        EmptyInput: no values.
        FoldError: bad ``k`` or uneven folds without ``allow_short``.
    """
    values = list(values)
    n = len(values)
    if n == 0:
        raise EmptyInput(f"{name or 'metric'}: no values to fold")
    if k < 1:
        raise FoldError(f"fold count must be >= 1, got {k}")
    if n % k:
        if not allow_short:
            raise FoldError(f"{n} values do not split into {k} equal folds")
        size = -(-n // k)
    else:
        size = n // k

    if reducer == "mean":
        fn, label = (lambda xs: math.fsum(xs) / len(xs)), "mean"
    elif reducer == "median":
        fn, label = statistics.median, "median"
    elif callable(reducer):
        fn, label = reducer, getattr(reducer, "__name__", "custom")
    else:
        raise ValueError(f"unknown reducer {reducer!r}")

    per_fold = tuple(float(fn(values[s:s + size])) for s in range(0, n, size))
    return FoldedMetric(
        name=name,
        per_fold=per_fold,
        mean=math.fsum(per_fold) / len(per_fold),
        std=_pstd(per_fold),
        fold_size=size,
        reducer=label,
        unit=unit,
        n_values=n,
    )


# ---------------------------------------------------------------- reports

# metric key -> display scale, decimals, unit label
_FORMATS = {
    "atom_stability": (1.0, 3, ""),
    "molecule_stability": (1.0, 3, ""),
    "valid_and_connected": (1.0, 3, ""),
    "bond_length": (100.0, 2, "x1e-2 A"),
    "bond_angle": (1.0, 2, "deg"),
    "torsion": (1.0, 2, "deg"),
    "bond_angle_raw": (1.0, 2, "deg"),
    "median_delta_e_relax": (1.0, 2, "kcal/mol"),
    "mean_delta_e_relax": (1.0, 2, "kcal/mol"),
    "mean_delta_e_relax_ff": (1.0, 2, "kcal/mol"),
}


@dataclass
class EvalReport:
    stability: dict | None = None
    geometry: dict | None = None
    energy: dict | None = None
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "stability": self.stability,
            "geometry": self.geometry,
            "energy": self.energy,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return dumps(self.as_dict())

    def to_text(self) -> str:
        lines = []
        for section in ("stability", "geometry", "energy"):
            body = getattr(self, section)
            lines.append(f"[{section}]")
            if body is None:
                lines.append("  (none)")
                continue
            for key in sorted(body):
                val = body[key]
                if isinstance(val, dict) and "mean" in val and "std" in val:
                    lines.append(f"  {key:<24} {format_metric(key, val)}")
            for key in ("mode", "table", "pooling", "optimizer"):
                if key in body:
                    lines.append(f"  {key:<24} {body[key]}")
        return "\n".join(lines) + "\n"


def format_metric(key: str, metric: dict) -> str:
    scale, dec, unit = _FORMATS.get(key, (1.0, 3, ""))
    mean, std = metric.get("mean"), metric.get("std")
    if mean is None:
        return "n/a"
    text = f"{mean * scale:.{dec}f} +/- {std * scale:.{dec}f}"
    return f"{text} {unit}".rstrip()


def dumps(obj: Any) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, NaN mapped to null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _clean(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def assemble_report(
    stability: dict | None = None,
    geometry: dict | None = None,
    energy: dict | None = None,
    metadata: dict | None = None,
) -> EvalReport:
    meta = {"std_kind": STD_KIND, "fold_assignment": "contiguous blocks in input order"}
    meta.update(metadata or {})
    return EvalReport(stability, geometry, energy, meta)


def merge_reports(parts: Sequence[dict]) -> EvalReport:
    """Combine section JSON documents; later non-null sections win."""
    out = assemble_report()
    for part in parts:
        for section in ("stability", "geometry", "energy"):
            if part.get(section) is not None:
                setattr(out, section, part[section])
        out.metadata.update(part.get("metadata") or {})
    return out
