"""External geometry-optimizer bridge and relaxation-energy pipeline.

This is the only module that spawns processes. Every energy leaving it is in
kcal/mol; Hartree values from tools are converted with
``HARTREE_TO_KCAL = 627.509474``.

Optimizer kinds
---------------
``external-xtb``
    Runs ``{binary} {input} --opt --gfn 2 --chrg {charge}`` in a private
    scratch directory. The final energy is the last ``TOTAL ENERGY`` line,
    the initial energy is the cycle-1 ``total energy`` of the optimization
    log (the input geometry), falling back to a separate single-point run
    when the log does not show it. The geometry is read from ``xtbopt.xyz``.
    ``MOLBENCH_XTB`` overrides the binary path.
``external-command``
    Any tool run from a template containing ``{input}`` and ``{charge}``.
    It must print ``E_INITIAL_HARTREE <float>`` and ``E_FINAL_HARTREE
    <float>`` and write ``optimized.xyz`` in its working directory. Printing
    ``NOT_CONVERGED`` marks the run as not converged.
``mock``
    Deterministic stand-in. Each atom moves toward the centroid ``c`` by a
    fraction ``f``: ``x' = x + f (c - x)``. Energy is
    ``E(x) = k * sum_i |x_i - x'_i|^2`` kcal/mol with stiffness ``k``, so
    ``e_final = 0`` and ``dE_relax = k f^2 sum_i |c - x_i|^2``. Bond lengths
    shrink by the factor ``1 - f``; angles and torsions are unchanged.
"""

from __future__ import annotations

import logging
import math
import os
import re
import shlex
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from molbench.chemio import ChemIOError, XyzFrame, parse_xyz, write_xyz
from molbench.geometry import ConformerPair, MoleculeDeviation, molecule_deviations
from molbench.model import Molecule

log = logging.getLogger(__name__)

HARTREE_TO_KCAL = 627.509474
ANOMALY_TOLERANCE = 1e-3  # kcal/mol

XTB_TEMPLATE = "{binary} {input} --opt --gfn 2 --chrg {charge}"
XTB_SP_TEMPLATE = "{binary} {input} --gfn 2 --chrg {charge}"

KINDS = ("external-xtb", "external-command", "mock")


class OptimizerError(RuntimeError):
    kind = "OptimizerError"


class ProcessFailure(OptimizerError):
    kind = "ProcessFailure"


class ParseFailure(OptimizerError):
    kind = "ParseFailure"


class NotConverged(OptimizerError):
    kind = "NotConverged"


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    command: str = ""
    single_point: str | None = None
    timeout: float = 600.0
    workdir: str | None = None
    keep_workdir: bool = False
    binary: str | None = None
    mock_fraction: float = 0.0
    mock_stiffness: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "external-xtb" and not self.command:
            object.__setattr__(self, "command", XTB_TEMPLATE)
            if self.single_point is None:
                object.__setattr__(self, "single_point", XTB_SP_TEMPLATE)
        if self.kind != "mock":
            for ph in ("{input}", "{charge}"):
                if ph not in self.command:
                    raise ValueError(f"command template must contain {ph}: {self.command!r}")
        if not 0.0 <= self.mock_fraction <= 1.0:
            raise ValueError("mock fraction must lie in [0, 1]")

    @property
    def method_tag(self) -> str:
        if self.kind == "mock":
            return f"mock(fraction={self.mock_fraction!r},stiffness={self.mock_stiffness!r})"
        if self.kind == "external-xtb":
            return "GFN2-xTB"
        return "external-command"

    def resolved_binary(self) -> str:
        return os.environ.get("MOLBENCH_XTB") or self.binary or "xtb"

    def describe(self) -> dict:
        out = {"kind": self.kind, "method": self.method_tag}
        if self.kind != "mock":
            out.update(command=self.command, single_point=self.single_point, timeout=self.timeout)
            if self.kind == "external-xtb":
                out["binary"] = self.resolved_binary()
        return out


def parse_optimizer(text: str, **overrides) -> OptimizerSpec:
    """Build a spec from a short string.

    ``mock`` / ``mock:identity``, ``mock:shift`` (fraction 0.1),
    ``mock:shift=F`` or ``mock:shift=F,k=K``, ``xtb``, ``cmd:<template>``.
    """
    if text.startswith("mock"):
        rest = text[4:].lstrip(":")
        fraction, stiffness = 0.0, 1.0
        if rest and rest != "identity":
            for part in rest.split(","):
                key, _, val = part.partition("=")
                if key == "shift":
                    fraction = float(val) if val else 0.1
                elif key == "k":
                    stiffness = float(val)
                else:
                    raise ValueError(f"bad mock option {part!r}")
        overrides.setdefault("mock_fraction", fraction)
        overrides.setdefault("mock_stiffness", stiffness)
        return OptimizerSpec("mock", **overrides)
    if text == "xtb":
        return OptimizerSpec("external-xtb", **overrides)
    if text.startswith("cmd:"):
        return OptimizerSpec("external-command", command=text[4:], **overrides)
    raise ValueError(f"unrecognized optimizer {text!r}")


@dataclass
class OptimizationResult:
    positions: list[tuple[float, float, float]]
    e_initial: float
    e_final: float
    converged: bool
    method_tag: str
    commands: list[str] = field(default_factory=list)

    @property
    def delta_e(self) -> float:
        return delta_e_relax(self)


def delta_e_relax(res: OptimizationResult) -> float:
    """``e_initial - e_final`` in kcal/mol."""
    if not res.converged:
        raise NotConverged("optimization did not converge")
    return res.e_initial - res.e_final


def is_anomalous(delta_e: float) -> bool:
    """True when the optimizer raised the energy by more than the tolerance."""
    return delta_e < -ANOMALY_TOLERANCE


# ------------------------------------------------------------------ adapters

def _mock(mol: Molecule, spec: OptimizerSpec) -> OptimizationResult:
    n = len(mol.atoms)
    pos = mol.positions
    c = [math.fsum(p[d] for p in pos) / n for d in range(3)]
    f = spec.mock_fraction
    new = [tuple(p[d] + f * (c[d] - p[d]) for d in range(3)) for p in pos]
    e0 = spec.mock_stiffness * math.fsum(
        (p[d] - q[d]) ** 2 for p, q in zip(pos, new) for d in range(3)
    )
    return OptimizationResult(new, e0, 0.0, True, spec.method_tag)


def _run(cmd: list[str], cwd: str, timeout: float) -> str:
    try:
        proc = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        raise ProcessFailure(f"timed out after {timeout:g} s: {shlex.join(cmd)}") from None
    except OSError as exc:
        raise ProcessFailure(f"could not start {cmd[0]!r}: {exc}") from None
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout).strip().splitlines()[-1:] or [""]
        raise ProcessFailure(f"exit status {proc.returncode}: {tail[0]}")
    return proc.stdout


def _format(template: str, spec: OptimizerSpec, input_path: str, charge: int) -> list[str]:
    text = template.format(
        input=shlex.quote(input_path),
        charge=charge,
        binary=shlex.quote(spec.resolved_binary()),
    )
    return shlex.split(text)


_TOTAL_RE = re.compile(r"TOTAL ENERGY\s+(-?\d+\.\d+(?:[eEdD][-+]?\d+)?)")
_CYCLE1_RE = re.compile(
    r"CYCLE\s+1\b.*?\*\s*total energy\s*:\s*(-?\d+\.\d+(?:[eEdD][-+]?\d+)?)", re.S
)
_NOT_CONVERGED = ("FAILED TO CONVERGE", "NOT CONVERGED")


def _float(text: str) -> float:
    return float(text.replace("D", "E").replace("d", "e"))


def _read_geometry(path: str, mol: Molecule) -> list[tuple[float, float, float]]:
    if not os.path.exists(path):
        raise ParseFailure(f"optimized geometry {os.path.basename(path)} not written")
    try:
        frames = parse_xyz(path)
    except ChemIOError as exc:
        raise ParseFailure(f"bad optimized geometry: {exc}") from None
    if not frames:
        raise ParseFailure("optimized geometry file is empty")
    fr = frames[-1]
    if [e for e, _ in fr.atoms] != [a.element for a in mol.atoms]:
        raise ParseFailure("optimized geometry changed the atom list or order")
    return fr.positions


def _xtb(mol: Molecule, spec: OptimizerSpec, scratch: str) -> OptimizationResult:
    inp = os.path.join(scratch, "input.xyz")
    write_xyz(XyzFrame.from_molecule(mol), inp)
    charge = mol.net_charge
    cmd = _format(spec.command, spec, "input.xyz", charge)
    commands = [shlex.join(cmd)]
    out = _run(cmd, scratch, spec.timeout)
    if any(s in out.upper() for s in _NOT_CONVERGED):
        raise NotConverged("xtb reported geometry optimization failure")
    finals = _TOTAL_RE.findall(out)
    if not finals:
        raise ParseFailure("no TOTAL ENERGY line in xtb output")
    e_final = _float(finals[-1])
    m = _CYCLE1_RE.search(out)
    if m:
        e_init = _float(m.group(1))
    else:
        if not spec.single_point:
            raise ParseFailure("initial energy not reported and no single-point template set")
        sp_dir = os.path.join(scratch, "sp")
        os.makedirs(sp_dir)
        write_xyz(XyzFrame.from_molecule(mol), os.path.join(sp_dir, "input.xyz"))
        sp = _format(spec.single_point, spec, "input.xyz", charge)
        commands.append(shlex.join(sp))
        sp_out = _run(sp, sp_dir, spec.timeout)
        vals = _TOTAL_RE.findall(sp_out)
        if not vals:
            raise ParseFailure("no TOTAL ENERGY line in single-point output")
        e_init = _float(vals[-1])
    positions = _read_geometry(os.path.join(scratch, "xtbopt.xyz"), mol)
    return OptimizationResult(positions, e_init * HARTREE_TO_KCAL, e_final * HARTREE_TO_KCAL,
                              True, spec.method_tag, commands)


_GENERIC_RE = {
    key: re.compile(rf"^\s*{key}\s+(\S+)\s*$", re.M)
    for key in ("E_INITIAL_HARTREE", "E_FINAL_HARTREE")
}


def _generic(mol: Molecule, spec: OptimizerSpec, scratch: str) -> OptimizationResult:
    inp = os.path.join(scratch, "input.xyz")
    write_xyz(XyzFrame.from_molecule(mol), inp)
    cmd = _format(spec.command, spec, "input.xyz", mol.net_charge)
    out = _run(cmd, scratch, spec.timeout)
    if "NOT_CONVERGED" in out:
        raise NotConverged("tool reported NOT_CONVERGED")
    energies = {}
    for key, rx in _GENERIC_RE.items():
        m = rx.findall(out)
        if not m:
            raise ParseFailure(f"missing {key} line in tool output")
        try:
            energies[key] = _float(m[-1])
        except ValueError:
            raise ParseFailure(f"bad {key} value {m[-1]!r}") from None
    positions = _read_geometry(os.path.join(scratch, "optimized.xyz"), mol)
    return OptimizationResult(
        positions,
        energies["E_INITIAL_HARTREE"] * HARTREE_TO_KCAL,
        energies["E_FINAL_HARTREE"] * HARTREE_TO_KCAL,
        True,
        spec.method_tag,
        [shlex.join(cmd)],
    )


def optimize(mol: Molecule, spec: OptimizerSpec) -> OptimizationResult:
    """Relax one molecule with the configured optimizer.

    Raises:
        ProcessFailure: nonzero exit, timeout, or missing binary.
        ParseFailure: expected energy lines or geometry absent.
        NotConverged: the tool reports non-convergence.
    """
    if not mol.atoms:
        raise ValueError(f"{mol.name!r}: cannot optimize an empty molecule")
    if spec.kind == "mock":
        return _mock(mol, spec)
    if spec.workdir:
        os.makedirs(spec.workdir, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix="molbench-", dir=spec.workdir)
    try:
        if spec.kind == "external-xtb":
            return _xtb(mol, spec, scratch)
        return _generic(mol, spec, scratch)
    finally:
        if not spec.keep_workdir:
            shutil.rmtree(scratch, ignore_errors=True)


# ------------------------------------------------------------------ batches

@dataclass
class EnergyRow:
    name: str
    charge: int
    e_initial: float
    e_final: float
    delta_e: float
    anomalous: bool
    deviation: MoleculeDeviation
    commands: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "charge": self.charge,
            "e_initial": self.e_initial,
            "e_final": self.e_final,
            "delta_e_relax": self.delta_e,
            "anomalous": self.anomalous,
        }
        out.update({k: v for k, v in self.deviation.row().items() if k != "name"})
        return out


@dataclass
class EnergyFailure:
    name: str
    kind: str
    message: str
    commands: list[str] = field(default_factory=list)

    def line(self) -> str:
        return f"{self.name}\t{self.kind}\t{self.message}"


@dataclass
class EnergyBatch:
    spec: OptimizerSpec
    rows: list[EnergyRow]
    pairs: list[ConformerPair]
    failures: list[EnergyFailure]

    @property
    def usable(self) -> list[EnergyRow]:
        """Rows entering aggregates (anomalous rows excluded)."""
        return [r for r in self.rows if not r.anomalous]


def _one(mol: Molecule, spec: OptimizerSpec):
    try:
        res = optimize(mol, spec)
        dE = delta_e_relax(res)
    except OptimizerError as exc:
        log.warning("%s: %s: %s", mol.name, exc.kind, exc)
        return EnergyFailure(mol.name, exc.kind, str(exc))
    opt = mol.with_positions(res.positions)
    pair = ConformerPair(mol, opt)
    row = EnergyRow(
        name=mol.name,
        charge=mol.net_charge,
        e_initial=res.e_initial,
        e_final=res.e_final,
        delta_e=dE,
        anomalous=is_anomalous(dE),
        deviation=molecule_deviations(pair),
        commands=res.commands,
    )
    if row.anomalous:
        log.warning("%s: optimizer raised the energy by %.4f kcal/mol", mol.name, -dE)
    return row, pair


def evaluate_energy_geometry(
    molecules: Iterable, spec: OptimizerSpec, workers: int = 1
) -> EnergyBatch:
    """Optimize every molecule (bounded pool) and join energies with deviations.

    Output order follows input order regardless of ``workers``.
    """
    mols = [getattr(m, "molecule", m) for m in molecules]
    if workers > 1 and spec.kind != "mock":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda m: _one(m, spec), mols))
    else:
        results = [_one(m, spec) for m in mols]
    rows, pairs, failures = [], [], []
    for res in results:
        if isinstance(res, EnergyFailure):
            failures.append(res)
        else:
            rows.append(res[0])
            pairs.append(res[1])
    return EnergyBatch(spec, rows, pairs, failures)


def energy_section(batch: EnergyBatch, folds: int = 1, allow_short: bool = False,
                   pooling: str = "pooled", ff_delta_e: Sequence[float] | None = None) -> dict:
    """Report section: folded median/mean dE_relax plus geometry deviations."""
    from molbench.stats import EmptyInput, fold_metric

    usable = batch.usable
    section: dict = {
        "optimizer": batch.spec.describe(),
        "n_input": len(batch.rows) + len(batch.failures),
        "n_rows": len(batch.rows),
        "n_failures": len(batch.failures),
        "n_anomalous": len(batch.rows) - len(usable),
        "failure_kinds": _count_kinds(batch.failures),
        "energy_unit": "kcal/mol",
        "hartree_to_kcal": HARTREE_TO_KCAL,
    }
    de = [r.delta_e for r in usable]
    try:
        section["median_delta_e_relax"] = fold_metric(
            de, k=folds, reducer="median", name="median_delta_e_relax", unit="kcal/mol",
            allow_short=allow_short).as_dict()
        section["mean_delta_e_relax"] = fold_metric(
            de, k=folds, name="mean_delta_e_relax", unit="kcal/mol",
            allow_short=allow_short).as_dict()
    except EmptyInput:
        section["median_delta_e_relax"] = None
        section["mean_delta_e_relax"] = None
    if ff_delta_e is not None and len(ff_delta_e):
        section["mean_delta_e_relax_ff"] = fold_metric(
            list(ff_delta_e), k=folds, name="mean_delta_e_relax_ff", unit="kcal/mol",
            allow_short=allow_short).as_dict()
    devs = [r.deviation for r in usable]
    section["geometry"] = geometry_section(devs, folds, pooling, allow_short)
    return section


def geometry_section(devs: Sequence[MoleculeDeviation], folds: int = 1, pooling: str = "pooled",
                     allow_short: bool = False) -> dict:
    from molbench.geometry import PER_MOLECULE, POOLED, fold_deviations, summarize_deviations

    out: dict = {"pooling": pooling, "n_molecules": len(devs)}
    out["summary"] = {
        POOLED: summarize_deviations(devs, POOLED).as_dict(),
        PER_MOLECULE: summarize_deviations(devs, PER_MOLECULE).as_dict(),
    }
    if devs:
        out.update(fold_deviations(devs, k=folds, pooling=pooling, allow_short=allow_short))
    else:
        for key in ("bond_length", "bond_angle", "torsion", "bond_angle_raw"):
            out[key] = None
    return out


def _count_kinds(failures: Sequence[EnergyFailure]) -> dict:
    out: dict[str, int] = {}
    for f in failures:
        out[f.kind] = out.get(f.kind, 0) + 1
    return dict(sorted(out.items()))


ROW_COLUMNS = ["name", "charge", "e_initial", "e_final", "delta_e_relax", "anomalous",
               "bond_count", "mean_dr", "angle_count", "mean_dtheta", "torsion_count",
               "mean_dphi", "degenerate_count"]


def rows_csv(rows: Sequence[EnergyRow]) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ROW_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        d = r.as_dict()
        w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                    for k, v in d.items()})
    return buf.getvalue()
