"""SDF/MOL V2000 and XYZ reading and writing.

The V2000 atom block is parsed by column position, never by whitespace
tokenization. Charges written by :func:`write_sdf` always go through
``M  CHG`` lines with the atom-block charge field left at 0.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Sequence, Union

from molbench.model import Atom, Bond, BondOrder, ChemModelError, Element, Molecule

Source = Union[bytes, str, os.PathLike, BinaryIO, io.TextIOBase]

V2000_MAX = 999

# atom-block charge field -> formal charge; 4 (doublet radical) is rejected
_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 5: -1, 6: -2, 7: -3}


class ChemIOError(ValueError):
    """Raised on malformed or unsupported file content."""


@dataclass
class SdfRecord:
    molecule: Molecule
    properties: dict[str, str] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.molecule.name


@dataclass(frozen=True)
class XyzFrame:
    comment: str
    atoms: tuple[tuple[Element, tuple[float, float, float]], ...]

    def __post_init__(self) -> None:
        atoms = []
        for sym, pos in self.atoms:
            pos = tuple(float(c) for c in pos)
            if len(pos) != 3:
                raise ChemIOError(f"xyz position needs 3 coordinates, got {pos!r}")
            atoms.append((Element.parse(sym), pos))
        object.__setattr__(self, "atoms", tuple(atoms))
        if "\n" in self.comment:
            raise ChemIOError("xyz comment must be a single line")

    @property
    def atom_count(self) -> int:
        return len(self.atoms)

    @property
    def positions(self) -> list[tuple[float, float, float]]:
        return [p for _, p in self.atoms]

    @classmethod
    def from_molecule(cls, mol: Molecule, comment: str | None = None) -> XyzFrame:
        return cls(mol.name if comment is None else comment,
                   tuple((a.element, a.position) for a in mol.atoms))


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, io.TextIOBase):
        return source.read()
    else:
        data = source.read()
        if isinstance(data, str):
            return data
    return data.decode("utf-8")


def _int_field(line: str, start: int, stop: int, what: str, lineno: int) -> int:
    chunk = line[start:stop].strip()
    if not chunk:
        return 0
    try:
        return int(chunk)
    except ValueError:
        raise ChemIOError(f"line {lineno}: bad {what} field {chunk!r}") from None


def _float_field(line: str, start: int, stop: int, what: str, lineno: int) -> float:
    chunk = line[start:stop].strip()
    try:
        return float(chunk)
    except ValueError:
        raise ChemIOError(f"line {lineno}: bad {what} field {chunk!r}") from None


def _parse_block(lines: list[str], offset: int) -> SdfRecord:
    """Parse one record (lines between ``$$$$`` separators)."""
    if len(lines) < 4:
        raise ChemIOError(f"line {offset + 1}: truncated molfile header")
    name = lines[0].rstrip()
    counts = lines[3]
    lineno = offset + 4
    if "V3000" in counts:
        raise ChemIOError(f"line {lineno}: V3000 connection tables are not supported")
    if len(counts.rstrip()) < 6:
        raise ChemIOError(f"line {lineno}: malformed counts line {counts!r}")
    n_atoms = _int_field(counts, 0, 3, "atom count", lineno)
    n_bonds = _int_field(counts, 3, 6, "bond count", lineno)
    if len(lines) < 4 + n_atoms + n_bonds:
        raise ChemIOError(f"line {lineno}: counts line promises more rows than present")

    symbols: list[Element] = []
    coords: list[tuple[float, float, float]] = []
    charges: list[int] = []
    for k in range(n_atoms):
        line = lines[4 + k]
        ln = lineno + 1 + k
        x = _float_field(line, 0, 10, "x", ln)
        y = _float_field(line, 10, 20, "y", ln)
        z = _float_field(line, 20, 30, "z", ln)
        try:
            elem = Element.parse(line[31:34])
        except ChemModelError as exc:
            raise ChemIOError(f"line {ln}: {exc}") from None
        code = _int_field(line, 36, 39, "charge", ln)
        if code == 4:
            raise ChemIOError(f"line {ln}: radical charge code 4 is not supported")
        if code not in _CHARGE_CODES:
            raise ChemIOError(f"line {ln}: unknown charge code {code}")
        symbols.append(elem)
        coords.append((x, y, z))
        charges.append(_CHARGE_CODES[code])

    raw_bonds = []
    base = 4 + n_atoms
    for k in range(n_bonds):
        line = lines[base + k]
        ln = offset + base + k + 1
        a = _int_field(line, 0, 3, "bond atom", ln)
        b = _int_field(line, 3, 6, "bond atom", ln)
        code = _int_field(line, 6, 9, "bond type", ln)
        if code not in (1, 2, 3, 4):
            raise ChemIOError(f"line {ln}: unsupported bond order code {code}")
        if not (1 <= a <= n_atoms and 1 <= b <= n_atoms):
            raise ChemIOError(f"line {ln}: bond index out of range ({a}, {b})")
        raw_bonds.append((a - 1, b - 1, BondOrder(code), ln))

    # properties block: M CHG overrides per listed atom
    pos = base + n_bonds
    chg_override: dict[int, int] = {}
    while pos < len(lines):
        line = lines[pos]
        pos += 1
        if line.startswith("M  END"):
            break
        if line.startswith("M  CHG"):
            toks = line[6:].split()
            try:
                count = int(toks[0])
                vals = [int(t) for t in toks[1:1 + 2 * count]]
            except (ValueError, IndexError):
                raise ChemIOError(f"line {offset + pos}: malformed M  CHG line") from None
            if len(vals) != 2 * count:
                raise ChemIOError(f"line {offset + pos}: truncated M  CHG line")
            for idx, chg in zip(vals[::2], vals[1::2]):
                if not 1 <= idx <= n_atoms:
                    raise ChemIOError(f"line {offset + pos}: M  CHG atom {idx} out of range")
                chg_override[idx - 1] = chg
        elif line.startswith("M  RAD"):
            raise ChemIOError(f"line {offset + pos}: radicals are not supported")
    for idx, chg in chg_override.items():
        charges[idx] = chg

    properties = _parse_data_items(lines[pos:], offset + pos)

    try:
        atoms = tuple(Atom(e, c, p) for e, c, p in zip(symbols, charges, coords))
        bonds = []
        for a, b, order, ln in raw_bonds:
            try:
                bonds.append(Bond(a, b, order))
            except ChemModelError as exc:
                raise ChemIOError(f"line {ln}: {exc}") from None
        mol = Molecule(name, atoms, tuple(bonds))
    except ChemModelError as exc:
        raise ChemIOError(f"record at line {offset + 1}: {exc}") from None
    return SdfRecord(mol, properties)


def _parse_data_items(lines: list[str], offset: int) -> dict[str, str]:
    props: dict[str, str] = {}
    k = 0
    while k < len(lines):
        line = lines[k]
        k += 1
        if not line.startswith(">"):
            continue
        lt, gt = line.find("<"), line.find(">", 1)
        if lt < 0 or gt < lt:
            raise ChemIOError(f"line {offset + k}: malformed data header {line!r}")
        tag = line[lt + 1:gt]
        value = []
        while k < len(lines) and lines[k].strip() != "":
            value.append(lines[k])
            k += 1
        props[tag] = "\n".join(value)
    return props


def iter_sdf(source: Source) -> Iterator[SdfRecord]:
    """Yield records one at a time; records are separated by ``$$$$``."""
    text = _read_text(source)
    lines = text.splitlines()
    block: list[str] = []
    start = 0
    for n, line in enumerate(lines):
        if line.startswith("$$$$"):
            yield _parse_block(block, start)
            block = []
            start = n + 1
        else:
            block.append(line)
    if any(l.strip() for l in block):
        yield _parse_block(block, start)


def parse_sdf(source: Source) -> list[SdfRecord]:
    return list(iter_sdf(source))


def read_molecules(source: Source) -> list[Molecule]:
    return [r.molecule for r in iter_sdf(source)]


def _format_record(rec: SdfRecord | Molecule) -> str:
    if isinstance(rec, Molecule):
        rec = SdfRecord(rec)
    mol = rec.molecule
    if len(mol.atoms) > V2000_MAX or len(mol.bonds) > V2000_MAX:
        raise ChemIOError(
            f"{mol.name!r}: {len(mol.atoms)} atoms / {len(mol.bonds)} bonds exceed the V2000 limit of {V2000_MAX}"
        )
    if "\n" in mol.name:
        raise ChemIOError("molecule name must be a single line")
    out = [mol.name, "  molbench          3D", ""]
    out.append(f"{len(mol.atoms):>3}{len(mol.bonds):>3}  0  0  0  0  0  0  0  0999 V2000")
    for a in mol.atoms:
        x, y, z = a.position
        out.append(
            f"{x:>10.4f}{y:>10.4f}{z:>10.4f} {a.element.value:<3} 0  0  0  0  0  0  0  0  0  0  0  0"
        )
    for b in mol.bonds:
        out.append(f"{b.i + 1:>3}{b.j + 1:>3}{b.order.value:>3}  0")
    charged = [(k + 1, a.formal_charge) for k, a in enumerate(mol.atoms) if a.formal_charge]
    for s in range(0, len(charged), 8):
        chunk = charged[s:s + 8]
        out.append(f"M  CHG{len(chunk):>3}" + "".join(f" {i:>3} {c:>3}" for i, c in chunk))
    out.append("M  END")
    for tag, value in rec.properties.items():
        out.append(f">  <{tag}>")
        out.extend(value.split("\n") if value else [])
        out.append("")
    out.append("$$$$")
    return "\n".join(out) + "\n"


def write_sdf(records: Iterable[SdfRecord | Molecule], dest: str | os.PathLike | BinaryIO | None = None) -> bytes:
    """Serialize records to V2000 bytes; also write them to ``dest`` if given."""
    data = "".join(_format_record(r) for r in records).encode("utf-8")
    if dest is not None:
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, "wb") as fh:
                fh.write(data)
        else:
            dest.write(data)
    return data


def parse_xyz(source: Source) -> list[XyzFrame]:
    lines = _read_text(source).splitlines()
    frames = []
    k = 0
    while k < len(lines):
        if not lines[k].strip():
            k += 1
            continue
        try:
            count = int(lines[k].strip())
        except ValueError:
            raise ChemIOError(f"line {k + 1}: expected atom count, got {lines[k]!r}") from None
        if count < 0:
            raise ChemIOError(f"line {k + 1}: negative atom count")
        if k + 1 >= len(lines):
            raise ChemIOError(f"line {k + 1}: missing comment line")
        comment = lines[k + 1]
        body = lines[k + 2:k + 2 + count]
        atoms = []
        for n, line in enumerate(body):
            toks = line.split()
            ln = k + 3 + n
            if len(toks) < 4:
                raise ChemIOError(
                    f"line {ln}: expected 'symbol x y z' (count line said {count} atoms)"
                )
            try:
                pos = tuple(float(t) for t in toks[1:4])
            except ValueError:
                raise ChemIOError(f"line {ln}: unparseable coordinate in {line!r}") from None
            try:
                atoms.append((Element.parse(toks[0]), pos))
            except ChemModelError as exc:
                raise ChemIOError(f"line {ln}: {exc}") from None
        if len(atoms) != count:
            raise ChemIOError(
                f"line {k + 1}: count line says {count} atoms but {len(atoms)} follow"
            )
        frames.append(XyzFrame(comment, tuple(atoms)))
        k += 2 + count
    return frames


def write_xyz(frames: Sequence[XyzFrame] | XyzFrame, dest: str | os.PathLike | None = None) -> bytes:
    if isinstance(frames, XyzFrame):
        frames = [frames]
    out = []
    for fr in frames:
        out.append(str(fr.atom_count))
        out.append(fr.comment)
        for elem, (x, y, z) in fr.atoms:
            out.append(f"{elem.value:<2} {x:.6f} {y:.6f} {z:.6f}")
    data = ("\n".join(out) + "\n").encode("utf-8") if out else b""
    if dest is not None:
        with open(dest, "wb") as fh:
            fh.write(data)
    return data
