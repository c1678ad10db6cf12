"""Molecular structures: the Molecule value type, MDL V2000 SDF reading and
writing, and the bundled validation dataset."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

# CODATA 2010 value; the only Angstrom/Bohr conversion in the package.
BOHR_IN_ANGSTROM = 0.52917721092
ANGSTROM_TO_BOHR = 1.0 / BOHR_IN_ANGSTROM

SYMBOLS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
)
ATOMIC_NUMBER = {sym: z for z, sym in enumerate(SYMBOLS, start=1)}
SUPPORTED_ELEMENTS = frozenset({"H", "C", "N", "O", "S"})


def symbol(z: int) -> str:
    return SYMBOLS[z - 1]


class MoleculeError(ValueError):
    """A Molecule would violate one of its structural invariants."""


@dataclass(frozen=True)
class Molecule:
    """Element-labelled 3D molecular graph.

    ``atoms`` holds ``(Z, (x, y, z))`` pairs with coordinates in Angstrom;
    ``bonds`` holds ``(i, j, order)`` with ``i < j`` after normalisation.
    Instances are immutable and validated on construction.
    """

    name: str
    atoms: tuple[tuple[int, tuple[float, float, float]], ...]
    bonds: tuple[tuple[int, int, int], ...] = ()
    net_charge: int = 0
    multiplicity: int | None = None

    def __post_init__(self) -> None:
        atoms = tuple(
            (int(z), tuple(float(c) for c in xyz)) for z, xyz in self.atoms
        )
        if not atoms:
            raise MoleculeError(f"{self.name!r}: molecule has no atoms")
        for z, xyz in atoms:
            if not 1 <= z <= len(SYMBOLS):
                raise MoleculeError(f"{self.name!r}: unsupported atomic number {z}")
            if len(xyz) != 3 or not all(math.isfinite(c) for c in xyz):
                raise MoleculeError(f"{self.name!r}: non-finite coordinate {xyz}")
        n = len(atoms)
        bonds = []
        seen = set()
        for i, j, order in self.bonds:
            i, j, order = int(i), int(j), int(order)
            if not (0 <= i < n and 0 <= j < n):
                raise MoleculeError(f"{self.name!r}: bond ({i}, {j}) references a missing atom")
            if i == j:
                raise MoleculeError(f"{self.name!r}: self-bond on atom {i}")
            if order not in (1, 2, 3):
                raise MoleculeError(f"{self.name!r}: bond order {order} not in 1..3")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise MoleculeError(f"{self.name!r}: duplicate bond {key}")
            seen.add(key)
            bonds.append((key[0], key[1], order))

        xyz = np.array([p for _, p in atoms])
        if n > 1:
            d2 = ((xyz[:, None, :] - xyz[None, :, :]) ** 2).sum(-1)
            d2[np.diag_indices(n)] = np.inf
            if d2.min() == 0.0:
                i, j = np.unravel_index(np.argmin(d2), d2.shape)
                raise MoleculeError(f"{self.name!r}: atoms {i} and {j} share a position")

        n_elec = sum(z for z, _ in atoms) - int(self.net_charge)
        if n_elec < 1:
            raise MoleculeError(f"{self.name!r}: electron count {n_elec} < 1")
        mult = self.multiplicity
        if mult is None:
            mult = 1 if n_elec % 2 == 0 else 2
        mult = int(mult)
        if mult < 1:
            raise MoleculeError(f"{self.name!r}: multiplicity must be positive")
        if (n_elec % 2 == 0) != (mult % 2 == 1):
            raise MoleculeError(
                f"{self.name!r}: multiplicity {mult} inconsistent with {n_elec} electrons"
            )
        if mult - 1 > n_elec:
            raise MoleculeError(f"{self.name!r}: multiplicity {mult} too high for {n_elec} electrons")

        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "bonds", tuple(bonds))
        object.__setattr__(self, "net_charge", int(self.net_charge))
        object.__setattr__(self, "multiplicity", mult)

    @property
    def numbers(self) -> np.ndarray:
        return np.array([z for z, _ in self.atoms], dtype=int)

    @property
    def coords(self) -> np.ndarray:
        """Positions in Angstrom, shape (n_atoms, 3)."""
        return np.array([p for _, p in self.atoms], dtype=float)

    @property
    def symbols(self) -> list[str]:
        return [symbol(z) for z, _ in self.atoms]

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.atoms]
        for i, j, _ in self.bonds:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def bond_order(self, i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        for a, b, order in self.bonds:
            if (a, b) == key:
                return order
        return 0

    def replace(self, **changes) -> "Molecule":
        fields = dict(
            name=self.name, atoms=self.atoms, bonds=self.bonds,
            net_charge=self.net_charge, multiplicity=self.multiplicity,
        )
        fields.update(changes)
        return Molecule(**fields)

    def translated(self, shift: Sequence[float]) -> "Molecule":
        shift = np.asarray(shift, dtype=float)
        return self.replace(atoms=tuple((z, tuple(p + shift)) for z, p in zip(self.numbers, self.coords)))

    def rotated(self, rotation: np.ndarray) -> "Molecule":
        xyz = self.coords @ np.asarray(rotation, dtype=float).T
        return self.replace(atoms=tuple((z, tuple(p)) for z, p in zip(self.numbers, xyz)))

    def subset(self, indices: Iterable[int], name: str | None = None,
               multiplicity: int | None = None) -> "Molecule":
        """Induced subgraph on ``indices`` (kept in the given order), charge 0."""
        idx = list(indices)
        remap = {old: new for new, old in enumerate(idx)}
        bonds = tuple(
            (remap[i], remap[j], order)
            for i, j, order in self.bonds
            if i in remap and j in remap
        )
        return Molecule(
            name=name or self.name,
            atoms=tuple(self.atoms[i] for i in idx),
            bonds=bonds,
            net_charge=0,
            multiplicity=multiplicity,
        )


def molecular_formula(m: Molecule) -> dict[str, int]:
    """Element counts in Hill order (C, H, then alphabetical; alphabetical if no C)."""
    counts: dict[str, int] = {}
    for s in m.symbols:
        counts[s] = counts.get(s, 0) + 1
    return hill_order(counts)


def hill_order(counts: Mapping[str, int]) -> dict[str, int]:
    counts = {k: v for k, v in counts.items() if v}
    if "C" in counts:
        head = [k for k in ("C", "H") if k in counts]
        rest = sorted(k for k in counts if k not in ("C", "H"))
    else:
        head, rest = [], sorted(counts)
    return {k: counts[k] for k in head + rest}


def formula_string(formula: Mapping[str, int]) -> str:
    return "".join(f"{el}{n if n != 1 else ''}" for el, n in hill_order(formula).items())


def electron_count(m: Molecule) -> int:
    n = int(m.numbers.sum()) - m.net_charge
    if n < 1:
        raise MoleculeError(f"{m.name!r}: electron count {n} < 1")
    return n


# ---------------------------------------------------------------------------
# SDF / MOL V2000
# ---------------------------------------------------------------------------


class SdfParseError(ValueError):
    """Malformed SDF input. ``line_number`` is 1-based within the record."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class TruncatedFileError(SdfParseError):
    pass


class CountsMismatchError(SdfParseError):
    pass


class UnknownElementError(SdfParseError):
    pass


class BadCoordinateError(SdfParseError):
    pass


class UnsupportedFormatError(SdfParseError):
    pass


def _looks_like_bond_row(line: str) -> bool:
    parts = line.split()
    return 3 <= len(parts) <= 7 and all(p.lstrip("-").isdigit() for p in parts)


def _looks_like_atom_row(line: str) -> bool:
    parts = line.split()
    if len(parts) < 4:
        return False
    try:
        [float(p) for p in parts[:3]]
    except ValueError:
        return False
    return parts[3].isalpha()


def _record_lines(raw: bytes | str) -> list[str]:
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else raw
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for k, line in enumerate(lines):
        if line.strip() == "$$$$":
            return lines[:k]
    return lines


def parse_sdf(raw: bytes | str) -> Molecule:
    """Parse the first record of an SDF/MOL V2000 block into a Molecule."""
    lines = _record_lines(raw)

    def line(k: int) -> str:
        if k >= len(lines) or not any(rest.strip() for rest in lines[k:]):
            raise TruncatedFileError("unexpected end of file", k + 1)
        return lines[k]

    name = line(0).strip()
    counts = line(3)
    if "V3000" in counts:
        raise UnsupportedFormatError("V3000 records are not supported; V2000 only", 4)
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        raise SdfParseError(f"malformed counts line {counts!r}", 4) from None

    atoms = []
    for k in range(4, 4 + n_atoms):
        row = line(k)
        lineno = k + 1
        if row.startswith("M  ") or (_looks_like_bond_row(row) and not _looks_like_atom_row(row)):
            raise CountsMismatchError(
                f"counts line declares {n_atoms} atoms but atom row {k - 3} is missing", lineno
            )
        try:
            xyz = (float(row[0:10]), float(row[10:20]), float(row[20:30]))
        except ValueError:
            raise BadCoordinateError(f"non-numeric coordinate in {row!r}", lineno) from None
        if not all(math.isfinite(c) for c in xyz):
            raise BadCoordinateError(f"non-finite coordinate in {row!r}", lineno)
        sym = row[31:34].strip()
        if sym not in ATOMIC_NUMBER or sym not in SUPPORTED_ELEMENTS:
            raise UnknownElementError(f"unsupported element symbol {sym!r}", lineno)
        atoms.append((ATOMIC_NUMBER[sym], xyz))

    bonds = []
    for k in range(4 + n_atoms, 4 + n_atoms + n_bonds):
        row = line(k)
        lineno = k + 1
        if row.startswith("M  ") or not _looks_like_bond_row(row[:21]):
            raise CountsMismatchError(
                f"counts line declares {n_bonds} bonds but bond row {k - 3 - n_atoms} is missing",
                lineno,
            )
        try:
            i, j, order = int(row[0:3]), int(row[3:6]), int(row[6:9])
        except ValueError:
            raise SdfParseError(f"malformed bond row {row!r}", lineno) from None
        if not (1 <= i <= n_atoms and 1 <= j <= n_atoms):
            raise SdfParseError(f"bond references atom outside 1..{n_atoms}", lineno)
        if order not in (1, 2, 3):
            raise SdfParseError(f"bond order {order} not supported (kekulised input required)", lineno)
        bonds.append((i - 1, j - 1, order))

    k = 4 + n_atoms + n_bonds
    if k < len(lines) and _looks_like_bond_row(lines[k]):
        raise CountsMismatchError(
            f"counts line declares {n_bonds} bonds but more bond rows follow", k + 1
        )

    charge = 0
    saw_end = False
    while k < len(lines):
        row = lines[k]
        if row.startswith("M  END"):
            saw_end = True
            break
        if row.startswith("M  CHG"):
            try:
                n_entries = int(row[6:9])
                fields = row[9:].split()
                for e in range(n_entries):
                    charge += int(fields[2 * e + 1])
            except (ValueError, IndexError):
                raise SdfParseError(f"malformed charge line {row!r}", k + 1) from None
        k += 1
    if not saw_end:
        raise TruncatedFileError("missing 'M  END'", k + 1)

    try:
        return Molecule(name=name, atoms=tuple(atoms), bonds=tuple(bonds), net_charge=charge)
    except MoleculeError as exc:
        raise SdfParseError(str(exc), 4) from None


def sdf_properties(raw: bytes | str) -> dict[str, str]:
    """Data items (``> <KEY>`` blocks) following ``M  END`` in the first record."""
    lines = _record_lines(raw)
    props: dict[str, str] = {}
    try:
        k = next(i for i, row in enumerate(lines) if row.startswith("M  END")) + 1
    except StopIteration:
        return props
    while k < len(lines):
        row = lines[k]
        if row.startswith(">") and "<" in row:
            key = row[row.index("<") + 1: row.index(">", row.index("<"))]
            k += 1
            value = []
            while k < len(lines) and lines[k].strip():
                value.append(lines[k])
                k += 1
            props[key] = "\n".join(value)
        k += 1
    return props


def write_sdf(m: Molecule, properties: Mapping[str, str] | None = None) -> str:
    out = [m.name, "  pepfrag          3D", ""]
    out.append(f"{len(m.atoms):3d}{len(m.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for z, (x, y, zc) in m.atoms:
        out.append(f"{x:10.4f}{y:10.4f}{zc:10.4f} {symbol(z):<3} 0  0  0  0  0  0  0  0  0  0  0  0")
    for i, j, order in m.bonds:
        out.append(f"{i + 1:3d}{j + 1:3d}{order:3d}  0")
    if m.net_charge:
        # whole charge on the first atom; only the net value is round-tripped
        out.append(f"M  CHG  1{1:4d}{m.net_charge:4d}")
    out.append("M  END")
    for key, value in (properties or {}).items():
        out += [f">  <{key}>", str(value), ""]
    out.append("$$$$")
    return "\n".join(out) + "\n"


def read_sdf_file(path: str | Path) -> Molecule:
    return parse_sdf(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# bundled dataset
# ---------------------------------------------------------------------------

ROLES = ("peptide", "amino_acid", "correction_species")


@dataclass(frozen=True)
class DatasetEntry:
    label: str
    molecule: Molecule
    ground_truth_energy: float | None
    role: str
    sequence: str = ""
    published_em: float | None = None
    published_re_pct: float | None = None
    source: str = field(default="", compare=False)

    @property
    def residues(self) -> list[str]:
        return self.sequence.split("-") if self.sequence else []


def data_root() -> Path:
    return Path(str(resources.files("pepfrag") / "data"))


def _optional_float(text: str) -> float | None:
    return float(text) if text.strip() else None


@lru_cache(maxsize=None)
def _load_dataset(root: str) -> tuple[DatasetEntry, ...]:
    base = Path(root)
    entries = []
    labels = set()
    with open(base / "ground_truth.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            label = row["label"]
            if label in labels:
                raise ValueError(f"duplicate dataset label {label!r}")
            labels.add(label)
            if row["role"] not in ROLES:
                raise ValueError(f"{label!r}: unknown role {row['role']!r}")
            path = base / row["file"]
            mol = read_sdf_file(path).replace(name=label)
            entries.append(
                DatasetEntry(
                    label=label,
                    molecule=mol,
                    ground_truth_energy=_optional_float(row["gt_energy_ha"]),
                    role=row["role"],
                    sequence=row["sequence"],
                    published_em=_optional_float(row["published_em_ha"]),
                    published_re_pct=_optional_float(row["published_re_pct"]),
                    source=str(path),
                )
            )
    return tuple(entries)


def load_dataset(root: str | Path | None = None) -> dict[str, DatasetEntry]:
    """All bundled entries keyed by label, in file order."""
    root = Path(root) if root is not None else data_root()
    return {e.label: e for e in _load_dataset(str(root))}


def residue_library(root: str | Path | None = None) -> dict[str, DatasetEntry]:
    """The 20 free amino acids keyed by upper-case three-letter code (``"GLY"``)."""
    return {
        e.sequence.upper(): e
        for e in load_dataset(root).values()
        if e.role == "amino_acid"
    }


def species_library(root: str | Path | None = None) -> dict[str, DatasetEntry]:
    return {e.label: e for e in load_dataset(root).values() if e.role == "correction_species"}
