"""Cleave peptides into amino acids and amino acids into backbone groups.

Two plan shapes come out of here:

* peptide level: one fragment per residue plus a ledger of the small
  molecules released (or added) when the peptide was assembled;
* amino-acid level: the amino group, the carboxyl group, the alpha CH and
  the side chain, with an empty ledger.

Nothing in this module touches energies. Signs in the ledger record
chemistry only (released = -1, added = +1); ``reassembly`` does the sums.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import networkx as nx
import numpy as np
from networkx.algorithms import isomorphism

from .molio import (
    ATOMIC_NUMBER,
    Molecule,
    formula_string,
    hill_order,
    molecular_formula,
    residue_library,
    species_library,
)

BACKBONE_AMIDE = "backbone_amide"
DISULFIDE = "disulfide"
ESTER_MODIFICATION = "ester_modification"
SITE_KINDS = (BACKBONE_AMIDE, DISULFIDE, ESTER_MODIFICATION)

PEPTIDE_LEVEL = "peptide_level"
AMINO_ACID_LEVEL = "amino_acid_level"

# cap bond lengths (Angstrom) for the geometric capping mode
CAP_NH = 1.01
CAP_CO = 1.36
CAP_OH = 0.96
CAP_SH = 1.34
_COH_ANGLE = math.radians(109.5)


class FragmentationError(ValueError):
    pass


class UnknownResidueError(FragmentationError):
    """No residue template matches; ``formula`` names the orphan subgraph."""

    def __init__(self, formula: str, detail: str = ""):
        self.formula = formula
        msg = f"unidentified residue {formula}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class BookkeepingError(RuntimeError):
    """Fragments plus ledger do not add back up to the source formula."""


@dataclass(frozen=True)
class BondSite:
    kind: str
    # oriented: (carbonyl C, amide N), (S, S) or (ester O, methyl C)
    atoms: tuple[int, int]

    def __post_init__(self) -> None:
        if self.kind not in SITE_KINDS:
            raise ValueError(f"unknown bond-site kind {self.kind!r}")

    def validate(self, m: Molecule) -> None:
        i, j = self.atoms
        if m.bond_order(i, j) == 0:
            raise FragmentationError(f"{self.kind} site {self.atoms} is not a bond of {m.name!r}")
        if self.kind == BACKBONE_AMIDE and not _has_carbonyl_oxygen(m, i):
            raise FragmentationError(f"amide site {self.atoms}: atom {i} carries no C=O")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "atoms": list(self.atoms)}


@dataclass(frozen=True)
class CorrectionTerm:
    """One ledger line: ``count`` copies of ``species``, released (-1) or added (+1).

    ``applied=False`` marks a term kept for atom bookkeeping only; the
    reassembler does not add its energy.
    """

    label: str
    species: Molecule
    sign: int
    count: int = 1
    sites: tuple[BondSite, ...] = ()
    applied: bool = True
    note: str = ""

    def __post_init__(self) -> None:
        if self.sign not in (-1, 1):
            raise ValueError(f"correction sign must be +1 or -1, got {self.sign}")
        if self.count < 1:
            raise ValueError(f"correction count must be >= 1, got {self.count}")

    def to_dict(self) -> dict:
        return {
            "species": self.label,
            "formula": formula_string(molecular_formula(self.species)),
            "sign": self.sign,
            "count": self.count,
            "applied": self.applied,
            "sites": [s.to_dict() for s in self.sites],
            "note": self.note,
        }


@dataclass(frozen=True)
class Fragment:
    label: str
    molecule: Molecule
    # atom indices in the source molecule this fragment stands for
    source_atoms: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        m = self.molecule
        return {
            "label": self.label,
            "formula": formula_string(molecular_formula(m)),
            "n_atoms": len(m),
            "charge": m.net_charge,
            "multiplicity": m.multiplicity,
            "source_atoms": list(self.source_atoms),
        }


@dataclass(frozen=True)
class FragmentPlan:
    source: Molecule
    fragments: tuple[Fragment, ...]
    corrections: tuple[CorrectionTerm, ...]
    mode: str
    sites: tuple[BondSite, ...] = ()
    convention_dependent: bool = False
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.mode not in (PEPTIDE_LEVEL, AMINO_ACID_LEVEL):
            raise ValueError(f"unknown plan mode {self.mode!r}")
        check_bookkeeping(self)

    @property
    def labels(self) -> list[str]:
        return [f.label for f in self.fragments]

    def correction_count(self, label: str, sign: int | None = None) -> int:
        return sum(c.count for c in self.corrections
                   if c.label == label and (sign is None or c.sign == sign))

    def to_dict(self) -> dict:
        return {
            "source": self.source.name,
            "source_formula": formula_string(molecular_formula(self.source)),
            "mode": self.mode,
            "convention_dependent": self.convention_dependent,
            "notes": list(self.notes),
            "sites": [s.to_dict() for s in self.sites],
            "fragments": [f.to_dict() for f in self.fragments],
            "corrections": [c.to_dict() for c in self.corrections],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def check_bookkeeping(plan: FragmentPlan) -> None:
    total: Counter[str] = Counter()
    for f in plan.fragments:
        total.update(molecular_formula(f.molecule))
    for c in plan.corrections:
        for el, k in molecular_formula(c.species).items():
            total[el] += c.sign * c.count * k
    got = {el: k for el, k in total.items() if k}
    want = molecular_formula(plan.source)
    if got != want:
        raise BookkeepingError(
            f"{plan.source.name!r}: fragments and ledger give {hill_order(got)}, "
            f"source is {formula_string(want)}"
        )


# --- graph helpers -----------------------------------------------------------

def molecule_graph(m: Molecule) -> nx.Graph:
    g = nx.Graph()
    for i, sym in enumerate(m.symbols):
        g.add_node(i, element=sym)
    for i, j, order in m.bonds:
        g.add_edge(i, j, order=order)
    return g


def _elem(m: Molecule, i: int) -> str:
    return m.symbols[i]


def _nbrs(m: Molecule, i: int, element: str | None = None) -> list[int]:
    return [j for j in m.neighbors()[i] if element is None or _elem(m, j) == element]


def _has_carbonyl_oxygen(m: Molecule, c: int) -> bool:
    return any(m.bond_order(c, o) == 2 for o in _nbrs(m, c, "O"))


def _hydroxyl_oxygen(m: Molecule, c: int) -> int | None:
    """Single-bonded O on ``c`` that carries an H (carboxylic OH)."""
    for o in _nbrs(m, c, "O"):
        if m.bond_order(c, o) == 1 and _nbrs(m, o, "H"):
            return o
    return None


def _ring_partner(m: Molecule, n: int, ca: int) -> bool:
    """True if N and its alpha carbon share a ring of five atoms (proline)."""
    g = molecule_graph(m)
    g.remove_edge(n, ca)
    try:
        return nx.shortest_path_length(g, n, ca) == 4
    except nx.NetworkXNoPath:
        return False


def _backbone_carbon(m: Molecule, ca: int) -> bool:
    """Alpha-carbon test: bonded to a carbonyl carbon and to a nitrogen."""
    has_co = any(_has_carbonyl_oxygen(m, c) for c in _nbrs(m, ca, "C"))
    return has_co and bool(_nbrs(m, ca, "N"))


# --- detection ---------------------------------------------------------------

def detect_peptide_bonds(m: Molecule) -> list[BondSite]:
    """Every backbone C(=O)-N amide bond, oriented (carbonyl C, N)."""
    sites = []
    for i, j, order in m.bonds:
        if order != 1 or {_elem(m, i), _elem(m, j)} != {"C", "N"}:
            continue
        c, n = (i, j) if _elem(m, i) == "C" else (j, i)
        if not _has_carbonyl_oxygen(m, c):
            continue
        if not any(_backbone_carbon(m, ca) for ca in _nbrs(m, c, "C")):
            continue
        alphas = [ca for ca in _nbrs(m, n, "C") if ca != c and _backbone_carbon(m, ca)]
        if not alphas:
            continue
        n_h = len(_nbrs(m, n, "H"))
        if n_h != 1 and not any(_ring_partner(m, n, ca) for ca in alphas):
            continue
        sites.append(BondSite(BACKBONE_AMIDE, (c, n)))
    return sorted(sites, key=lambda s: s.atoms)


def detect_special_links(m: Molecule) -> list[BondSite]:
    """Disulfide bridges and methyl esters on a backbone carboxyl."""
    sites = []
    for i, j, _ in m.bonds:
        if _elem(m, i) == "S" and _elem(m, j) == "S":
            sites.append(BondSite(DISULFIDE, (min(i, j), max(i, j))))
    for o in range(len(m)):
        if _elem(m, o) != "O":
            continue
        carbons = _nbrs(m, o, "C")
        if len(carbons) != 2 or _nbrs(m, o, "H"):
            continue
        for acyl, methyl in (carbons, carbons[::-1]):
            is_methyl = (len(_nbrs(m, methyl, "H")) == 3 and len(m.neighbors()[methyl]) == 4)
            backbone = (_has_carbonyl_oxygen(m, acyl)
                        and any(_nbrs(m, ca, "N") for ca in _nbrs(m, acyl, "C")))
            if is_methyl and backbone:
                sites.append(BondSite(ESTER_MODIFICATION, (o, methyl)))
                break
    return sorted(sites, key=lambda s: (s.kind, s.atoms))


# --- residue identification --------------------------------------------------

def _graph_hash(g: nx.Graph) -> str:
    return nx.weisfeiler_lehman_graph_hash(g, node_attr="element", iterations=4)


@lru_cache(maxsize=None)
def _templates(root: str | None) -> tuple[tuple[str, nx.Graph, str], ...]:
    lib = residue_library(root)
    return tuple(
        (code, g, _graph_hash(g))
        for code, entry in sorted(lib.items())
        for g in [molecule_graph(entry.molecule)]
    )


def _match_graph(g: nx.Graph, root: str | None = None) -> str | None:
    h = _graph_hash(g)
    node_match = isomorphism.categorical_node_match("element", None)
    for code, tg, th in _templates(root):
        if th == h and nx.is_isomorphic(g, tg, node_match=node_match):
            return code
    return None


def identify_residue(fragment: Molecule | nx.Graph, root: str | Path | None = None) -> str:
    """Three-letter code (upper case) of the free amino acid with this graph.

    Matching is on elements and connectivity only, so both enantiomers and
    any conformer map to the same code.
    """
    if isinstance(fragment, Molecule):
        g = molecule_graph(fragment)
        formula = formula_string(molecular_formula(fragment))
    else:
        g = fragment
        formula = formula_string(hill_order(Counter(d["element"] for _, d in g.nodes(data=True))))
    if g.number_of_nodes() == 0 or not nx.is_connected(g):
        raise UnknownResidueError(formula, "subgraph is empty or disconnected")
    code = _match_graph(g, None if root is None else str(root))
    if code is None:
        raise UnknownResidueError(formula)
    return code


# --- peptide level -----------------------------------------------------------

def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perpendicular(u: np.ndarray, hint: np.ndarray | None) -> np.ndarray:
    if hint is not None:
        w = hint - np.dot(hint, u) * u
        if np.linalg.norm(w) > 1e-6:
            return _unit(w)
    trial = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    return _unit(trial - np.dot(trial, u) * u)


def _caps(m: Molecule, site: BondSite, side: int) -> list[tuple[int, np.ndarray]]:
    """Cap atoms (Z, position) for atom ``site.atoms[side]`` after the cut."""
    xyz = m.coords
    a, b = site.atoms if side == 0 else site.atoms[::-1]
    u = _unit(xyz[b] - xyz[a])
    H, O = ATOMIC_NUMBER["H"], ATOMIC_NUMBER["O"]
    if site.kind == BACKBONE_AMIDE and side == 0:
        # carbonyl C gains OH; H placed anti to the C=O oxygen
        o_pos = xyz[a] + CAP_CO * u
        keto = [o for o in _nbrs(m, a, "O") if m.bond_order(a, o) == 2]
        v = _perpendicular(u, xyz[keto[0]] - xyz[a] if keto else None)
        tilt = math.pi - _COH_ANGLE
        h_pos = o_pos + CAP_OH * (math.cos(tilt) * u - math.sin(tilt) * v)
        return [(O, o_pos), (H, h_pos)]
    if site.kind == BACKBONE_AMIDE:
        return [(H, xyz[a] + CAP_NH * u)]
    if site.kind == DISULFIDE:
        return [(H, xyz[a] + CAP_SH * u)]
    if side == 0:  # ester oxygen keeps the acid, gains H
        return [(H, xyz[a] + CAP_OH * u)]
    return []


def _capped_component(m: Molecule, atoms: list[int], cuts: list[tuple[BondSite, int]],
                      name: str) -> Molecule:
    index = {a: k for k, a in enumerate(atoms)}
    entries = [(int(m.numbers[a]), tuple(m.coords[a])) for a in atoms]
    bonds = [(index[i], index[j], o) for i, j, o in m.bonds if i in index and j in index]
    for site, side in cuts:
        anchor = index[site.atoms[side]]
        prev = anchor
        for z, pos in _caps(m, site, side):
            entries.append((z, tuple(float(x) for x in pos)))
            bonds.append((prev, len(entries) - 1, 1))
            prev = len(entries) - 1
    return Molecule(name, tuple(entries), tuple(bonds))


def _species(label: str, root: str | Path | None) -> Molecule:
    lib = species_library(root)
    if label in lib:
        return lib[label].molecule
    if label == "H":
        return Molecule("H", ((1, (0.0, 0.0, 0.0)),))
    raise FragmentationError(f"no geometry for correction species {label!r}")


def fragment_peptide(m: Molecule, root: str | Path | None = None,
                     capping: bool = False) -> FragmentPlan:
    """Split a peptide at its backbone amides and special links.

    By default each residue is replaced by the bundled free amino acid
    (library mode). With ``capping=True`` the residues keep their in-place
    geometry, closed with H / OH caps along the broken bonds; residues that
    match no template are then kept as ``UNK`` instead of raising.
    """
    amides = detect_peptide_bonds(m)
    special = detect_special_links(m)
    sites = amides + special
    if not sites:
        raise FragmentationError(f"{m.name!r}: no backbone amide or special link to cut")
    for s in sites:
        s.validate(m)

    g = molecule_graph(m)
    for s in sites:
        g.remove_edge(*s.atoms)
    comp_of = {}
    components = []
    for k, comp in enumerate(sorted(nx.connected_components(g), key=min)):
        components.append(sorted(comp))
        for a in comp:
            comp_of[a] = k

    methyls = {comp_of[s.atoms[1]] for s in special if s.kind == ESTER_MODIFICATION}
    residues = [k for k in range(len(components)) if k not in methyls]

    # amide links between residue components, carbonyl side -> amine side
    nxt: dict[int, int] = {}
    prv: dict[int, int] = {}
    for s in amides:
        a, b = comp_of[s.atoms[0]], comp_of[s.atoms[1]]
        if a in nxt or b in prv:
            raise FragmentationError(f"{m.name!r}: branched backbone at residue component {a}")
        nxt[a], prv[b] = b, a
    starts = sorted((k for k in residues if k not in prv), key=lambda k: components[k][0])
    order: list[int] = []
    for k in starts:
        while True:
            order.append(k)
            if k not in nxt:
                break
            k = nxt[k]
    if len(order) != len(residues):
        raise FragmentationError(f"{m.name!r}: cyclic backbone; cyclic peptides are not supported")

    lib = residue_library(root) if not capping else None
    fragments = []
    for pos, k in enumerate(order):
        atoms = components[k]
        cuts = [(s, side) for s in sites for side in (0, 1) if comp_of[s.atoms[side]] == k]
        capped = _capped_component(m, atoms, cuts, f"{m.name}:{pos}")
        try:
            code = identify_residue(capped, root)
        except UnknownResidueError as exc:
            if not capping:
                raise UnknownResidueError(
                    exc.formula, f"residue {pos + 1} of {m.name!r} matches no template"
                ) from None
            code = "UNK"
        if capping:
            mol = capped.replace(name=f"{m.name}:{pos}:{code}")
        else:
            mol = lib[code].molecule
        fragments.append(Fragment(code, mol, tuple(atoms)))

    corrections = []
    if amides:
        corrections.append(CorrectionTerm("H2O", _species("H2O", root), -1, len(amides),
                                          tuple(amides)))
    ss = [s for s in special if s.kind == DISULFIDE]
    if ss:
        corrections.append(CorrectionTerm("H2", _species("H2", root), -1, len(ss), tuple(ss)))
    esters = [s for s in special if s.kind == ESTER_MODIFICATION]
    if esters:
        corrections.append(CorrectionTerm("CH3", _species("CH3", root), +1, len(esters),
                                          tuple(esters)))
        corrections.append(CorrectionTerm(
            "H", _species("H", root), -1, len(esters), tuple(esters), applied=False,
            note="hydroxyl H replaced by the methyl group; atom bookkeeping only",
        ))
    return FragmentPlan(m, tuple(fragments), tuple(corrections), PEPTIDE_LEVEL, tuple(sites))


# --- amino-acid level --------------------------------------------------------

def _alpha_carbon(m: Molecule) -> tuple[int, int, int]:
    """(alpha C, amine N, carboxyl C) of a free amino acid."""
    hits = []
    for ca in range(len(m)):
        if _elem(m, ca) != "C":
            continue
        for c in _nbrs(m, ca, "C"):
            if _has_carbonyl_oxygen(m, c) and _hydroxyl_oxygen(m, c) is not None:
                for n in _nbrs(m, ca, "N"):
                    hits.append((ca, n, c))
    if len(hits) != 1:
        raise FragmentationError(f"{m.name!r}: expected one N-C(alpha)-COOH motif, found {len(hits)}")
    return hits[0]


def fragment_amino_acid(m: Molecule, root: str | Path | None = None) -> FragmentPlan:
    """Amino group, carboxyl group, alpha CH and side chain, no ledger.

    Glycine's side chain is the lower-indexed of its two alpha hydrogens.
    Proline's N-CA bond is in the ring: cutting CA-N and CA-CB leaves one
    open NH-(CH2)3 chain, so the plan has three fragments and is marked
    convention-dependent.
    """
    code = identify_residue(m, root)
    ca, n, c = _alpha_carbon(m)
    g = molecule_graph(m)
    side = [a for a in _nbrs(m, ca) if a not in (n, c) and _elem(m, a) != "H"]
    alpha_h = sorted(_nbrs(m, ca, "H"))
    if not side:
        side = alpha_h[:1]
    cut = [(ca, n), (ca, c)] + [(ca, s) for s in side]
    for e in cut:
        g.remove_edge(*e)
    comps = {min(cc): sorted(cc) for cc in nx.connected_components(g)}
    comp_of = {a: k for k, cc in comps.items() for a in cc}

    named = [("NH2", comp_of[n]), ("COOH", comp_of[c]), ("CH", comp_of[ca])]
    named += [("R", comp_of[s]) for s in side]
    fragments = []
    seen = set()
    for label, k in named:
        if k in seen:
            continue
        seen.add(k)
        if label == "NH2" and comp_of[side[0]] == k:
            label = "NH-R"
        atoms = comps[k]
        fragments.append(Fragment(label, m.subset(atoms, name=f"{m.name}:{label}"), tuple(atoms)))
    if len(seen) != len(comps):
        raise FragmentationError(f"{m.name!r}: stray atoms left after cutting the alpha carbon")

    ring = len(fragments) != 4
    notes = ()
    if ring:
        notes = (f"{code}: N-CA bond is intra-ring; ring opened into one NH-chain fragment",)
    return FragmentPlan(m, tuple(fragments), (), AMINO_ACID_LEVEL,
                        convention_dependent=ring, notes=notes)
