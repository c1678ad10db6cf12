import math

import numpy as np
import pytest
from conftest import make_molecule

from pepfrag.molio import (
    BOHR_IN_ANGSTROM,
    BadCoordinateError,
    CountsMismatchError,
    Molecule,
    MoleculeError,
    SdfParseError,
    TruncatedFileError,
    UnknownElementError,
    UnsupportedFormatError,
    data_root,
    electron_count,
    formula_string,
    load_dataset,
    molecular_formula,
    parse_sdf,
    residue_library,
    sdf_properties,
    species_library,
    write_sdf,
)

WATER = """water
  hand-made

  3  2  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 O   0  0  0  0  0  0  0  0  0  0  0  0
    0.9572    0.0000    0.0000 H   0  0  0  0  0  0  0  0  0  0  0  0
   -0.2400    0.9266    0.0000 H   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0
  1  3  1  0
M  END
$$$$
"""


def test_parse_water_block():
    m = parse_sdf(WATER.encode())
    assert m.name == "water"
    assert molecular_formula(m) == {"H": 2, "O": 1}
    assert len(m.bonds) == 2
    assert m.net_charge == 0 and m.multiplicity == 1
    assert m.coords[1] == pytest.approx([0.9572, 0, 0])


def test_glycine_fixture_counts(dataset):
    raw = (data_root() / "amino_acids" / "glycine.sdf").read_bytes()
    m = parse_sdf(raw)
    assert len(m) == 10
    assert formula_string(molecular_formula(m)) == "C2H5NO2"
    assert len(m.bonds) == 9
    assert "PROVENANCE" in sdf_properties(raw)


def test_missing_atom_row_names_line():
    lines = WATER.splitlines()
    lines[3] = "  4  2  0  0  0  0  0  0  0  0999 V2000"
    with pytest.raises(CountsMismatchError) as exc:
        parse_sdf("\n".join(lines))
    assert exc.value.line_number == 8  # first bond row sits where atom 4 should be


def test_five_declared_four_present():
    block = """x
  hand-made

  5  0  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0
    1.0000    0.0000    0.0000 H   0  0
    0.0000    1.0000    0.0000 H   0  0
    0.0000    0.0000    1.0000 H   0  0
M  END
"""
    with pytest.raises(CountsMismatchError) as exc:
        parse_sdf(block)
    assert exc.value.line_number == 9
    assert "line 9" in str(exc.value)
    assert "5 atoms" in str(exc.value)


def test_extra_bond_rows_detected():
    lines = WATER.splitlines()
    lines[3] = "  3  1  0  0  0  0  0  0  0  0999 V2000"
    with pytest.raises(CountsMismatchError):
        parse_sdf("\n".join(lines))


def test_truncated_file():
    text = "\n".join(WATER.splitlines()[:6])
    with pytest.raises(TruncatedFileError) as exc:
        parse_sdf(text)
    assert exc.value.line_number == 7


def test_missing_m_end():
    text = WATER.replace("M  END\n", "")
    with pytest.raises(TruncatedFileError):
        parse_sdf(text)


def test_unknown_element():
    text = WATER.replace(" H   0", " Xx  0", 1)
    with pytest.raises(UnknownElementError) as exc:
        parse_sdf(text)
    assert exc.value.line_number == 6


def test_unsupported_element_rejected():
    text = WATER.replace(" O   0", " Cl  0", 1)
    with pytest.raises(UnknownElementError):
        parse_sdf(text)


def test_bad_coordinate():
    text = WATER.replace("    0.9572", "    0.9z72", 1)
    with pytest.raises(BadCoordinateError) as exc:
        parse_sdf(text)
    assert exc.value.line_number == 6


def test_v3000_rejected():
    lines = WATER.splitlines()
    lines[3] = "  0  0  0     0  0            999 V3000"
    with pytest.raises(UnsupportedFormatError):
        parse_sdf("\n".join(lines))


def test_parse_errors_share_base_class():
    for cls in (TruncatedFileError, CountsMismatchError, UnknownElementError,
                BadCoordinateError, UnsupportedFormatError):
        assert issubclass(cls, SdfParseError)


def test_charge_line_sets_net_charge_and_multiplicity():
    text = WATER.replace("M  END", "M  CHG  1   1   1\nM  END")
    m = parse_sdf(text)
    assert m.net_charge == 1
    assert electron_count(m) == 9
    assert m.multiplicity == 2


def test_round_trip_identical(dataset):
    for label in ("Glycine", "Cystine", "H2O", "Gly-Gly"):
        m = dataset[label].molecule
        again = parse_sdf(write_sdf(m))
        assert again.atoms == m.atoms
        assert again.bonds == m.bonds
        assert again.name == m.name
        twice = parse_sdf(write_sdf(again))
        assert twice == again


def test_round_trip_keeps_charge_and_properties(water):
    charged = water.replace(net_charge=1, multiplicity=2)
    text = write_sdf(charged, {"NOTE": "cation"})
    assert parse_sdf(text).net_charge == 1
    assert sdf_properties(text)["NOTE"] == "cation"


def test_molecular_formula_examples(water, glycine):
    assert molecular_formula(water) == {"H": 2, "O": 1}
    assert molecular_formula(glycine) == {"C": 2, "H": 5, "N": 1, "O": 2}
    assert list(molecular_formula(glycine)) == ["C", "H", "N", "O"]
    assert sum(molecular_formula(glycine).values()) == len(glycine)


def test_electron_count_examples(water, glycine):
    assert electron_count(water) == 10
    assert electron_count(glycine) == 40
    nh2 = make_molecule("NH2", [("N", (0, 0, 0)), ("H", (1.01, 0, 0)), ("H", (-0.3, 0.97, 0))],
                        [(0, 1, 1), (0, 2, 1)])
    assert electron_count(nh2) == 9
    assert nh2.multiplicity == 2


def test_empty_molecule_rejected():
    with pytest.raises(MoleculeError):
        Molecule("empty", ())


def test_invariants_rejected():
    a = [("H", (0, 0, 0)), ("H", (0, 0, 0.74))]
    with pytest.raises(MoleculeError):
        make_molecule("self", a, [(0, 0, 1)])
    with pytest.raises(MoleculeError):
        make_molecule("dup", a, [(0, 1, 1), (1, 0, 1)])
    with pytest.raises(MoleculeError):
        make_molecule("range", a, [(0, 2, 1)])
    with pytest.raises(MoleculeError):
        make_molecule("order", a, [(0, 1, 4)])
    with pytest.raises(MoleculeError):
        make_molecule("parity", a, multiplicity=2)
    with pytest.raises(MoleculeError):
        make_molecule("clash", [("H", (0, 0, 0)), ("H", (0, 0, 0))])
    with pytest.raises(MoleculeError):
        make_molecule("nan", [("H", (0, 0, math.nan))])
    with pytest.raises(MoleculeError):
        make_molecule("no electrons", [("H", (0, 0, 0))], net_charge=1)


def test_molecule_is_immutable(water):
    with pytest.raises(AttributeError):
        water.name = "other"


def test_rigid_motions_preserve_topology(water):
    moved = water.translated([1.0, 2.0, 3.0]).rotated(np.eye(3)[[1, 2, 0]])
    assert moved.bonds == water.bonds
    d0 = np.linalg.norm(water.coords[0] - water.coords[1])
    d1 = np.linalg.norm(moved.coords[0] - moved.coords[1])
    assert d1 == pytest.approx(d0)


def test_dataset_contents(dataset):
    roles = [e.role for e in dataset.values()]
    assert roles.count("amino_acid") == 20
    assert roles.count("peptide") == 20
    assert roles.count("correction_species") == 3
    assert len(residue_library()) == 20
    assert set(species_library()) == {"H2O", "H2", "CH3"}


def test_dataset_parity(dataset):
    for e in dataset.values():
        n = electron_count(e.molecule)
        assert (n % 2 == 0) == (e.molecule.multiplicity % 2 == 1), e.label


def test_ch3_fixture_is_a_doublet(dataset):
    assert dataset["CH3"].molecule.multiplicity == 2


def test_dataset_peptide_sequences(dataset):
    for e in dataset.values():
        if e.role == "peptide":
            assert 2 <= len(e.residues) <= 3
            assert e.published_em is not None and e.published_re_pct is not None


def test_conversion_constant_defined_once():
    assert BOHR_IN_ANGSTROM == 0.52917721092


def test_load_dataset_from_explicit_root(tmp_path):
    root = data_root()
    (tmp_path / "species").mkdir()
    (tmp_path / "species" / "h2.sdf").write_bytes((root / "species" / "h2.sdf").read_bytes())
    (tmp_path / "ground_truth.csv").write_text(
        "label,role,sequence,file,gt_energy_ha,published_em_ha,published_re_pct\n"
        "H2,correction_species,,species/h2.sdf,-1.11749,,\n"
    )
    ds = load_dataset(tmp_path)
    assert list(ds) == ["H2"]
    assert ds["H2"].ground_truth_energy == -1.11749
    assert ds["H2"].published_em is None
