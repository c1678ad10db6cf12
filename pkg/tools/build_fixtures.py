"""Regenerate the bundled SDF fixtures and ground_truth.csv.

Development tool only: needs rdkit and pyscf, neither of which the package
imports. PubChem records were not reachable when the fixtures were built, so
each structure is rebuilt from an isomeric SMILES: ETKDG embedding followed by
MMFF94s relaxation (the force field PubChem uses for its 3D conformers). Among
the relaxed conformers, the one whose RHF/STO-3G energy lies closest to the
published whole-molecule energy is kept, and the choice is written into the
SDF data block. The three correction species use STO-3G optimised geometries.

    python tools/build_fixtures.py [--only LABEL ...]
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
from pathlib import Path

import numpy as np
from pyscf import gto, scf
from rdkit import Chem
from rdkit.Chem import AllChem
from rdkit.Geometry import Point3D

DATA = Path(__file__).resolve().parents[1] / "src" / "pepfrag" / "data"
log = logging.getLogger("build_fixtures")

SIDE_CHAINS = {
    "Ala": "C",
    "Arg": "CCCNC(=N)N",
    "Asn": "CC(N)=O",
    "Asp": "CC(=O)O",
    "Cys": "CS",
    "Gln": "CCC(N)=O",
    "Glu": "CCC(=O)O",
    "His": "Cc1c[nH]cn1",
    "Ile": "[C@@H](C)CC",
    "Leu": "CC(C)C",
    "Lys": "CCCCN",
    "Met": "CCSC",
    "Phe": "Cc1ccccc1",
    "Ser": "CO",
    "Thr": "[C@H](O)C",
    "Trp": "Cc1c[nH]c2ccccc12",
    "Tyr": "Cc1ccc(O)cc1",
    "Val": "C(C)C",
}

# (three-letter code, name, published GT, Em, RE%)
AMINO_ACIDS = [
    ("His", "Histidine", -538.53389, -537.58932, 0.17540),
    ("Leu", "Leucine", -433.42225, -434.01055, 0.13573),
    ("Ile", "Isoleucine", -433.42805, -434.01055, 0.13439),
    ("Lys", "Lysine", -487.74061, -487.36827, 0.076339),
    ("Met", "Methionine", -788.02139, -787.09064, 0.11811),
    ("Phe", "Phenylalanine", -544.43743, -544.04328, 0.072395),
    ("Thr", "Threonine", -430.09637, -429.12416, 0.22604),
    ("Trp", "Tryptophan", -673.57378, -673.15017, 0.062891),
    ("Val", "Valine", -394.84750, -394.45688, 0.098928),
    ("Arg", "Arginine", -595.17255, -594.18510, 0.16591),
    ("Cys", "Cysteine", -710.85730, -715.26885, 0.62060),
    ("Gln", "Glutamine", -521.82179, -516.80354, 0.96168),
    ("Asn", "Asparagine", -483.23923, -479.61163, 0.75068),
    ("Tyr", "Tyrosine", -618.27595, -611.07066, 1.1654),
    ("Ser", "Serine", -391.51594, -391.12360, 0.10021),
    ("Gly", "Glycine", -279.11151, -278.67407, 0.15673),
    ("Asp", "Aspartic acid", -502.76713, -502.31178, 0.090569),
    ("Glu", "Glutamic acid", -541.34980, -540.89235, 0.084502),
    ("Pro", "Proline", -393.70020, -393.87365, 0.044055),
    ("Ala", "Alanine", -317.69136, -317.28420, 0.12816),
]

# (label, sequence, published GT, Em, RE%, smiles override)
PEPTIDES = [
    ("Gly-Gly", "Gly-Gly", -483.23779, -483.25713, 0.00400, None),
    ("Gly-Ala", "Gly-Ala", -521.82046, -521.83697, 0.00317, None),
    ("Gly-Ser", "Gly-Ser", -595.64593, -595.66156, 0.00262, None),
    ("Carnosine", "Ala-His", -781.24420, -781.25935, 0.00194, None),
    ("Aspartame", "Asp-Phe", -1010.80954, -1011.31538, 0.05004,
     "N[C@@H](CC(=O)O)C(=O)N[C@@H](Cc1ccccc1)C(=O)OC"),
    ("Cystine", "Cys-Cys", -1420.58943, -1420.59711, 0.00054,
     "N[C@@H](CSSC[C@H](N)C(=O)O)C(=O)O"),
    ("Leu-Thr", "Leu-Thr", -788.53834, -788.55273, 0.00182, None),
    ("Thr-Lys", "Thr-Lys", -842.85520, -842.87108, 0.00188, None),
    ("Trp-His", "Trp-His", -1137.12083, -1137.14177, 0.00184, None),
    ("Phe-Ile", "Phe-Ile", -902.88517, -902.89959, 0.00160, None),
    ("Arg-Met", "Arg-Met", -1308.21468, -1308.22803, 0.00102, None),
    ("Ser-Cys", "Ser-Cys", -1027.39113, -1027.40735, 0.00158, None),
    ("Tyr-Asp", "Tyr-Asp", -1046.06184, -1046.07719, 0.00147, None),
    ("Glu-Gly", "Glu-Gly", -745.47664, -745.49542, 0.00252, None),
    ("His-Arg-Val", "His-Arg-Val", -1378.59438, -1378.62213, 0.00201, None),
    ("Val-Asp-Ser", "Val-Asp-Ser", -1139.16790, -1139.19877, 0.00271, None),
    ("Gly-His-Lys", "Gly-His-Lys", -1155.42028, -1155.45421, 0.00294, None),
    ("Val-Ala-Ser", "Val-Ala-Ser", -954.09354, -954.12300, 0.00309, None),
    ("Gly-Val-Ala", "Gly-Val-Ala", -841.68835, -841.71857, 0.00359, None),
    ("Ser-Gly-Glu", "Ser-Gly-Glu", -1062.00937, -1062.04546, 0.00340, None),
]

# Back-solved from the published peptide and amino-acid energies; none is printed directly.
SPECIES = [
    ("H2O", "h2o", -74.96589),
    ("H2", "h2", -1.11749),
    ("CH3", "ch3", -39.07671),
]


def residue_smiles(code: str) -> str:
    if code == "Gly":
        return "NCC(=O)"
    if code == "Pro":
        return "N1CCC[C@H]1C(=O)"
    return f"N[C@@H]({SIDE_CHAINS[code]})C(=O)"


def peptide_smiles(sequence: str) -> str:
    return "".join(residue_smiles(code) for code in sequence.split("-")) + "O"


def file_stem(label: str) -> str:
    return label.lower().replace(" ", "_")


def rhf_energy(mol: Chem.Mol, conf_id: int) -> float:
    conf = mol.GetConformer(conf_id)
    atoms = [
        (a.GetSymbol(), tuple(conf.GetAtomPosition(a.GetIdx())))
        for a in mol.GetAtoms()
    ]
    m = gto.M(atom=atoms, basis="sto-3g", unit="Angstrom", verbose=0)
    mf = scf.RHF(m)
    mf.conv_tol = 1e-9
    return mf.kernel()


def relaxed_conformers(smiles: str, n_confs: int, seed: int = 0xF00D) -> Chem.Mol:
    mol = Chem.AddHs(Chem.MolFromSmiles(smiles))
    params = AllChem.ETKDGv3()
    params.randomSeed = seed
    params.pruneRmsThresh = 0.5
    AllChem.EmbedMultipleConfs(mol, numConfs=n_confs, params=params)
    AllChem.MMFFOptimizeMoleculeConfs(mol, mmffVariant="MMFF94s", maxIters=5000)
    return mol


def pick_conformer(mol: Chem.Mol, target: float) -> tuple[int, float, int]:
    best = None
    for conf in mol.GetConformers():
        e = rhf_energy(mol, conf.GetId())
        log.info("  conf %d: E=%.6f (target %.5f)", conf.GetId(), e, target)
        if best is None or abs(e - target) < abs(best[1] - target):
            best = (conf.GetId(), e)
    return best[0], best[1], mol.GetNumConformers()


def write_sdf(mol: Chem.Mol, conf_id: int, path: Path, title: str, props: dict) -> None:
    single = Chem.Mol(mol, confId=conf_id)
    keep = Chem.Conformer(single.GetConformer(conf_id))
    single.RemoveAllConformers()
    single.AddConformer(keep, assignId=True)
    single.SetProp("_Name", title)
    for key, value in props.items():
        single.SetProp(key, str(value))
    Chem.Kekulize(single, clearAromaticFlags=True)
    writer = Chem.SDWriter(str(path))
    writer.SetForceV3000(False)
    writer.SetKekulize(True)
    writer.write(single)
    writer.close()


def build_species() -> None:
    from scipy.optimize import minimize

    def water(x):
        r, theta = x
        t = math.radians(theta)
        return [("O", (0.0, 0.0, 0.0)), ("H", (r, 0.0, 0.0)),
                ("H", (r * math.cos(t), r * math.sin(t), 0.0))]

    def hydrogen(x):
        return [("H", (0.0, 0.0, 0.0)), ("H", (x[0], 0.0, 0.0))]

    def methyl(x):
        r = x[0]
        return [("C", (0.0, 0.0, 0.0))] + [
            ("H", (r * math.cos(a), r * math.sin(a), 0.0))
            for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
        ]

    jobs = {
        "h2o": (water, [0.99, 100.0], 0, "O"),
        "h2": (hydrogen, [0.71], 0, "[H][H]"),
        "ch3": (methyl, [1.08], 1, "[CH3]"),
    }
    for stem, (geom, x0, spin, smiles) in jobs.items():
        def energy(x, geom=geom, spin=spin):
            m = gto.M(atom=geom(x), basis="sto-3g", spin=spin, verbose=0)
            mf = scf.UHF(m) if spin else scf.RHF(m)
            mf.conv_tol = 1e-11
            return mf.kernel()

        res = minimize(energy, x0, method="Nelder-Mead",
                       options={"xatol": 1e-7, "fatol": 1e-12})
        atoms = geom(res.x)
        mol = Chem.AddHs(Chem.MolFromSmiles(smiles)) if stem != "h2" else Chem.MolFromSmiles(smiles, sanitize=False)
        if stem == "h2":
            mol = Chem.RWMol(mol)
            mol.UpdatePropertyCache(strict=False)
        conf = Chem.Conformer(mol.GetNumAtoms())
        # heavy atom first in both the SMILES-derived graph and the geometry
        for i, (_, xyz) in enumerate(atoms):
            conf.SetAtomPosition(i, Point3D(*xyz))
        mol.AddConformer(conf, assignId=True)
        log.info("%s: params=%s E=%.8f", stem, np.round(res.x, 6).tolist(), res.fun)
        props = {
            "PROVENANCE": f"RHF/UHF STO-3G optimised geometry (E={res.fun:.8f} Ha)",
        }
        write_sdf(mol, 0, DATA / "species" / f"{stem}.sdf", stem.upper(), props)


def build(only: set[str] | None) -> None:
    rows = []
    for code, name, gt, em, re_pct in AMINO_ACIDS:
        rows.append(("amino_acid", name, code, f"amino_acids/{file_stem(name)}.sdf",
                     gt, em, re_pct, residue_smiles(code) + "O"))
    for label, seq, gt, em, re_pct, smiles in PEPTIDES:
        rows.append(("peptide", label, seq, f"peptides/{file_stem(label)}.sdf",
                     gt, em, re_pct, smiles or peptide_smiles(seq)))

    for role, label, seq, rel, gt, em, re_pct, smiles in rows:
        if only and label not in only:
            continue
        heavy = Chem.MolFromSmiles(smiles).GetNumHeavyAtoms()
        n_confs = 24 if heavy <= 15 else 10 if heavy <= 24 else 5
        log.info("%s (%s): %d heavy atoms, %d conformers", label, smiles, heavy, n_confs)
        mol = relaxed_conformers(smiles, n_confs)
        conf_id, energy, pool = pick_conformer(mol, gt)
        props = {
            "SMILES": smiles,
            "PROVENANCE": (
                f"rdkit ETKDGv3+MMFF94s, conformer {conf_id} of {pool}; "
                f"chosen by closest RHF/STO-3G energy {energy:.6f} Ha to published {gt:.5f}"
            ),
        }
        write_sdf(mol, conf_id, DATA / rel, label, props)

    with open(DATA / "ground_truth.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "role", "sequence", "file", "gt_energy_ha",
                    "published_em_ha", "published_re_pct"])
        for role, label, seq, rel, gt, em, re_pct, _ in rows:
            w.writerow([label, role, seq, rel, f"{gt:.5f}", f"{em:.5f}", f"{re_pct}"])
        for label, stem, energy in SPECIES:
            w.writerow([label, "correction_species", "", f"species/{stem}.sdf",
                        f"{energy:.5f}", "", ""])


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", nargs="*")
    ap.add_argument("--species", action="store_true")
    args = ap.parse_args()
    if args.species:
        build_species()
    else:
        build(set(args.only) if args.only else None)
