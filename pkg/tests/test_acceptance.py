"""Acceptance suite: one block per criterion; results are tallied by conftest.

Run ``pytest tests/test_acceptance.py -v`` (or this file as a script); the
terminal summary prints one PASS/FAIL line per criterion. ``-m "not slow"``
skips the end-to-end runs on the larger peptides.
"""

import sys

import numpy as np
import pytest
from conftest import h2, methane, pyscf_mol, random_rotation

from pepfrag.fragmenter import (
    AMINO_ACID_LEVEL,
    PEPTIDE_LEVEL,
    fragment_amino_acid,
    fragment_peptide,
    identify_residue,
)
from pepfrag.hf import build_basis, compute_integrals, scf_rhf
from pepfrag.metrics import ErrorReport, relative_error_pct
from pepfrag.molio import molecular_formula
from pepfrag.pipeline import PipelineConfig, arithmetic_report, published_report, run_pipeline

FAST_DIPEPTIDES = ("Gly-Gly", "Gly-Ala", "Gly-Ser")
SLOW_PEPTIDES = ("Carnosine", "Aspartame", "Cystine", "Leu-Thr", "Thr-Lys", "Trp-His", "Phe-Ile",
                 "Arg-Met", "Ser-Cys", "Tyr-Asp", "Glu-Gly", "His-Arg-Val", "Val-Asp-Ser",
                 "Gly-His-Lys", "Val-Ala-Ser", "Gly-Val-Ala", "Ser-Gly-Glu")
AMINO_ACIDS = ("Alanine", "Arginine", "Asparagine", "Aspartic acid", "Cysteine", "Glutamic acid",
               "Glutamine", "Glycine", "Histidine", "Isoleucine", "Leucine", "Lysine",
               "Methionine", "Phenylalanine", "Proline", "Serine", "Threonine", "Tryptophan",
               "Tyrosine", "Valine")


@pytest.fixture(scope="module")
def energy_cache(tmp_path_factory):
    # shared by every pipeline run in this module, fresh for each session
    return tmp_path_factory.mktemp("acceptance-cache")


def pipeline(labels, mode, cache, out):
    cfg = PipelineConfig(fixtures=tuple(labels), mode=mode, cache_path=cache, output_dir=out)
    return run_pipeline(cfg)


# -- 1. engine agrees with an independent package ----------------------------------


@pytest.mark.parametrize("name", ["H2", "H2O", "CH4"])
def test_c1_rhf_matches_reference_package(name, water, record):
    scf = pytest.importorskip("pyscf.scf")
    m = {"H2": h2(1.4), "H2O": water, "CH4": methane()}[name]
    ours = scf_rhf(m).total_energy
    ref = scf.RHF(pyscf_mol(m)).run(conv_tol=1e-12).e_tot
    diff = abs(ours - ref)
    record(1, diff <= 1e-6, f"{name}: |dE| = {diff:.2e} Ha")
    assert diff <= 1e-6


# -- 2. free amino-acid energies ---------------------------------------------------


@pytest.mark.parametrize("label", ["Glycine", "Alanine", "Serine"])
def test_c2_fixture_energies_near_published_gt(label, dataset, record):
    e = dataset[label]
    res = scf_rhf(e.molecule)
    diff = abs(res.total_energy - e.ground_truth_energy)
    ok = res.converged and diff <= 5e-3
    record(2, ok, f"{label}: E = {res.total_energy:.5f}, published {e.ground_truth_energy}, "
                  f"|dE| = {diff:.2e} Ha")
    assert ok


# -- 3. reassembly arithmetic --------------------------------------------------------


def test_c3_arithmetic_reproduces_published_em(dataset, record):
    _, ems = arithmetic_report()
    assert len(ems) == 20
    worst = 0.0
    for label, em in ems.items():
        diff = abs(em - dataset[label].published_em)
        worst = max(worst, diff)
        record(3, diff <= 1e-4, f"{label}: Em {em:.5f} vs {dataset[label].published_em} "
                                f"(|d| = {diff:.1e})")
    assert worst <= 1e-4


# -- 4. relative errors and their summary --------------------------------------------


def test_c4_peptide_re_column(dataset, record):
    rep = published_report("peptide")
    for row in rep.rows:
        printed = dataset[row.label].published_re_pct
        ok = abs(row.re_pct - printed) <= 1e-5
        record(4, ok, f"{row.label}: RE {row.re_pct:.6f} vs printed {printed}")
    assert all(abs(r.re_pct - dataset[r.label].published_re_pct) <= 1e-5 for r in rep.rows)


def test_c4_peptide_mean_and_std(record):
    rep = published_report("peptide")
    ok_mean = abs(rep.mean_re - 0.00469) <= 1e-4
    ok_std = abs(rep.std_re - 0.01071) <= 1e-4
    record(4, ok_mean, f"peptide mean RE {rep.mean_re:.6f} (0.00469)")
    record(4, ok_std, f"peptide sample std {rep.std_re:.6f} (0.01071)")
    assert ok_mean and ok_std


def test_c4_amino_acid_mean_and_std(record):
    rep = published_report("amino_acid")
    ok_mean = abs(rep.mean_re - 0.26844) <= 1e-3
    ok_std = abs(rep.std_re - 0.32794) <= 1e-3
    record(4, ok_mean, f"amino-acid mean RE {rep.mean_re:.5f} (0.26844)")
    record(4, ok_std, f"amino-acid sample std {rep.std_re:.5f} (0.32794)")
    assert ok_mean and ok_std


# -- 5. end to end -----------------------------------------------------------------------


def _check_end_to_end(labels, dataset, energy_cache, tmp_path, record):
    out = pipeline(labels, PEPTIDE_LEVEL, energy_cache, tmp_path)
    rows = {r.label: r for r in out.reports[PEPTIDE_LEVEL].rows}
    failures = []
    for label in labels:
        row = rows[label]
        printed = dataset[label].published_re_pct
        ok = row.status == "ok" and abs(row.re_pct - printed) <= 0.002
        detail = (f"{label}: RE {row.re_pct:.5f} vs printed {printed}" if row.re_pct is not None
                  else f"{label}: {row.status} {row.detail}")
        record(5, ok, detail)
        if not ok:
            failures.append(detail)
    assert not failures, failures


def test_c5_dipeptides_end_to_end(dataset, energy_cache, tmp_path, record):
    _check_end_to_end(FAST_DIPEPTIDES, dataset, energy_cache, tmp_path, record)


@pytest.mark.slow
@pytest.mark.parametrize("label", SLOW_PEPTIDES)
def test_c5_larger_peptides_end_to_end(label, dataset, energy_cache, tmp_path, record):
    _check_end_to_end((label,), dataset, energy_cache, tmp_path, record)


# -- 6. property suites ---------------------------------------------------------------------


def test_c6a_integral_symmetry_and_overlap(dataset, record):
    rng = np.random.default_rng(0)
    bad = []
    for e in dataset.values():
        m = e.molecule
        b = build_basis(m)
        # packed ERIs for the smaller fixtures; one-electron checks only for the rest
        small = b.n <= 80
        ints = compute_integrals(m, b, direct=not small)
        S, T, V = ints.S, ints.T, ints.V
        sym = max(abs(S - S.T).max(), abs(T - T.T).max(), abs(V - V.T).max())
        lowest = np.linalg.eigvalsh(S).min()
        ok = sym < 1e-12 and lowest > 0
        if small:
            d1, d2 = (x + x.T for x in rng.normal(size=(2, b.n, b.n)))
            J1, K1 = ints.jk(d1)
            J2, K2 = ints.jk(d2)
            # (ij|kl) = (kl|ij) and (ij|kl) = (ji|kl) seen through J and K
            pair = abs(np.vdot(d1, J2[0]) - np.vdot(d2, J1[0]))
            ok = ok and pair < 1e-8 and abs(J1[0] - J1[0].T).max() < 1e-10 \
                and abs(K1[0] - K1[0].T).max() < 1e-10
        if not ok:
            bad.append(e.label)
    record(6, not bad, f"(a) symmetric one-electron matrices, S positive definite, ERI pair "
                       f"symmetry on {len(dataset)} fixtures; bad: {bad}")
    assert not bad


def test_c6a_eri_permutations_sampled(glycine, record):
    eri = compute_integrals(glycine, build_basis(glycine)).eri_full()
    rng = np.random.default_rng(1)
    worst = 0.0
    for i, j, k, l in rng.integers(0, eri.shape[0], size=(1000, 4)):
        v = eri[i, j, k, l]
        for p in ((j, i, k, l), (i, j, l, k), (k, l, i, j), (l, k, j, i)):
            worst = max(worst, abs(eri[p] - v))
    record(6, worst < 1e-12, f"(a) 8-fold ERI symmetry on 1000 glycine quartets, max dev {worst:.1e}")
    assert worst < 1e-12


def test_c6b_rigid_motion_invariance(water, record):
    ref = scf_rhf(water).total_energy
    dt = abs(scf_rhf(water.translated([2.5, -1.0, 4.0])).total_energy - ref)
    dr = abs(scf_rhf(water.rotated(random_rotation(3))).total_energy - ref)
    record(6, dt < 1e-8, f"(b) translation |dE| = {dt:.1e} Ha")
    record(6, dr < 1e-6, f"(b) rotation |dE| = {dr:.1e} Ha")
    assert dt < 1e-8 and dr < 1e-6


def test_c6c_bookkeeping_on_all_fixtures(dataset, record):
    n = 0
    for e in dataset.values():
        if e.role not in ("peptide", "amino_acid"):
            continue
        plan = (fragment_peptide if e.role == "peptide" else fragment_amino_acid)(e.molecule)
        total = {}
        for f in plan.fragments:
            for el, k in molecular_formula(f.molecule).items():
                total[el] = total.get(el, 0) + k
        for c in plan.corrections:
            for el, k in molecular_formula(c.species).items():
                total[el] = total.get(el, 0) + c.sign * c.count * k
        ok = {k: v for k, v in total.items() if v} == molecular_formula(e.molecule)
        record(6, ok, f"(c) bookkeeping {e.label}")
        n += ok
    assert n == 40


def test_c6d_water_count(dataset, record):
    for e in dataset.values():
        if e.role != "peptide" or e.label == "Cystine":
            continue
        plan = fragment_peptide(e.molecule)
        want = len(e.residues) - 1
        got = plan.correction_count("H2O", -1)
        record(6, got == want, f"(d) {e.label}: {got} water corrections for {len(e.residues)} residues")
        assert got == want


def test_c6e_template_round_trip(dataset, record):
    for e in dataset.values():
        if e.role == "amino_acid":
            got = identify_residue(e.molecule)
            record(6, got == e.sequence.upper(), f"(e) {e.label} -> {got}")
            assert got == e.sequence.upper()


def test_c6f_warm_cache_rerun(energy_cache, tmp_path, record):
    cold = pipeline(["Gly-Gly"], PEPTIDE_LEVEL, energy_cache, tmp_path / "cold")
    warm = pipeline(["Gly-Gly"], PEPTIDE_LEVEL, energy_cache, tmp_path / "warm")
    same = all(
        (tmp_path / "cold" / name).read_bytes() == (tmp_path / "warm" / name).read_bytes()
        for name in ("summary_peptide_level.csv", "summary_peptide_level.json")
    )
    ok = same and warm.scf_invocations == 0
    record(6, ok, f"(f) warm rerun byte-identical summaries, {warm.scf_invocations} SCF runs "
                  f"(cold run: {cold.scf_invocations})")
    assert ok


# -- 7. amino-acid level ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def amino_acid_run(energy_cache, tmp_path_factory):
    return pipeline(["amino_acids"], AMINO_ACID_LEVEL, energy_cache,
                    tmp_path_factory.mktemp("aa-out"))


def test_c7_structure(dataset, record):
    for label in AMINO_ACIDS:
        plan = fragment_amino_acid(dataset[label].molecule)
        if label == "Proline":
            ok = plan.corrections == () and plan.convention_dependent and len(plan.fragments) == 3
            record(7, ok, f"{label}: ring-opened plan, 3 fragments, flagged convention-dependent")
        else:
            ok = plan.corrections == () and len(plan.fragments) == 4
            record(7, ok, f"{label}: 4 fragments, no corrections")
        assert ok


@pytest.mark.parametrize("label", AMINO_ACIDS)
def test_c7_amino_acid_em(label, dataset, amino_acid_run, record):
    rows = {r.label: r for r in amino_acid_run.reports[AMINO_ACID_LEVEL].rows}
    row = rows[label]
    published = dataset[label].published_em
    dev = relative_error_pct(row.em, published) if row.em is not None else float("inf")
    ok = row.status == "ok" and dev <= 0.5
    record(7, ok, f"{label}: Em {row.em:.5f} vs published {published} ({dev:.3f}% apart)"
           if row.em is not None else f"{label}: {row.status} {row.detail}")
    assert ok


def test_c7_report_summary(amino_acid_run):
    rep = amino_acid_run.reports[AMINO_ACID_LEVEL]
    assert isinstance(rep, ErrorReport)
    assert len(rep.scored) == 20


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
