import json
import random

import pytest
from conftest import h2

from pepfrag.fragmenter import fragment_amino_acid, fragment_peptide
from pepfrag.hf import ScfResult
from pepfrag.reassembly import (
    EnergyConflictError,
    EnergyTable,
    MissingEnergyError,
    UnconvergedEnergyError,
    reassemble,
    resolve_correction_energy,
)


def fixture_table(dataset, plan) -> EnergyTable:
    """Fragment and species energies taken from the dataset GT column."""
    table = EnergyTable()
    for f in plan.fragments:
        e = next(x for x in dataset.values() if x.molecule == f.molecule)
        table.put(f.molecule, f.label, e.ground_truth_energy, "fixture")
    for c in plan.corrections:
        if c.applied:
            table.put(c.species, c.label, dataset[c.label].ground_truth_energy, "fixture")
    return table


def fake_result(energy, converged=True):
    return ScfResult("RHF", energy, energy, 0.0, converged, 5, [], 1e-8 if converged else 1e-2)


def test_gly_gly_arithmetic(dataset):
    plan = fragment_peptide(dataset["Gly-Gly"].molecule)
    res = reassemble(plan, fixture_table(dataset, plan))
    assert res.em == pytest.approx(2 * -279.11151 + 74.96589, abs=1e-9)
    assert res.em == pytest.approx(-483.25713, abs=1e-4)


def test_special_ledgers(dataset):
    for label, em in (("Cystine", -1420.59711), ("Aspartame", -1011.31538)):
        plan = fragment_peptide(dataset[label].molecule)
        assert reassemble(plan, fixture_table(dataset, plan)).em == pytest.approx(em, abs=1e-4)


def test_bookkeeping_only_terms_contribute_nothing(dataset):
    plan = fragment_peptide(dataset["Aspartame"].molecule)
    res = reassemble(plan, fixture_table(dataset, plan))
    labels = [c.label for c in res.correction_contributions]
    assert sorted(labels) == ["CH3", "H2O"]


def test_contributions_add_up(dataset):
    plan = fragment_peptide(dataset["Gly-His-Lys"].molecule)
    res = reassemble(plan, fixture_table(dataset, plan))
    assert sum(c.value for c in res.contributions) == pytest.approx(res.em, abs=1e-9)
    water = [c for c in res.contributions if c.label == "H2O"]
    assert water[0].factor == -2
    json.loads(res.to_json())


def test_order_independent(dataset):
    plan = fragment_peptide(dataset["His-Arg-Val"].molecule)
    table = fixture_table(dataset, plan)
    ref = reassemble(plan, table).em
    rng = random.Random(0)
    for _ in range(5):
        frags = list(plan.fragments)
        rng.shuffle(frags)
        shuffled = type(plan)(plan.source, tuple(frags), plan.corrections, plan.mode, plan.sites)
        assert reassemble(shuffled, table).em == ref


def test_missing_energy_names_fragment(dataset):
    plan = fragment_peptide(dataset["Gly-Ala"].molecule)
    table = EnergyTable()
    gly = plan.fragments[0]
    table.put(gly.molecule, gly.label, -279.11151, "fixture")
    water = plan.corrections[0]
    table.put(water.species, water.label, -74.96589, "fixture")
    with pytest.raises(MissingEnergyError, match="ALA"):
        reassemble(plan, table)


def test_unconverged_energy_rejected(dataset):
    plan = fragment_amino_acid(dataset["Glycine"].molecule)
    table = EnergyTable()
    for i, f in enumerate(plan.fragments):
        table.put(f.molecule, f.label, -10.0 - i, converged=(f.label != "COOH"))
    with pytest.raises(UnconvergedEnergyError, match="COOH"):
        reassemble(plan, table)


def test_table_identity_and_conflicts(water):
    table = EnergyTable()
    table.put(water, "H2O", -74.9)
    table.put(water, "H2O", -74.9)  # same value: fine
    assert len(table) == 1
    with pytest.raises(EnergyConflictError):
        table.put(water, "H2O", -74.8)
    moved = water.translated([0.5, 0, 0])
    table.put(moved, "H2O", -74.8)  # a different geometry is a different identity
    assert len(table) == 2
    with pytest.raises(ValueError):
        table.put(water, "x", -1.0, provenance="guess")


def test_resolve_correction_energy_uses_table_then_engine(dataset):
    plan = fragment_peptide(dataset["Cystine"].molecule)
    term = plan.corrections[0]
    table = EnergyTable()
    calls = []

    def engine(m):
        calls.append(m.name)
        return fake_result(-1.11749)

    assert resolve_correction_energy(term, engine, table) == -1.11749
    assert resolve_correction_energy(term, engine, table) == -1.11749
    assert len(calls) == 1


def test_resolve_correction_energy_refuses_unconverged(dataset):
    term = fragment_peptide(dataset["Cystine"].molecule).corrections[0]
    with pytest.raises(UnconvergedEnergyError):
        resolve_correction_energy(term, lambda m: fake_result(-1.0, False), EnergyTable())


def test_resolve_with_real_engine():
    from pepfrag.fragmenter import CorrectionTerm

    term = CorrectionTerm("H2", h2(), -1)
    e = resolve_correction_energy(term, None, EnergyTable())
    assert e == pytest.approx(-1.1167, abs=1e-4)
