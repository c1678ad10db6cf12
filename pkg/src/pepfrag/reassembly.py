"""Reassembled energy: fragment energies plus the signed correction ledger."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable

from .cache import cache_key, default_method
from .fragmenter import CorrectionTerm, FragmentPlan
from .hf import ScfResult, run_scf
from .molio import Molecule

PROVENANCES = ("computed", "fixture", "cache")


class ReassemblyError(ValueError):
    pass


class MissingEnergyError(ReassemblyError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


class UnconvergedEnergyError(ReassemblyError):
    pass


class EnergyConflictError(ReassemblyError):
    pass


@dataclass(frozen=True)
class EnergyRecord:
    label: str
    energy: float
    provenance: str
    converged: bool = True
    method: str = ""
    key: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "energy_ha": self.energy,
            "provenance": self.provenance,
            "converged": self.converged,
            "method": self.method,
            "key": self.key,
        }


def energy_identity(m: Molecule, label: str, method: str | None = None,
                    basis: str = "STO-3G") -> tuple[str, str]:
    """(label, key) where key hashes geometry, method, basis, charge and multiplicity."""
    return label, cache_key(m, method or default_method(m), basis)


class EnergyTable:
    """Energies by identity. Re-adding an identity with another value is an error."""

    def __init__(self, basis: str = "STO-3G"):
        self.basis = basis
        self._records: dict[tuple[str, str], EnergyRecord] = {}
        self._lock = threading.Lock()

    def identity(self, m: Molecule, label: str, method: str | None = None) -> tuple[str, str]:
        return energy_identity(m, label, method, self.basis)

    def put(self, m: Molecule, label: str, energy: float, provenance: str = "computed",
            converged: bool = True, method: str | None = None) -> EnergyRecord:
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        method = method or default_method(m)
        ident = self.identity(m, label, method)
        record = EnergyRecord(label, float(energy), provenance, converged, method, ident[1])
        with self._lock:
            old = self._records.get(ident)
            if old is not None:
                if old.energy != record.energy:
                    raise EnergyConflictError(
                        f"{label!r}: identity already holds {old.energy!r}, refusing {record.energy!r}"
                    )
                return old
            self._records[ident] = record
        return record

    def get(self, m: Molecule, label: str, method: str | None = None) -> EnergyRecord | None:
        return self._records.get(self.identity(m, label, method))

    def __contains__(self, item: tuple[Molecule, str]) -> bool:
        return self.get(*item) is not None

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[EnergyRecord]:
        return sorted(self._records.values(), key=lambda r: (r.label, r.key))


@dataclass(frozen=True)
class Contribution:
    kind: str  # "fragment" | "correction"
    label: str
    index: int
    energy: float  # per unit, Hartree
    factor: int  # +1 for fragments; sign * count for corrections
    value: float  # factor * energy
    provenance: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "index": self.index,
            "energy_ha": self.energy,
            "factor": self.factor,
            "value_ha": self.value,
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class ReassemblyResult:
    em: float
    contributions: tuple[Contribution, ...]
    plan: FragmentPlan = field(repr=False)

    @property
    def fragment_contributions(self) -> list[Contribution]:
        return [c for c in self.contributions if c.kind == "fragment"]

    @property
    def correction_contributions(self) -> list[Contribution]:
        return [c for c in self.contributions if c.kind == "correction"]

    def to_dict(self) -> dict:
        return {
            "source": self.plan.source.name,
            "mode": self.plan.mode,
            "em_ha": self.em,
            "contributions": [c.to_dict() for c in self.contributions],
            "plan": self.plan.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _require(table: EnergyTable, m: Molecule, label: str, what: str) -> EnergyRecord:
    rec = table.get(m, label)
    if rec is None:
        raise MissingEnergyError(f"no energy for {what} {label!r} ({m.name})")
    if not rec.converged:
        raise UnconvergedEnergyError(f"energy for {what} {label!r} comes from an unconverged SCF")
    return rec


def reassemble(plan: FragmentPlan, energies: EnergyTable) -> ReassemblyResult:
    """Em = sum of fragment energies + sum of sign * count * species energy.

    Summands are listed by (kind, label, index) and added with ``math.fsum``,
    which is correctly rounded, so Em does not depend on fragment order.
    """
    parts = []
    for i, frag in enumerate(plan.fragments):
        rec = _require(energies, frag.molecule, frag.label, "fragment")
        parts.append(Contribution("fragment", frag.label, i, rec.energy, 1, rec.energy, rec.provenance))
    for j, term in enumerate(plan.corrections):
        if not term.applied:
            continue
        rec = _require(energies, term.species, term.label, "correction species")
        factor = term.sign * term.count
        parts.append(Contribution("correction", term.label, j, rec.energy, factor,
                                  factor * rec.energy, rec.provenance))
    parts.sort(key=lambda c: (c.kind, c.label, c.index))
    em = math.fsum(c.value for c in parts)
    return ReassemblyResult(em, tuple(parts), plan)


Engine = Callable[[Molecule], ScfResult]


def resolve_correction_energy(term: CorrectionTerm, engine: Engine | None,
                              cache: EnergyTable) -> float:
    """Energy of one unit of ``term.species``: table first, else run the engine and store it."""
    rec = cache.get(term.species, term.label)
    if rec is not None:
        if not rec.converged:
            raise UnconvergedEnergyError(f"cached energy for {term.label!r} is unconverged")
        return rec.energy
    if term.species is None or len(term.species) == 0:
        raise ReassemblyError(f"no geometry for correction species {term.label!r}")
    result = (engine or run_scf)(term.species)
    if not result.converged:
        raise UnconvergedEnergyError(
            f"SCF for {term.label!r} did not converge (|FPS-SPF|={result.final_gradient_norm:.2e})"
        )
    cache.put(term.species, term.label, result.total_energy, "computed", True, result.method)
    return result.total_energy
