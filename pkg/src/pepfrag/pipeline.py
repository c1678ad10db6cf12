"""Batch driver: load inputs, fragment, compute energies cache-first, reassemble, report."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import yaml

from .cache import CacheRecord, EnergyCache, cache_key, canonical_form, default_method
from .fragmenter import (
    AMINO_ACID_LEVEL,
    PEPTIDE_LEVEL,
    FragmentationError,
    FragmentPlan,
    fragment_amino_acid,
    fragment_peptide,
)
from .hf import ScfOptions, ScfResult, run_scf
from .metrics import ErrorReport, ErrorRow, relative_error_pct
from .molio import Molecule, load_dataset, parse_sdf, read_sdf_file, sdf_properties
from .reassembly import EnergyTable, ReassemblyError, reassemble

log = logging.getLogger(__name__)

MODES = (PEPTIDE_LEVEL, AMINO_ACID_LEVEL, "both")
FORMATS = ("csv", "json")
FIXTURE_GROUPS = {
    "peptides": "peptide",
    "amino_acids": "amino_acid",
}
# SDF data field holding an optional reference energy for sdf_dir inputs
GT_PROPERTY = "GT_ENERGY_HA"

Engine = Callable[[Molecule, ScfOptions], ScfResult]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    fixtures: tuple[str, ...] = ()
    sdf_dir: Path | None = None
    pubchem: tuple[str, ...] = ()
    mode: str = PEPTIDE_LEVEL
    scf: ScfOptions = field(default_factory=ScfOptions)
    compute_ground_truth: bool = False
    cache_path: Path | None = Path(".pepfrag-cache/energies")
    pubchem_cache: Path = Path(".pepfrag-cache/pubchem")
    workers: int = 1
    output_dir: Path = Path("pepfrag-out")
    formats: tuple[str, ...] = FORMATS
    capping: bool = False
    data_root: Path | None = None

    def __post_init__(self) -> None:
        sources = [bool(self.fixtures), self.sdf_dir is not None, bool(self.pubchem)]
        if sum(sources) != 1:
            raise ConfigError("exactly one input source (fixtures, sdf_dir, pubchem) is required")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = set(self.formats) - set(FORMATS)
        if bad or not self.formats:
            raise ConfigError(f"formats must be a non-empty subset of {FORMATS}")
        if self.sdf_dir is not None and not Path(self.sdf_dir).is_dir():
            raise ConfigError(f"sdf_dir {self.sdf_dir} is not a directory")

    @property
    def modes(self) -> tuple[str, ...]:
        return (PEPTIDE_LEVEL, AMINO_ACID_LEVEL) if self.mode == "both" else (self.mode,)

    @classmethod
    def from_mapping(cls, data: dict, base: Path | None = None) -> "PipelineConfig":
        """Build from the nested mapping of a config file; relative paths resolve against ``base``."""
        data = dict(data or {})
        base = base or Path.cwd()

        def path(p):
            return None if p is None else (base / Path(p)).resolve()

        known = {"input", "mode", "scf", "compute_ground_truth", "cache", "workers",
                 "output", "capping", "data_root"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        src = data.get("input") or {}
        unknown = set(src) - {"fixtures", "sdf_dir", "pubchem"}
        if unknown:
            raise ConfigError(f"unknown input keys: {sorted(unknown)}")
        fixtures = src.get("fixtures") or ()
        if isinstance(fixtures, str):
            fixtures = (fixtures,)
        pubchem = src.get("pubchem") or ()
        if isinstance(pubchem, (str, int)):
            pubchem = (pubchem,)
        cache = data.get("cache") or {}
        out = data.get("output") or {}
        try:
            scf = ScfOptions.from_mapping(data.get("scf"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        enabled = cache.get("enabled", True)
        return cls(
            fixtures=tuple(str(f) for f in fixtures),
            sdf_dir=path(src.get("sdf_dir")),
            pubchem=tuple(str(p) for p in pubchem),
            mode=data.get("mode", PEPTIDE_LEVEL),
            scf=scf,
            compute_ground_truth=bool(data.get("compute_ground_truth", False)),
            cache_path=path(cache.get("path", ".pepfrag-cache/energies")) if enabled else None,
            pubchem_cache=path(cache.get("pubchem", ".pepfrag-cache/pubchem")),
            workers=int(data.get("workers", 1)),
            output_dir=path(out.get("dir", "pepfrag-out")),
            formats=tuple(out.get("formats", FORMATS)),
            capping=bool(data.get("capping", False)),
            data_root=path(data.get("data_root")),
        )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return PipelineConfig.from_mapping(data, base=path.parent)


# --- inputs ------------------------------------------------------------------

@dataclass(frozen=True)
class InputMolecule:
    label: str
    molecule: Molecule
    ground_truth: float | None
    role: str | None = None  # dataset role for fixtures, None otherwise


def _fixture_inputs(cfg: PipelineConfig) -> list[InputMolecule]:
    dataset = load_dataset(cfg.data_root)
    picked: dict[str, InputMolecule] = {}
    for name in cfg.fixtures:
        if name in FIXTURE_GROUPS or name == "all":
            roles = set(FIXTURE_GROUPS.values()) if name == "all" else {FIXTURE_GROUPS[name]}
            entries = [e for e in dataset.values() if e.role in roles]
        elif name in dataset:
            entries = [dataset[name]]
        else:
            raise ConfigError(f"no fixture labelled {name!r}")
        for e in entries:
            picked[e.label] = InputMolecule(e.label, e.molecule, e.ground_truth_energy, e.role)
    for item in picked.values():
        if item.role == "correction_species":
            raise ConfigError(f"{item.label!r} is a correction species, not a pipeline input")
        if cfg.mode != "both":
            want = "peptide" if cfg.mode == PEPTIDE_LEVEL else "amino_acid"
            if item.role != want:
                raise ConfigError(f"{item.label!r} is an {item.role} fixture; {cfg.mode} needs {want} inputs")
    return list(picked.values())


def _sdf_inputs(cfg: PipelineConfig) -> list[InputMolecule]:
    items = []
    for path in sorted(Path(cfg.sdf_dir).glob("*.sdf")):
        raw = path.read_bytes()
        m = parse_sdf(raw).replace(name=path.stem)
        gt = sdf_properties(raw).get(GT_PROPERTY)
        items.append(InputMolecule(path.stem, m, float(gt) if gt else None))
    if not items:
        raise ConfigError(f"no *.sdf files in {cfg.sdf_dir}")
    return items


def _pubchem_inputs(cfg: PipelineConfig) -> list[InputMolecule]:
    from .pubchem import PubChemClient

    client = PubChemClient(cfg.pubchem_cache)
    items = []
    for ident in cfg.pubchem:
        res = client.fetch(ident)
        if res.warning:
            log.warning(res.warning)
        items.append(InputMolecule(ident, parse_sdf(res.sdf).replace(name=ident), None))
    return items


def load_inputs(cfg: PipelineConfig) -> list[InputMolecule]:
    if cfg.fixtures:
        items = _fixture_inputs(cfg)
    elif cfg.sdf_dir is not None:
        items = _sdf_inputs(cfg)
    else:
        items = _pubchem_inputs(cfg)
    labels = [i.label for i in items]
    if len(set(labels)) != len(labels):
        raise ConfigError("input labels are not unique")
    return sorted(items, key=lambda i: i.label)


def make_plan(m: Molecule, mode: str, capping: bool = False,
              root: Path | None = None) -> FragmentPlan:
    if mode == PEPTIDE_LEVEL:
        return fragment_peptide(m, root, capping=capping)
    return fragment_amino_acid(m, root)


# --- energies ----------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    label: str
    molecule: Molecule
    method: str
    key: str


@dataclass
class ScfLogEntry:
    label: str
    key: str
    method: str
    energy: float
    converged: bool
    iterations: int
    final_gradient_norm: float
    s_squared: float | None
    seconds: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def default_engine(m: Molecule, opts: ScfOptions) -> ScfResult:
    return run_scf(m, opts)


class EnergyResolver:
    """Fills an EnergyTable from the disk cache or by running SCF jobs in a worker pool."""

    def __init__(self, cfg: PipelineConfig, engine: Engine | None = None):
        self.cfg = cfg
        self.engine = engine or default_engine
        self.cache = EnergyCache(cfg.cache_path) if cfg.cache_path is not None else None
        self.scf_log: list[ScfLogEntry] = []

    def _run(self, job: Job) -> tuple[Job, ScfResult, float]:
        t0 = time.perf_counter()
        result = self.engine(job.molecule, self.cfg.scf)
        return job, result, time.perf_counter() - t0

    def resolve(self, jobs: list[Job], table: EnergyTable) -> None:
        todo = []
        for job in jobs:
            if table.get(job.molecule, job.label, job.method) is not None:
                continue
            rec = None
            if self.cache is not None:
                rec = self.cache.get(job.key, canonical_form(job.molecule, job.method))
            if rec is not None and rec.converged:
                table.put(job.molecule, job.label, rec.energy, "cache", True, job.method)
            else:
                todo.append(job)
        if not todo:
            return
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            # consumed as results arrive (in job order) so each lands in the cache at once
            for job, res, seconds in pool.map(self._run, todo):
                self._record(job, res, seconds, table)

    def _record(self, job: Job, res: ScfResult, seconds: float, table: EnergyTable) -> None:
        entry = ScfLogEntry(job.label, job.key, res.method, res.total_energy, res.converged,
                            res.iterations, res.final_gradient_norm, res.s_squared, seconds)
        self.scf_log.append(entry)
        log.info("SCF %-12s %s E=%.8f converged=%s iterations=%d |FPS-SPF|=%.1e %.1fs",
                 job.label, res.method, res.total_energy, res.converged, res.iterations,
                 res.final_gradient_norm, seconds)
        if res.converged and self.cache is not None:
            self.cache.put(CacheRecord(
                job.key, canonical_form(job.molecule, job.method), res.total_energy, True,
                res.iterations, res.final_gradient_norm, res.method, job.label, res.s_squared,
            ))
        table.put(job.molecule, job.label, res.total_energy, "computed",
                  res.converged, job.method)


def _job(m: Molecule, label: str) -> Job:
    method = default_method(m)
    return Job(label, m, method, cache_key(m, method))


def plan_jobs(plan: FragmentPlan) -> list[Job]:
    jobs = [_job(f.molecule, f.label) for f in plan.fragments]
    jobs += [_job(c.species, c.label) for c in plan.corrections if c.applied]
    return jobs


def _dedupe(jobs: list[Job]) -> list[Job]:
    seen = {}
    for j in jobs:
        seen.setdefault((j.label, j.key), j)
    return sorted(seen.values(), key=lambda j: (j.label, j.key))


# --- driver ------------------------------------------------------------------

@dataclass
class MoleculeOutcome:
    label: str
    mode: str
    row: ErrorRow
    plan: FragmentPlan | None = None
    breakdown: dict | None = None


@dataclass
class PipelineOutcome:
    reports: dict[str, ErrorReport]
    outcomes: list[MoleculeOutcome]
    scf_log: list[ScfLogEntry]
    files: list[Path] = field(default_factory=list)

    @property
    def failures(self) -> list[MoleculeOutcome]:
        return [o for o in self.outcomes if o.row.status == "failed"]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def scf_invocations(self) -> int:
        return len(self.scf_log)

    def failure_summary(self) -> dict:
        return {
            "ok": self.ok,
            "failed": [{"label": o.label, "mode": o.mode, "detail": o.row.detail}
                       for o in self.failures],
        }


def run_pipeline(cfg: PipelineConfig, engine: Engine | None = None) -> PipelineOutcome:
    items = load_inputs(cfg)

    # plan everything before any SCF so configuration mistakes surface early
    # with mode "both" each input goes through whichever level applies to it
    planned: list[tuple[InputMolecule, str, FragmentPlan | None, str]] = []
    for item in items:
        if cfg.mode != "both":
            modes = cfg.modes
        elif item.role is not None:
            modes = (PEPTIDE_LEVEL if item.role == "peptide" else AMINO_ACID_LEVEL,)
        else:
            modes = cfg.modes
        attempts = []
        for mode in modes:
            try:
                attempts.append((item, mode, make_plan(item.molecule, mode, cfg.capping, cfg.data_root), ""))
            except FragmentationError as exc:
                if item.role is not None:
                    raise ConfigError(f"{item.label!r} ({mode}): {exc}") from exc
                attempts.append((item, mode, None, f"fragmentation failed: {exc}"))
        if cfg.mode == "both" and any(a[2] is not None for a in attempts):
            attempts = [a for a in attempts if a[2] is not None]
        planned += attempts

    resolver = EnergyResolver(cfg, engine)
    shared = EnergyTable()
    tables: dict[int, EnergyTable] = {}
    gt_jobs = {}
    all_jobs = []
    for n, (item, mode, plan, _) in enumerate(planned):
        jobs = plan_jobs(plan) if plan is not None else []
        if cfg.compute_ground_truth:
            gt_jobs[item.label] = _job(item.molecule, f"GT:{item.label}")
            jobs.append(gt_jobs[item.label])
        if cfg.cache_path is None:
            # no sharing between molecules when caching is off
            tables[n] = EnergyTable()
            resolver.resolve(_dedupe(jobs), tables[n])
        else:
            all_jobs += jobs
    if cfg.cache_path is not None:
        resolver.resolve(_dedupe(all_jobs), shared)

    outcomes = []
    for n, (item, mode, plan, err) in enumerate(planned):
        table = tables.get(n, shared)
        gt = item.ground_truth
        if cfg.compute_ground_truth:
            rec = table.get(item.molecule, f"GT:{item.label}")
            gt = rec.energy if rec is not None and rec.converged else None
            if rec is not None and not rec.converged:
                err = err or "ground-truth SCF did not converge"
        if plan is None or err:
            row = ErrorRow(item.label, gt, None, None, "failed", err)
            outcomes.append(MoleculeOutcome(item.label, mode, row, plan))
            continue
        try:
            result = reassemble(plan, table)
        except ReassemblyError as exc:
            row = ErrorRow(item.label, gt, None, None, "failed", str(exc))
            outcomes.append(MoleculeOutcome(item.label, mode, row, plan))
            continue
        if gt is None:
            row = ErrorRow(item.label, None, result.em, None, "gt_unavailable")
        else:
            row = ErrorRow(item.label, gt, result.em, relative_error_pct(result.em, gt))
        breakdown = result.to_dict()
        breakdown["ground_truth"] = {
            "energy_ha": gt,
            "source": "computed" if cfg.compute_ground_truth else ("dataset" if gt is not None else None),
        }
        breakdown["re_pct"] = row.re_pct
        outcomes.append(MoleculeOutcome(item.label, mode, row, plan, breakdown))

    reports = {
        mode: ErrorReport(tuple(o.row for o in sorted(outcomes, key=lambda o: o.label)
                                if o.mode == mode))
        for mode in cfg.modes
    }
    out = PipelineOutcome(reports, outcomes, resolver.scf_log)
    out.files = write_outputs(cfg, out, shared if cfg.cache_path is not None else None)
    return out


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


def write_outputs(cfg: PipelineConfig, out: PipelineOutcome,
                  table: EnergyTable | None) -> list[Path]:
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    files = []
    for mode, report in out.reports.items():
        if "csv" in cfg.formats:
            p = root / f"summary_{mode}.csv"
            p.write_text(report.to_csv())
            files.append(p)
        if "json" in cfg.formats:
            p = root / f"summary_{mode}.json"
            p.write_text(report.to_json() + "\n")
            files.append(p)
    if "json" in cfg.formats:
        mol_dir = root / "molecules"
        mol_dir.mkdir(exist_ok=True)
        for o in out.outcomes:
            p = mol_dir / f"{_safe(o.label)}.{o.mode}.json"
            body = o.breakdown or {"source": o.label, "mode": o.mode,
                                   "status": o.row.status, "detail": o.row.detail,
                                   "plan": o.plan.to_dict() if o.plan else None}
            p.write_text(json.dumps(body, indent=2) + "\n")
            files.append(p)
    p = root / "scf_log.jsonl"
    p.write_text("".join(json.dumps(e.to_dict()) + "\n" for e in out.scf_log))
    files.append(p)
    if table is not None:
        p = root / "energies.json"
        p.write_text(json.dumps([r.to_dict() for r in table.records()], indent=1) + "\n")
        files.append(p)
    p = root / "status.json"
    p.write_text(json.dumps(out.failure_summary(), indent=2) + "\n")
    files.append(p)
    return files


# --- table arithmetic --------------------------------------------------------

def arithmetic_report(root: Path | None = None) -> tuple[ErrorReport, dict[str, float]]:
    """Peptide report built from the dataset's amino-acid and species energies alone.

    No SCF runs: each bundled peptide is fragmented and reassembled with the
    reference energies stored in ``ground_truth.csv``. Returns the report and
    the Em value per peptide.
    """
    dataset = load_dataset(root)
    table = EnergyTable()
    for e in dataset.values():
        if e.role in ("amino_acid", "correction_species") and e.ground_truth_energy is not None:
            label = e.sequence.upper() if e.role == "amino_acid" else e.label
            table.put(e.molecule, label, e.ground_truth_energy, "fixture")
    rows, ems = [], {}
    for e in dataset.values():
        if e.role != "peptide":
            continue
        em = reassemble(fragment_peptide(e.molecule, root), table).em
        ems[e.label] = em
        rows.append(ErrorRow.from_energies(e.label, e.ground_truth_energy, em))
    return ErrorReport(tuple(rows)), ems


def published_report(role: str, root: Path | None = None) -> ErrorReport:
    """(GT, Em) pairs exactly as printed in the dataset, for ``peptide`` or ``amino_acid``."""
    rows = [ErrorRow.from_energies(e.label, e.ground_truth_energy, e.published_em)
            for e in load_dataset(root).values()
            if e.role == role and e.published_em is not None]
    return ErrorReport(tuple(rows))


def energy_of(path_or_mol: str | Path | Molecule, opts: ScfOptions | None = None,
              uhf: bool = False, charge: int | None = None,
              multiplicity: int | None = None) -> ScfResult:
    from .hf import scf_uhf

    m = path_or_mol if isinstance(path_or_mol, Molecule) else read_sdf_file(path_or_mol)
    changes = {}
    if charge is not None:
        changes["net_charge"] = charge
        if multiplicity is None:
            changes["multiplicity"] = None
    if multiplicity is not None:
        changes["multiplicity"] = multiplicity
    if changes:
        m = m.replace(**changes)
    if uhf:
        return scf_uhf(m, opts=opts)
    return run_scf(m, opts)


__all__ = [
    "ConfigError",
    "EnergyResolver",
    "InputMolecule",
    "PipelineConfig",
    "PipelineOutcome",
    "arithmetic_report",
    "energy_of",
    "load_config",
    "load_inputs",
    "make_plan",
    "published_report",
    "run_pipeline",
]
