"""``pepfrag`` command line."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .fragmenter import AMINO_ACID_LEVEL, PEPTIDE_LEVEL, FragmentationError
from .hf import ScfError, ScfOptions
from .metrics import diff_reports, read_report_csv
from .molio import MoleculeError, SdfParseError, data_root, load_dataset, read_sdf_file


def _molecule(source: str):
    """An SDF path, or the label of a bundled fixture."""
    path = Path(source)
    if path.exists():
        return read_sdf_file(path)
    dataset = load_dataset()
    if source in dataset:
        return dataset[source].molecule
    raise click.BadParameter(f"{source!r} is neither a file nor a fixture label")


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for SCF iterations.")
def main(verbose: int) -> None:
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--workers", type=int, default=None, help="Override the worker count.")
def run(config_path: str, workers: int | None) -> None:
    """Run the full pipeline described by a YAML config file."""
    from dataclasses import replace

    from .pipeline import ConfigError, load_config, run_pipeline

    try:
        cfg = load_config(config_path)
        if workers is not None:
            cfg = replace(cfg, workers=workers)
        out = run_pipeline(cfg)
    except (ConfigError, SdfParseError, MoleculeError) as exc:
        click.echo(json.dumps({"ok": False, "error": str(exc)}), err=True)
        sys.exit(2)
    for mode, report in out.reports.items():
        click.echo(f"# {mode}")
        click.echo(report.to_csv(), nl=False)
        if len(report.scored) > 1:
            click.echo(f"# mean RE {report.mean_re:.5f} %  sample std {report.std_re:.5f} %")
    click.echo(f"# SCF runs: {out.scf_invocations}; outputs in {cfg.output_dir}")
    if not out.ok:
        click.echo(json.dumps(out.failure_summary()), err=True)
        sys.exit(1)


@main.command()
@click.argument("sdf")
@click.option("--uhf", is_flag=True, help="Force unrestricted HF.")
@click.option("--charge", type=int, default=None)
@click.option("--multiplicity", type=int, default=None)
@click.option("--max-iter", type=int, default=None)
@click.option("--direct/--no-direct", default=None, help="Integral-direct J/K.")
@click.option("--second-order/--no-second-order", default=True, show_default=True,
              help="Fall back to direct orbital minimisation when DIIS stalls or runs out.")
def energy(sdf: str, uhf: bool, charge: int | None, multiplicity: int | None,
           max_iter: int | None, direct: bool | None, second_order: bool) -> None:
    """HF/STO-3G energy of one molecule (SDF path or fixture label)."""
    from .pipeline import energy_of

    opts = {"second_order": second_order}
    if max_iter is not None:
        opts["max_iter"] = max_iter
    if direct is not None:
        opts["direct"] = direct
    try:
        res = energy_of(_molecule(sdf), ScfOptions(**opts), uhf, charge, multiplicity)
    except (ScfError, MoleculeError, SdfParseError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(json.dumps(res.summary(), indent=2))
    if not res.converged:
        sys.exit(1)


@main.command()
@click.argument("sdf")
@click.option("--mode", type=click.Choice([PEPTIDE_LEVEL, AMINO_ACID_LEVEL]), default=PEPTIDE_LEVEL)
@click.option("--dry-run", is_flag=True, help="Print the plan only; no SCF.")
@click.option("--capping", is_flag=True, help="Keep in-place residue geometry with H/OH caps.")
def fragment(sdf: str, mode: str, dry_run: bool, capping: bool) -> None:
    """Fragment a molecule and, unless --dry-run, reassemble its energy."""
    from .pipeline import default_engine, make_plan, plan_jobs
    from .reassembly import EnergyTable, reassemble

    m = _molecule(sdf)
    try:
        plan = make_plan(m, mode, capping)
    except FragmentationError as exc:
        raise click.ClickException(str(exc)) from None
    if dry_run:
        click.echo(plan.to_json())
        return
    table = EnergyTable()
    opts = ScfOptions()
    for job in plan_jobs(plan):
        if table.get(job.molecule, job.label) is None:
            res = default_engine(job.molecule, opts)
            table.put(job.molecule, job.label, res.total_energy, "computed", res.converged, res.method)
    try:
        result = reassemble(plan, table)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(result.to_json())


@main.command()
@click.option("--golden", is_flag=True, help="Diff against the bundled golden files; exit 1 on mismatch.")
@click.option("--from", "from_csv", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Summary CSV from a pipeline run to check instead of the bundled reports.")
@click.option("--against", type=click.Choice(["peptide_arithmetic", "peptide_published",
                                               "amino_acid_published"]),
              default="peptide_published", show_default=True,
              help="Golden file used with --from.")
@click.option("--tol", type=float, default=1e-5, show_default=True,
              help="Energy (Ha) and RE (pp) tolerance for --golden.")
def report(golden: bool, from_csv: str | None, against: str, tol: float) -> None:
    """Reference reports: peptide arithmetic, published peptide and amino-acid rows."""
    from .metrics import ErrorReport
    from .pipeline import arithmetic_report, published_report

    gold_dir = data_root() / "golden"
    if from_csv is not None:
        fresh = {against: read_report_csv(from_csv)}
    else:
        fresh = {
            "peptide_arithmetic": arithmetic_report()[0],
            "peptide_published": published_report("peptide"),
            "amino_acid_published": published_report("amino_acid"),
        }
    failed = False
    for name, rep in fresh.items():
        rep = ErrorReport(tuple(rep.rows))
        click.echo(f"# {name}")
        click.echo(rep.to_csv(), nl=False)
        if len(rep.scored) > 1:
            click.echo(f"# mean RE {rep.mean_re:.5f} %  sample std {rep.std_re:.5f} %")
        if golden:
            gold = read_report_csv(gold_dir / f"{name}.csv")
            rows = rep.rows
            if from_csv is not None:
                # a pipeline run may cover only some of the rows
                labels = {r.label for r in rows}
                gold = ErrorReport(tuple(r for r in gold.rows if r.label in labels))
            diffs = diff_reports(ErrorReport(rows), gold, tol, tol)
            for d in diffs:
                click.echo(f"DIFF {name}: {d}")
            failed |= bool(diffs)
            click.echo(f"# golden {name}: {'MISMATCH' if diffs else 'ok'}")
    if failed:
        sys.exit(1)


@main.command()
@click.argument("identifier")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=".pepfrag-cache/pubchem",
              show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None,
              help="Write the SDF here instead of stdout.")
def fetch(identifier: str, cache_dir: str, output: str | None) -> None:
    """Download a PubChem record (CID or name) as SDF, cached on disk."""
    from .molio import formula_string, molecular_formula, parse_sdf
    from .pubchem import PubChemClient, PubChemError

    try:
        res = PubChemClient(cache_dir).fetch(identifier)
    except PubChemError as exc:
        info = {"error": str(exc), "status": exc.status, "retry_after": exc.retry_after}
        click.echo(json.dumps(info), err=True)
        sys.exit(1)
    if res.warning:
        click.echo(f"warning: {res.warning}", err=True)
    m = parse_sdf(res.sdf)
    click.echo(f"CID {res.cid}: {formula_string(molecular_formula(m))}, "
               f"{'3D' if res.is_3d else '2D'}{' (cached)' if res.from_cache else ''}", err=True)
    if output:
        Path(output).write_bytes(res.sdf)
    else:
        click.echo(res.sdf.decode(), nl=False)


if __name__ == "__main__":
    main()
