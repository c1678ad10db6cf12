"""Regenerate the golden report CSVs under src/pepfrag/data/golden/.

Run after changing ground_truth.csv; ``pepfrag report --golden`` diffs against these.
"""

from pathlib import Path

from pepfrag.pipeline import arithmetic_report, published_report

OUT = Path(__file__).resolve().parents[1] / "src" / "pepfrag" / "data" / "golden"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    reports = {
        "peptide_arithmetic": arithmetic_report()[0],
        "peptide_published": published_report("peptide"),
        "amino_acid_published": published_report("amino_acid"),
    }
    for name, rep in reports.items():
        (OUT / f"{name}.csv").write_text(rep.to_csv())
        print(f"{name}: {len(rep.rows)} rows, mean RE {rep.mean_re:.5f} %, std {rep.std_re:.5f} %")


if __name__ == "__main__":
    main()
