import json
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pepfrag.metrics import (
    ErrorReport,
    ErrorRow,
    MetricsError,
    diff_reports,
    read_report_csv,
    relative_error_pct,
    summarize,
)

finite = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)
nonzero = finite.filter(lambda x: abs(x) > 1e-3)


def test_relative_error_example():
    assert relative_error_pct(-483.25713, -483.23779) == pytest.approx(0.004002, abs=1e-6)


def test_relative_error_zero_gt():
    with pytest.raises(MetricsError):
        relative_error_pct(1.0, 0.0)


@given(nonzero, finite)
def test_relative_error_non_negative(gt, em):
    assert relative_error_pct(em, gt) >= 0


@given(nonzero)
def test_relative_error_zero_iff_equal(gt):
    assert relative_error_pct(gt, gt) == 0


@given(nonzero, finite, st.floats(min_value=0.01, max_value=100))
def test_relative_error_scale_invariant(gt, em, k):
    assert relative_error_pct(k * em, k * gt) == pytest.approx(relative_error_pct(em, gt),
                                                                rel=1e-9, abs=1e-9)


def test_summary_uses_sample_std():
    mean, std = summarize([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert std == pytest.approx(statistics.stdev([1, 2, 3, 4]))
    assert std != pytest.approx(statistics.pstdev([1, 2, 3, 4]))


def test_summary_rejects_short_lists():
    with pytest.raises(MetricsError):
        summarize([])
    with pytest.raises(MetricsError):
        summarize([0.1])


@given(st.lists(st.floats(min_value=0, max_value=10), min_size=2, max_size=30))
def test_summary_order_independent(values):
    a = summarize(values)
    b = summarize(list(reversed(values)))
    assert a[0] == pytest.approx(b[0], abs=1e-12)
    assert a[1] == pytest.approx(b[1], abs=1e-12)


def test_report_skips_unscored_rows():
    rows = (ErrorRow.from_energies("a", -10.0, -10.1), ErrorRow.from_energies("b", -10.0, -10.2),
            ErrorRow("c", None, -5.0, None, "gt_unavailable"))
    rep = ErrorReport(rows)
    assert [r.label for r in rep.scored] == ["a", "b"]
    assert rep.mean_re == pytest.approx(1.5)


def test_report_csv_round_trip(tmp_path):
    rep = ErrorReport.from_pairs([("Gly-Gly", -483.23779, -483.25713),
                                  ("Gly-Ala", -521.82046, -521.83697)])
    text = rep.to_csv()
    assert text.splitlines()[0] == "label,GT_Ha,Em_Ha,RE_pct,status"
    assert text.splitlines()[1] == "Gly-Gly,-483.23779,-483.25713,0.00400,ok"
    path = tmp_path / "r.csv"
    path.write_text(text)
    back = read_report_csv(path)
    assert diff_reports(back, rep, 1e-5, 1e-5) == []


def test_report_json():
    rep = ErrorReport.from_pairs([("x", -1.0, -1.01), ("y", -2.0, -2.0)])
    data = json.loads(rep.to_json())
    assert data["n"] == 2
    assert data["mean_RE_pct"] == pytest.approx(0.5)


def test_diff_reports_flags_changes():
    a = ErrorReport.from_pairs([("x", -1.0, -1.01), ("y", -2.0, -2.0)])
    b = ErrorReport.from_pairs([("x", -1.0, -1.02), ("z", -2.0, -2.0)])
    diffs = {(d.label, d.column) for d in diff_reports(a, b)}
    assert ("x", "em") in diffs and ("x", "re_pct") in diffs
    assert ("y", "row") in diffs and ("z", "row") in diffs


def test_published_peptide_columns(dataset):
    rows = [e for e in dataset.values() if e.role == "peptide"]
    rep = ErrorReport.from_pairs([(e.label, e.ground_truth_energy, e.published_em) for e in rows])
    for r, e in zip(rep.rows, rows):
        assert r.re_pct == pytest.approx(e.published_re_pct, abs=1e-5)
    assert rep.mean_re == pytest.approx(0.00469, abs=1e-4)
    assert rep.std_re == pytest.approx(0.01071, abs=1e-4)
