import random
from decimal import Decimal

import pytest

from leakage_audit.errors import ValidationError
from leakage_audit.report import (
    AccuracyRecord,
    compute_bias,
    importance_curve,
    read_accuracy_records,
    write_bias_ledger,
    write_importance_series,
)

TEST_SETS = ("LFW", "CPLFW", "CALFW", "MLFW", "TALFW")

# The published table's bias row is computed from its aggregate accuracy
# cells; the per-test-set values below are those cells.
AGG_OVERLAP_C = ("99.79", "93.27", "96.18", "90.38", "62.48")
AGG_DISJOINT = ("99.75", "93.20", "96.07", "89.37", "61.53")
PUBLISHED_BIAS = ("0.04", "0.07", "0.11", "1.01", "0.95")
PUBLISHED_AVG_BIAS = "0.44"

COSFACE_OVERLAP_C = ("99.78", "93.27", "96.18", "90.38", "62.48")
COSFACE_DISJOINT = AGG_DISJOINT


def records_for(method, overlap_values, disjoint_values):
    recs = []
    for t, c, d in zip(TEST_SETS, overlap_values, disjoint_values):
        recs.append(AccuracyRecord(method, "ID-Overlap-C", t, Decimal(c)))
        recs.append(AccuracyRecord(method, "ID-Disjoint", t, Decimal(d)))
    return recs


class TestComputeBias:
    def test_published_bias_row(self):
        report = compute_bias(records_for("agg", AGG_OVERLAP_C, AGG_DISJOINT))
        for t, expected in zip(TEST_SETS, PUBLISHED_BIAS):
            got = report.cell("agg", t).importance
            assert abs(got - Decimal(expected)) <= Decimal("0.005"), (t, got)
        assert abs(report.methods["agg"].bias - Decimal(PUBLISHED_AVG_BIAS)) <= Decimal("0.005")

    def test_published_mlfw_importance(self):
        report = compute_bias(records_for("CosFace", COSFACE_OVERLAP_C, COSFACE_DISJOINT))
        assert report.cell("CosFace", "MLFW").importance == Decimal("1.01")

    def test_published_row_average(self):
        report = compute_bias(records_for("CosFace", COSFACE_OVERLAP_C, COSFACE_DISJOINT))
        mb = report.methods["CosFace"]
        assert mb.avg_overlap_c == Decimal("88.42")
        assert mb.avg_disjoint == Decimal("87.98")
        assert mb.bias == Decimal("0.44")

    def test_talfw_difficulty_exact(self):
        report = compute_bias(records_for("CosFace", COSFACE_OVERLAP_C, COSFACE_DISJOINT))
        assert report.cell("CosFace", "TALFW").difficulty == Decimal("62.005")

    def test_equal_accuracies(self):
        recs = [
            AccuracyRecord("m", "ID-Overlap-C", "X", Decimal("90.00")),
            AccuracyRecord("m", "ID-Disjoint", "X", Decimal("90.00")),
        ]
        report = compute_bias(recs)
        cell = report.cell("m", "X")
        assert cell.importance == Decimal("0")
        assert cell.difficulty == Decimal("90.00")

    def test_missing_counterpart_names_hole(self):
        recs = [AccuracyRecord("m", "ID-Overlap-C", "X", Decimal("90.00"))]
        with pytest.raises(ValidationError, match="ID-Disjoint record for m/X"):
            compute_bias(recs)

    def test_permutation_invariant(self):
        recs = records_for("a", AGG_OVERLAP_C, AGG_DISJOINT) + records_for(
            "b", COSFACE_OVERLAP_C, COSFACE_DISJOINT
        )
        base = compute_bias(recs)
        shuffled = list(recs)
        random.Random(4).shuffle(shuffled)
        other = compute_bias(shuffled)
        assert base.cells == other.cells
        assert base.methods == other.methods
        assert base.test_set_bias == other.test_set_bias

    def test_uniform_shift_moves_difficulty_not_importance(self):
        base = compute_bias(records_for("m", AGG_OVERLAP_C, AGG_DISJOINT))
        shift = Decimal("-0.25")
        shifted_records = [
            AccuracyRecord(r.method, r.variant, r.test_set, r.accuracy + shift)
            for r in records_for("m", AGG_OVERLAP_C, AGG_DISJOINT)
        ]
        shifted = compute_bias(shifted_records)
        for t in TEST_SETS:
            assert shifted.cell("m", t).importance == base.cell("m", t).importance
            assert shifted.cell("m", t).difficulty == base.cell("m", t).difficulty + shift

    def test_extra_variants_ignored(self):
        recs = records_for("m", AGG_OVERLAP_C, AGG_DISJOINT)
        recs.append(AccuracyRecord("m", "ID-Overlap-R", "LFW", Decimal("99.82")))
        recs.append(AccuracyRecord("m", "Retrained-OF", "LFW", Decimal("99.75")))
        report = compute_bias(recs)
        assert len(report.cells) == len(TEST_SETS)

    def test_accuracy_range_validated(self):
        with pytest.raises(ValidationError, match="out of"):
            AccuracyRecord("m", "ID-Disjoint", "X", Decimal("100.01"))


class TestImportanceCurve:
    def test_five_point_series_sorted_by_difficulty(self):
        report = compute_bias(records_for("CosFace", COSFACE_OVERLAP_C, COSFACE_DISJOINT))
        curves = importance_curve(report)
        points = curves["CosFace"]
        assert len(points) == 5
        assert points[0].test_set == "TALFW"
        assert points[0].difficulty == Decimal("62.005")
        assert points[0].importance == Decimal("0.95")
        difficulties = [p.difficulty for p in points]
        assert difficulties == sorted(difficulties)

    def test_single_test_set_single_point(self):
        recs = [
            AccuracyRecord("m", "ID-Overlap-C", "X", Decimal("80.00")),
            AccuracyRecord("m", "ID-Disjoint", "X", Decimal("79.00")),
        ]
        curves = importance_curve(compute_bias(recs))
        assert len(curves["m"]) == 1

    def test_synthetic_monotone_fixture_sorted_by_independent_oracle(self):
        rng = random.Random(9)
        names = [f"set{i}" for i in range(8)]
        recs = []
        raw = []
        for name in names:
            c = Decimal(rng.randint(5000, 9900)) / 100
            d = c - Decimal(rng.randint(1, 300)) / 100
            recs.append(AccuracyRecord("m", "ID-Overlap-C", name, c))
            recs.append(AccuracyRecord("m", "ID-Disjoint", name, d))
            raw.append((name, (c + d) / 2))
        curves = importance_curve(compute_bias(recs))
        oracle_order = [n for n, _ in sorted(raw, key=lambda x: (x[1], x[0]))]
        assert [p.test_set for p in curves["m"]] == oracle_order


class TestRecordIO:
    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "acc.csv"
        path.write_text(
            "method,variant,test_set,accuracy\n"
            "CosFace,ID-Overlap-C,LFW,99.78\n"
            "CosFace,ID-Disjoint,LFW,99.75\n"
            "# comment line\n"
            "CosFace,ID-Overlap-R,LFW,99.82\n"
        )
        records = read_accuracy_records(path)
        assert len(records) == 3
        assert records[0].accuracy == Decimal("99.78")

    def test_duplicate_cell_rejected(self, tmp_path):
        path = tmp_path / "acc.csv"
        path.write_text("m,ID-Disjoint,X,90.00\nm,ID-Disjoint,X,91.00\n")
        with pytest.raises(ValidationError, match="duplicate"):
            read_accuracy_records(path)

    def test_ledger_and_series_files(self, tmp_path):
        report = compute_bias(records_for("CosFace", COSFACE_OVERLAP_C, COSFACE_DISJOINT))
        ledger = tmp_path / "ledger.txt"
        series = tmp_path / "series.csv"
        write_bias_ledger(report, ledger)
        write_importance_series(report, series)
        text = ledger.read_text()
        assert "CosFace\tTALFW\t62.48\t61.53\t0.95\t62.005" in text
        assert "CosFace\t88.42\t87.98\t0.44" in text
        lines = series.read_text().splitlines()
        assert lines[0] == "method,test_set,difficulty,importance"
        assert "CosFace,TALFW,62.005,0.95" in lines
