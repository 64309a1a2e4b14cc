"""Optimistic-bias ledger and difficulty-vs-importance series.

Accuracies are carried as exact decimal percentages (2-decimal fixed point)
so published-table comparisons are free of binary-float drift. For each
(method, test set) holding both an identity-overlapped (cleaned) and an
identity-disjoint accuracy:

* importance = acc_overlap_c - acc_disjoint  (the optimistic bias)
* difficulty = (acc_overlap_c + acc_disjoint) / 2  (lower = harder test)

Row averages are quantized back to 2 decimals before differencing, matching
how published tables derive their average-bias cells from printed averages.

Input records: comma-separated ``method,variant,test_set,accuracy`` lines.
Outputs: a bias ledger, a plot-series file
``method,test_set,difficulty,importance``, and (optionally) a rendered
figure of the series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path

from .errors import FormatError, ValidationError

OVERLAP_C = "ID-Overlap-C"
DISJOINT = "ID-Disjoint"
OVERLAP_R = "ID-Overlap-R"

_TWO_PLACES = Decimal("0.01")


@dataclass(frozen=True)
class AccuracyRecord:
    method: str
    variant: str
    test_set: str
    accuracy: Decimal  # percentage in [0, 100]

    def __post_init__(self) -> None:
        if not (Decimal(0) <= self.accuracy <= Decimal(100)):
            raise ValidationError(
                f"accuracy {self.accuracy} out of [0, 100] for "
                f"{self.method}/{self.variant}/{self.test_set}"
            )


@dataclass(frozen=True)
class BiasCell:
    method: str
    test_set: str
    acc_overlap_c: Decimal
    acc_disjoint: Decimal

    @property
    def importance(self) -> Decimal:
        return self.acc_overlap_c - self.acc_disjoint

    @property
    def difficulty(self) -> Decimal:
        return (self.acc_overlap_c + self.acc_disjoint) / 2


@dataclass(frozen=True)
class MethodBias:
    method: str
    avg_overlap_c: Decimal  # quantized to 2 decimals
    avg_disjoint: Decimal  # quantized to 2 decimals

    @property
    def bias(self) -> Decimal:
        return self.avg_overlap_c - self.avg_disjoint


@dataclass
class BiasReport:
    cells: dict[tuple[str, str], BiasCell]  # (method, test_set) -> cell
    methods: dict[str, MethodBias]
    test_set_bias: dict[str, Decimal]  # cross-method mean importance per test set

    def cell(self, method: str, test_set: str) -> BiasCell:
        try:
            return self.cells[(method, test_set)]
        except KeyError:
            raise ValidationError(f"no bias cell for {method}/{test_set}") from None


def _round2(value: Decimal) -> Decimal:
    return value.quantize(_TWO_PLACES, rounding=ROUND_HALF_UP)


def read_accuracy_records(path: str | Path) -> list[AccuracyRecord]:
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if [c.strip().lower() for c in row] == ["method", "variant", "test_set", "accuracy"]:
                continue  # optional header
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected method,variant,test_set,accuracy")
            method, variant, test_set, acc = (c.strip() for c in row)
            try:
                accuracy = Decimal(acc)
            except ArithmeticError as exc:
                raise FormatError(f"{path}:{lineno}: bad accuracy {acc!r}") from exc
            records.append(AccuracyRecord(method, variant, test_set, accuracy))
    _check_unique(records)
    return records


def _check_unique(records: list[AccuracyRecord]) -> None:
    seen = set()
    for r in records:
        key = (r.method, r.variant, r.test_set)
        if key in seen:
            raise ValidationError(f"duplicate record for {'/'.join(key)}")
        seen.add(key)


def compute_bias(records: list[AccuracyRecord]) -> BiasReport:
    """Bias cells plus per-method and per-test-set aggregates.

    Every (method, test set) must carry both an ID-Overlap-C and an
    ID-Disjoint record; a missing counterpart is an error naming the hole.
    """
    _check_unique(records)
    by_key: dict[tuple[str, str, str], Decimal] = {
        (r.method, r.variant, r.test_set): r.accuracy for r in records
    }
    pairs = sorted(
        {(r.method, r.test_set) for r in records if r.variant in (OVERLAP_C, DISJOINT)}
    )
    if not pairs:
        raise ValidationError("no ID-Overlap-C / ID-Disjoint records to compare")
    cells: dict[tuple[str, str], BiasCell] = {}
    for method, test_set in pairs:
        overlap = by_key.get((method, OVERLAP_C, test_set))
        disjoint = by_key.get((method, DISJOINT, test_set))
        if overlap is None:
            raise ValidationError(f"missing {OVERLAP_C} record for {method}/{test_set}")
        if disjoint is None:
            raise ValidationError(f"missing {DISJOINT} record for {method}/{test_set}")
        cells[(method, test_set)] = BiasCell(method, test_set, overlap, disjoint)

    methods: dict[str, MethodBias] = {}
    for method in sorted({m for m, _ in cells}):
        row = [c for (m, _), c in cells.items() if m == method]
        avg_c = _round2(sum(c.acc_overlap_c for c in row) / len(row))
        avg_d = _round2(sum(c.acc_disjoint for c in row) / len(row))
        methods[method] = MethodBias(method, avg_c, avg_d)

    test_set_bias: dict[str, Decimal] = {}
    for test_set in sorted({t for _, t in cells}):
        col = [c.importance for (_, t), c in cells.items() if t == test_set]
        test_set_bias[test_set] = sum(col, Decimal(0)) / len(col)

    return BiasReport(cells=cells, methods=methods, test_set_bias=test_set_bias)


@dataclass(frozen=True)
class CurvePoint:
    test_set: str
    difficulty: Decimal
    importance: Decimal


def importance_curve(report: BiasReport) -> dict[str, list[CurvePoint]]:
    """Per-method (difficulty, importance) series sorted by ascending difficulty."""
    curves: dict[str, list[CurvePoint]] = {}
    for (method, test_set), cell in report.cells.items():
        curves.setdefault(method, []).append(
            CurvePoint(test_set, cell.difficulty, cell.importance)
        )
    for method, points in curves.items():
        points.sort(key=lambda p: (p.difficulty, p.test_set))
    return dict(sorted(curves.items()))


def write_bias_ledger(report: BiasReport, path: str | Path) -> None:
    lines = ["optimistic-bias-ledger"]
    lines.append("method\ttest_set\toverlap_c\tdisjoint\timportance\tdifficulty")
    for (method, test_set), cell in sorted(report.cells.items()):
        lines.append(
            f"{method}\t{test_set}\t{cell.acc_overlap_c}\t{cell.acc_disjoint}"
            f"\t{cell.importance}\t{cell.difficulty}"
        )
    lines.append("")
    lines.append("method\tavg_overlap_c\tavg_disjoint\tbias")
    for method, mb in report.methods.items():
        lines.append(f"{method}\t{mb.avg_overlap_c}\t{mb.avg_disjoint}\t{mb.bias}")
    lines.append("")
    lines.append("test_set\tmean_importance")
    for test_set, bias in report.test_set_bias.items():
        lines.append(f"{test_set}\t{bias}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_importance_series(report: BiasReport, path: str | Path) -> None:
    """Plot-ready comma-separated series: method,test_set,difficulty,importance."""
    lines = ["method,test_set,difficulty,importance"]
    for method, points in importance_curve(report).items():
        for p in points:
            lines.append(f"{method},{p.test_set},{p.difficulty},{p.importance}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
