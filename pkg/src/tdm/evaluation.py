"""Per-class precision/recall, macro averages and Table-1 style reports."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i][j]``: samples of true class ``classes[i]`` predicted as ``classes[j]``."""

    classes: tuple
    counts: tuple

    def index(self, c) -> int:
        try:
            return self.classes.index(c)
        except ValueError:
            raise KeyError(f"class {c!r} not in confusion matrix") from None

    def count(self, true, pred) -> int:
        return self.counts[self.index(true)][self.index(pred)]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=int)


def confusion(pairs: Iterable[tuple], classes: Sequence) -> ConfusionMatrix:
    classes = tuple(classes)
    pos = {c: i for i, c in enumerate(classes)}
    counts = [[0] * len(classes) for _ in classes]
    for true, pred in pairs:
        for c in (true, pred):
            if c not in pos:
                raise ValueError(f"class {c!r} is not among {list(classes)}")
        counts[pos[true]][pos[pred]] += 1
    return ConfusionMatrix(classes, tuple(map(tuple, counts)))


def precision_recall(m: ConfusionMatrix, c) -> tuple:
    """(precision, recall) of class *c*; a zero denominator gives 0.0."""
    i = m.index(c)
    hit = m.counts[i][i]
    predicted = sum(row[i] for row in m.counts)
    actual = sum(m.counts[i])
    return (hit / predicted if predicted else 0.0, hit / actual if actual else 0.0)


def macro_average(values: Iterable[float]) -> float:
    """Unweighted mean across classes."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("macro average of no values")
    return math.fsum(values) / len(values)


def round_half_up(x: float, places: int = 2) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class EvalReport:
    model_id: str
    classes: tuple
    precision: tuple
    recall: tuple
    macro_precision: float
    macro_recall: float
    confusion: Optional[ConfusionMatrix] = None
    mask: str = ""

    def per_class(self) -> dict:
        return {c: (p, r) for c, p, r in zip(self.classes, self.precision, self.recall)}


def evaluate_pairs(pairs: Sequence[tuple], classes: Sequence, model_id: str = "model", mask: str = "") -> EvalReport:
    m = confusion(pairs, classes)
    pr = [precision_recall(m, c) for c in m.classes]
    precision = tuple(p for p, _ in pr)
    recall = tuple(r for _, r in pr)
    return EvalReport(
        model_id=model_id,
        classes=m.classes,
        precision=precision,
        recall=recall,
        macro_precision=macro_average(precision),
        macro_recall=macro_average(recall),
        confusion=m,
        mask=mask,
    )


CSV_HEADER = ("model_id", "class_id", "precision", "recall")


def render_report(r: EvalReport, fmt: str = "table") -> str:
    if fmt == "csv":
        return _render_csv(r)
    if fmt == "table":
        return _render_table(r)
    raise ValueError(f"unknown report format {fmt!r}")


def _render_csv(r: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c, p, rec in zip(r.classes, r.precision, r.recall):
        w.writerow([r.model_id, c, repr(float(p)), repr(float(rec))])
    w.writerow([r.model_id, "macro", repr(float(r.macro_precision)), repr(float(r.macro_recall))])
    return buf.getvalue()


def _render_table(r: EvalReport) -> str:
    return render_comparison([r])


def render_comparison(reports: Sequence[EvalReport]) -> str:
    """Several reports on the same classes as rows of one precision/recall table."""
    if not reports:
        raise ValueError("no reports to render")
    classes = reports[0].classes
    if any(r.classes != classes for r in reports):
        raise ValueError("reports cover different classes")
    cols = [str(c) for c in classes] + ["avg"]
    label_w = max(len("SSV2 class"), *(len(r.model_id) for r in reports))
    cell_w = max(4, *(len(c) for c in cols))
    block_w = len(cols) * (cell_w + 1) - 1

    def row(label, left, right):
        lhs = " ".join(v.rjust(cell_w) for v in left)
        rhs = " ".join(v.rjust(cell_w) for v in right)
        return f"{label.ljust(label_w)} | {lhs} | {rhs}"

    lines = [
        f"{'Metric'.ljust(label_w)} | {'Precision'.center(block_w)} | {'Recall'.center(block_w)}",
        row("SSV2 class", cols, cols),
        "-" * (label_w + 2 * block_w + 6),
    ]
    for r in reports:
        p_cells = [round_half_up(v) for v in (*r.precision, r.macro_precision)]
        r_cells = [round_half_up(v) for v in (*r.recall, r.macro_recall)]
        lines.append(row(r.model_id, p_cells, r_cells))
    if len(reports) == 1 and reports[0].mask:
        lines.append(f"(features: {reports[0].mask})")
    return "\n".join(line.rstrip() for line in lines) + "\n"


def parse_report_csv(text: str) -> EvalReport:
    """Inverse of the csv rendering (confusion counts are not part of the csv)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("report csv header mismatch")
    body = rows[1:]
    if not body or body[-1][1] != "macro":
        raise ValueError("report csv must end with the macro row")
    model_ids = {row[0] for row in body}
    if len(model_ids) != 1:
        raise ValueError("report csv mixes model ids")

    def class_key(s):
        try:
            return int(s)
        except ValueError:
            return s

    per_class = body[:-1]
    return EvalReport(
        model_id=body[0][0],
        classes=tuple(class_key(row[1]) for row in per_class),
        precision=tuple(float(row[2]) for row in per_class),
        recall=tuple(float(row[3]) for row in per_class),
        macro_precision=float(body[-1][2]),
        macro_recall=float(body[-1][3]),
    )
