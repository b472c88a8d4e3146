"""Three-class confusion matrices and the metrics derived from them.

Rows are ground truth and columns predictions, both ordered A, B, C.
Percentages are kept at full precision; round only for display.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, InputError, UndefinedRecallError, ValidationError

CLASS_TOKENS = ("A", "B", "C")
METRIC_NAMES = ("accuracy", "error", "recall_A", "recall_B", "recall_C")


def _as_indices(seq):
    out = []
    for s in seq:
        if isinstance(s, str):
            t = s.strip().upper()
            if t not in CLASS_TOKENS:
                raise InputError(f"unknown class {s!r}")
            out.append(CLASS_TOKENS.index(t))
        else:
            v = int(s)
            if not 0 <= v < 3:
                raise InputError(f"class index {v} out of range")
            out.append(v)
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix3:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (3, 3):
            raise DimensionError(f"confusion matrix must be 3x3, got {c.shape}")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise InputError("confusion counts must be nonnegative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix3) and np.array_equal(self.counts, other.counts)

    def __add__(self, other):
        return ConfusionMatrix3(self.counts + other.counts)

    def to_rows(self):
        return self.counts.tolist()


def accumulate(truth, pred) -> ConfusionMatrix3:
    t = _as_indices(truth)
    p = _as_indices(pred)
    if t.shape != p.shape:
        raise DimensionError(f"{t.size} truths vs {p.size} predictions")
    counts = np.zeros((3, 3), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix3(counts)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    error: float
    recall_A: float
    recall_B: float
    recall_C: float
    sample_count: int

    def as_dict(self):
        return asdict(self)

    def rounded(self, digits: int = 1) -> dict:
        return {k: round(getattr(self, k), digits) for k in METRIC_NAMES}


def compute_metrics(cm: ConfusionMatrix3) -> MetricsReport:
    total = cm.total
    if total <= 0:
        raise ValidationError("confusion matrix is empty")
    acc = float(Fraction(int(np.trace(cm.counts)) * 100, total))
    recalls = []
    for i, row in enumerate(cm.counts):
        n = int(row.sum())
        if n == 0:
            raise UndefinedRecallError(f"recall {CLASS_TOKENS[i]} undefined: no ground-truth samples of class {CLASS_TOKENS[i]}")
        recalls.append(float(Fraction(int(row[i]) * 100, n)))
    return MetricsReport(
        accuracy=acc,
        error=100.0 - acc,
        recall_A=recalls[0],
        recall_B=recalls[1],
        recall_C=recalls[2],
        sample_count=total,
    )


@dataclass(frozen=True)
class CycleAggregate:
    cycles: int
    mean: dict
    std: dict

    @property
    def mean_error(self) -> float:
        return self.mean["error"]

    @property
    def std_error(self) -> float:
        return self.std["error"]


def aggregate_cycles(reports) -> CycleAggregate:
    """Mean and sample standard deviation (c - 1 denominator) of each metric."""
    reports = list(reports)
    if not reports:
        raise ValidationError("no reports to aggregate")
    mean, std = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return CycleAggregate(cycles=len(reports), mean=mean, std=std)


# --- serialization ------------------------------------------------------------

REPORT_COLUMNS = ("cycle",) + METRIC_NAMES + ("sample_count",)


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def reports_to_csv(reports, aggregate: CycleAggregate | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for k, r in enumerate(reports, start=1):
        w.writerow([k] + [_fmt(getattr(r, n)) for n in METRIC_NAMES] + [r.sample_count])
    if aggregate is not None:
        for tag, vals in (("mean", aggregate.mean), ("std", aggregate.std)):
            w.writerow([tag] + [_fmt(vals[n]) for n in METRIC_NAMES] + [""])
    return buf.getvalue()


def reports_from_csv(text: str):
    rows = list(csv.DictReader(io.StringIO(text)))
    reports = []
    for row in rows:
        if row["cycle"] in ("mean", "std"):
            continue
        reports.append(MetricsReport(**{n: float(row[n]) for n in METRIC_NAMES}, sample_count=int(row["sample_count"])))
    return reports


def reports_to_json(reports, aggregate: CycleAggregate | None = None, confusion=None, extra=None) -> str:
    doc = {"cycles": [r.as_dict() for r in reports]}
    if aggregate is not None:
        doc["aggregate"] = {"cycles": aggregate.cycles, "mean": aggregate.mean, "std": aggregate.std}
    if confusion is not None:
        doc["confusion"] = [cm.to_rows() for cm in confusion]
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def format_table(report: MetricsReport) -> str:
    """Human-readable summary rounded to one decimal for reports."""
    lines = [f"{'Error':<10}{report.error:6.1f} %", f"{'Accuracy':<10}{report.accuracy:6.1f} %"]
    for c in CLASS_TOKENS:
        lines.append(f"{'Recall ' + c:<10}{getattr(report, 'recall_' + c):6.1f} %")
    return "\n".join(lines)

