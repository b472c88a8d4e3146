"""Regime maps: majority predicted class over a (velocity, tonal value) grid.

Borders are read off each velocity column by scanning tonal values upwards.
The lower border sits midway between the last dot-pattern (A) cell and the
cell above it, the upper border midway between the last non-finger cell and
the first finger-pattern (C) cell above it.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingCellError, ValidationError

A, B, C = 0, 1, 2
CLASS_TOKENS = ("A", "B", "C")
CELL_COLUMNS = ("velocity", "tonal_value", "count_A", "count_B", "count_C", "majority")
BORDER_COLUMNS = ("velocity", "border", "tonal_value")


class NonMonotoneColumnWarning(UserWarning):
    pass


def majority_class(counts) -> int:
    """Argmax of per-class counts; any tie for the top count resolves to B."""
    counts = np.asarray(counts)
    if counts.sum() <= 0:
        raise ValidationError("cannot take the majority of an empty cell")
    top = np.flatnonzero(counts == counts.max())
    return int(top[0]) if top.size == 1 else B


@dataclass(frozen=True)
class RegimeCell:
    velocity: float
    tonal_value: float
    counts: tuple[int, int, int]

    @property
    def majority(self) -> int:
        return majority_class(self.counts)


@dataclass(frozen=True, eq=False)
class RegimeMap:
    experiment: str
    raster_frequency: float
    velocities: tuple[float, ...]
    tonal_values: tuple[float, ...]
    counts: np.ndarray  # (n_velocities, n_tonal_values, 3)
    lower_border: tuple[float | None, ...]
    upper_border: tuple[float | None, ...]

    @property
    def majority(self) -> np.ndarray:
        return np.array([[majority_class(c) for c in row] for row in self.counts], dtype=np.int64)

    def cells(self):
        for i, v in enumerate(self.velocities):
            for j, t in enumerate(self.tonal_values):
                yield RegimeCell(v, t, tuple(int(x) for x in self.counts[i, j]))

    def border_polyline(self, which: str):
        vals = self.lower_border if which == "lower" else self.upper_border
        return [(v, t) for v, t in zip(self.velocities, vals) if t is not None]

    def __eq__(self, other):
        if not isinstance(other, RegimeMap):
            return NotImplemented
        same_raster = self.raster_frequency == other.raster_frequency or (
            math.isnan(self.raster_frequency) and math.isnan(other.raster_frequency)
        )
        return (
            self.experiment == other.experiment
            and same_raster
            and self.velocities == other.velocities
            and self.tonal_values == other.tonal_values
            and np.array_equal(self.counts, other.counts)
            and self.lower_border == other.lower_border
            and self.upper_border == other.upper_border
        )


def _column_borders(tonal, maj):
    """(lower, upper) breakpoints of one velocity column, ``None`` when absent."""
    upper = None
    for i in range(1, len(maj)):
        if maj[i] == C and maj[i - 1] != C:
            upper = 0.5 * (tonal[i - 1] + tonal[i])
            break
    lower = None
    for i in range(len(maj) - 1):
        if maj[i] == A and maj[i + 1] != A:
            mid = 0.5 * (tonal[i] + tonal[i + 1])
            # an A->B step above the finger regime would cross the upper border
            if upper is None or mid <= upper:
                lower = mid
            break
    return lower, upper


def extract_borders(rmap_or_majority, tonal_values=None, velocities=None):
    """Per-velocity lower and upper breakpoints.

    Accepts a :class:`RegimeMap`, or a majority grid of shape
    ``(n_velocities, n_tonal_values)`` plus its tonal values. Columns that are
    not monotone A -> B -> C emit a :class:`NonMonotoneColumnWarning` and use
    the first transition met while scanning upwards.
    """
    if isinstance(rmap_or_majority, RegimeMap):
        maj = rmap_or_majority.majority
        tonal_values = rmap_or_majority.tonal_values
        velocities = rmap_or_majority.velocities
    else:
        maj = np.asarray(rmap_or_majority)
    tonal = [float(t) for t in tonal_values]
    lower, upper = [], []
    for k, col in enumerate(maj):
        col = [int(c) for c in col]
        if any(b < a for a, b in zip(col, col[1:])):
            where = f"velocity {velocities[k]:g}" if velocities is not None else f"column {k}"
            warnings.warn(f"non-monotone class sequence at {where}: {''.join(CLASS_TOKENS[c] for c in col)}",
                          NonMonotoneColumnWarning, stacklevel=2)
        lo, up = _column_borders(tonal, col)
        lower.append(lo)
        upper.append(up)
    return tuple(lower), tuple(upper)


def _same(a, b):
    return a == b or (isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b))


def build_regime_map(predictions, velocities=None, tonal_values=None) -> RegimeMap:
    """Aggregate ``(meta, class)`` pairs into a regime map.

    The grid defaults to every observed velocity times every observed tonal
    value; any grid cell without predictions raises :class:`MissingCellError`.
    """
    preds = [(meta, int(cls)) for meta, cls in predictions]
    if not preds:
        raise ValidationError("no predictions")
    exp, raster = preds[0][0].experiment, float(preds[0][0].raster_frequency)
    for meta, _ in preds:
        if meta.experiment != exp or not _same(float(meta.raster_frequency), raster):
            raise ValidationError(
                "predictions mix experiments or raster frequencies: "
                f"({exp}, {raster:g}) vs ({meta.experiment}, {meta.raster_frequency:g})"
            )
    if velocities is None:
        velocities = sorted({float(m.velocity) for m, _ in preds})
    if tonal_values is None:
        tonal_values = sorted({float(m.tonal_value) for m, _ in preds})
    vel = tuple(float(v) for v in velocities)
    ton = tuple(float(t) for t in tonal_values)
    vi = {v: i for i, v in enumerate(vel)}
    ti = {t: j for j, t in enumerate(ton)}
    counts = np.zeros((len(vel), len(ton), 3), dtype=np.int64)
    for meta, cls in preds:
        i, j = vi.get(float(meta.velocity)), ti.get(float(meta.tonal_value))
        if i is None or j is None:
            raise ValidationError(
                f"prediction at (velocity={meta.velocity:g}, tonal_value={meta.tonal_value:g}) is off the grid"
            )
        counts[i, j, cls] += 1
    missing = [(vel[i], ton[j]) for i in range(len(vel)) for j in range(len(ton)) if counts[i, j].sum() == 0]
    if missing:
        raise MissingCellError(missing)
    majority = np.array([[majority_class(c) for c in row] for row in counts])
    lower, upper = extract_borders(majority, ton, vel)
    return RegimeMap(exp, raster, vel, ton, counts, lower, upper)


# --- export -------------------------------------------------------------------


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def regime_map_to_csv(rmap: RegimeMap) -> str:
    buf = io.StringIO()
    buf.write(f"# experiment={rmap.experiment}\n")
    buf.write(f"# raster_lines_per_cm={_num(rmap.raster_frequency)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_COLUMNS)
    for cell in rmap.cells():
        w.writerow([_num(cell.velocity), _num(cell.tonal_value), *cell.counts, CLASS_TOKENS[cell.majority]])
    buf.write("\n")
    w.writerow(BORDER_COLUMNS)
    for which in ("lower", "upper"):
        for v, t in rmap.border_polyline(which):
            w.writerow([_num(v), which, _num(t)])
    return buf.getvalue()


def regime_map_from_csv(text: str) -> RegimeMap:
    header, cells, borders = {}, [], []
    section = None
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            header[key.strip()] = val.strip()
        elif not line.strip():
            continue
        else:
            row = next(csv.reader([line]))
            if tuple(row) == CELL_COLUMNS:
                section = cells
            elif tuple(row) == BORDER_COLUMNS:
                section = borders
            elif section is None:
                raise ValidationError(f"regime CSV row before any header: {line!r}")
            else:
                section.append(row)
    vel = tuple(sorted({float(r[0]) for r in cells}))
    ton = tuple(sorted({float(r[1]) for r in cells}))
    counts = np.zeros((len(vel), len(ton), 3), dtype=np.int64)
    for r in cells:
        counts[vel.index(float(r[0])), ton.index(float(r[1]))] = [int(x) for x in r[2:5]]
    lower = [None] * len(vel)
    upper = [None] * len(vel)
    for v, which, t in borders:
        (lower if which == "lower" else upper)[vel.index(float(v))] = float(t)
    return RegimeMap(
        experiment=header.get("experiment", ""),
        raster_frequency=float(header.get("raster_lines_per_cm", "nan")),
        velocities=vel,
        tonal_values=ton,
        counts=counts,
        lower_border=tuple(lower),
        upper_border=tuple(upper),
    )


def export_regime_map(rmap: RegimeMap, path, fmt: str | None = None) -> Path:
    """Write ``rmap`` as CSV or SVG; the format defaults to the file suffix."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        path.write_text(regime_map_to_csv(rmap), encoding="utf-8")
    elif fmt in ("svg", "png", "pdf"):
        from .plotting import plot_regime_map

        plot_regime_map(rmap, path, fmt=fmt)
    else:
        raise ValidationError(f"unsupported regime map format {fmt!r}")
    return path
