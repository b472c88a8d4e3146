"""Labeled pattern images and their conversion into data matrices.

Images are square grayscale grids with values in [0, 1]. A dataset keeps all
pixels in one ``(m, S, S)`` array; flattening is row-major, so pixel
``(i, j)`` of image ``k`` lands in row ``i * S + j`` of column ``k``.

Ingestion reads PNG files (8-bit grayscale or RGB) listed in a manifest::

    file,label,experiment,velocity_m_per_min,tonal_value_pct,raster_lines_per_cm,esa
    img_0001.png,A,B3-01,15,20,60,0
"""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DegenerateFeatureError,
    DimensionError,
    IngestionError,
    InputError,
    ValidationError,
)

MANIFEST_COLUMNS = (
    "file",
    "label",
    "experiment",
    "velocity_m_per_min",
    "tonal_value_pct",
    "raster_lines_per_cm",
    "esa",
)
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class Label(enum.IntEnum):
    A_DOTS = 0
    B_MIXED = 1
    C_FINGERS = 2

    @property
    def token(self) -> str:
        return "ABC"[self.value]

    @classmethod
    def parse(cls, token) -> "Label":
        if isinstance(token, Label):
            return token
        if isinstance(token, (int, np.integer)):
            return cls(int(token))
        t = str(token).strip().upper()
        if t not in ("A", "B", "C"):
            raise ValueError(f"unknown label {token!r} (expected A, B or C)")
        return cls("ABC".index(t))


CLASS_TOKENS = ("A", "B", "C")


@dataclass(frozen=True)
class ImageMeta:
    experiment: str = ""
    velocity: float = math.nan
    tonal_value: float = math.nan
    raster_frequency: float = math.nan
    esa: bool = False


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray
    label: Label | None
    meta: ImageMeta = field(default_factory=ImageMeta)
    name: str = ""


@dataclass(frozen=True, eq=False)
class PatternDataset:
    """Immutable collection of equally sized square images.

    ``labels`` holds class indices (0, 1, 2); ``-1`` marks an unlabeled image.
    """

    pixels: np.ndarray
    labels: np.ndarray
    meta: tuple[ImageMeta, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[1] != self.pixels.shape[2]:
            raise DimensionError(f"expected (m, S, S) pixels, got {self.pixels.shape}")
        m = self.pixels.shape[0]
        if m == 0:
            raise ValidationError("dataset is empty")
        if not (len(self.labels) == len(self.meta) == len(self.names) == m):
            raise DimensionError("pixels, labels, meta and names must have equal length")

    @classmethod
    def from_images(cls, images) -> "PatternDataset":
        images = list(images)
        if not images:
            raise ValidationError("dataset is empty")
        side = images[0].pixels.shape
        for img in images:
            if img.pixels.shape != side:
                raise DimensionError(
                    f"image {img.name!r} has shape {img.pixels.shape}, expected {side}"
                )
        pixels = np.stack([np.asarray(i.pixels, dtype=np.float64) for i in images])
        labels = np.array([-1 if i.label is None else int(i.label) for i in images], dtype=np.int64)
        return cls(pixels, labels, tuple(i.meta for i in images), tuple(i.name for i in images))

    def __len__(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, k: int) -> LabeledImage:
        lab = int(self.labels[k])
        return LabeledImage(
            pixels=self.pixels[k],
            label=None if lab < 0 else Label(lab),
            meta=self.meta[k],
            name=self.names[k],
        )

    @property
    def side(self) -> int:
        return self.pixels.shape[1]

    @property
    def is_labeled(self) -> bool:
        return bool(np.all(self.labels >= 0))

    @property
    def label_counts(self) -> tuple[int, int, int]:
        counts = np.bincount(self.labels[self.labels >= 0], minlength=3)
        return tuple(int(c) for c in counts[:3])

    def subset(self, indices) -> "PatternDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return PatternDataset(
            self.pixels[idx],
            self.labels[idx],
            tuple(self.meta[i] for i in idx),
            tuple(self.names[i] for i in idx),
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.pixels, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()


# --- ingestion ---------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """Decode an 8-bit grayscale/RGB raster into a float array in [0, 1]."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "P", "RGB", "RGBA", "LA"):
                if mode == "P":
                    im = im.convert("RGB")
                    mode = "RGB"
                arr = np.asarray(im, dtype=np.float64)
            else:
                raise IngestionError(f"{path}: unsupported image mode {mode!r}")
    except (UnidentifiedImageError, OSError) as exc:
        raise IngestionError(f"{path}: cannot decode image ({exc})") from exc
    if arr.ndim == 3:
        arr = arr[..., :3] @ np.array(LUMA_WEIGHTS)
    return arr / 255.0


def write_image(path, pixels) -> None:
    """Store a [0, 1] grid as an 8-bit grayscale PNG."""
    arr = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def _parse_float(row, key, lineno):
    raw = (row.get(key) or "").strip()
    if raw == "":
        return math.nan
    try:
        return float(raw)
    except ValueError:
        raise IngestionError(f"manifest line {lineno}: column {key!r} is not a number: {raw!r}")


def _parse_flag(raw):
    return (raw or "").strip().lower() in ("1", "true", "yes", "on")


def read_manifest(manifest, require_labels: bool = True) -> list[dict]:
    """Parse manifest rows into dicts with typed fields (no image decoding)."""
    manifest = Path(manifest)
    try:
        text = manifest.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read manifest {manifest}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise IngestionError(f"{manifest}: empty manifest")
    dialect = csv.excel_tab if "\t" in lines[0] else csv.excel
    reader = csv.DictReader(lines, dialect=dialect)
    if reader.fieldnames is None or "file" not in reader.fieldnames:
        raise IngestionError(f"{manifest}: header must contain a 'file' column")
    if require_labels and "label" not in reader.fieldnames:
        raise IngestionError(f"{manifest}: header must contain a 'label' column")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        fname = (row.get("file") or "").strip()
        if not fname:
            raise IngestionError(f"manifest line {lineno}: empty file name")
        token = (row.get("label") or "").strip()
        if token == "" and not require_labels:
            label = None
        else:
            try:
                label = Label.parse(token)
            except ValueError as exc:
                raise IngestionError(f"manifest line {lineno} ({fname}): {exc}") from None
        meta = ImageMeta(
            experiment=(row.get("experiment") or "").strip(),
            velocity=_parse_float(row, "velocity_m_per_min", lineno),
            tonal_value=_parse_float(row, "tonal_value_pct", lineno),
            raster_frequency=_parse_float(row, "raster_lines_per_cm", lineno),
            esa=_parse_flag(row.get("esa")),
        )
        rows.append({"file": fname, "label": label, "meta": meta, "line": lineno})
    if not rows:
        raise IngestionError(f"{manifest}: no rows")
    return rows


def load_images(image_dir, manifest, require_labels: bool = True) -> PatternDataset:
    image_dir = Path(image_dir)
    rows = read_manifest(manifest, require_labels=require_labels)
    images = []
    side = None
    for row in rows:
        path = image_dir / row["file"]
        if not path.is_file():
            raise IngestionError(f"manifest line {row['line']}: missing image file {row['file']!r}")
        try:
            px = read_image(path)
        except IngestionError as exc:
            raise IngestionError(f"manifest line {row['line']}: {exc}") from None
        if px.shape[0] != px.shape[1]:
            raise IngestionError(
                f"manifest line {row['line']}: image {row['file']!r} is not square {px.shape}"
            )
        if side is None:
            side = px.shape
        elif px.shape != side:
            raise IngestionError(
                f"manifest line {row['line']}: image {row['file']!r} has size {px.shape}, "
                f"expected {side}"
            )
        images.append(LabeledImage(px, row["label"], row["meta"], row["file"]))
    return PatternDataset.from_images(images)


def load_dataset(image_dir, manifest) -> PatternDataset:
    """Load a fully labeled dataset; every row must carry A, B or C."""
    return load_images(image_dir, manifest, require_labels=True)


def write_manifest(path, names, labels, metas) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for name, lab, meta in zip(names, labels, metas):
            token = "" if lab is None or int(lab) < 0 else CLASS_TOKENS[int(lab)]
            w.writerow([
                name, token, meta.experiment,
                f"{meta.velocity:g}", f"{meta.tonal_value:g}", f"{meta.raster_frequency:g}",
                int(meta.esa),
            ])


def save_dataset(ds: PatternDataset, out_dir, manifest_name: str = "manifest.csv") -> Path:
    """Write every image as PNG plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, name in enumerate(ds.names):
        write_image(out_dir / name, ds.pixels[k])
    manifest = out_dir / manifest_name
    write_manifest(manifest, ds.names, ds.labels, ds.meta)
    return manifest


# --- data matrices -----------------------------------------------------------


def _as_stack(images) -> np.ndarray:
    if isinstance(images, PatternDataset):
        return images.pixels
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise DimensionError(f"expected square images, got shape {arr.shape}")
    return arr


def to_data_matrix(images) -> np.ndarray:
    """Stack images as columns of an ``(S*S, m)`` matrix (row-major flattening)."""
    stack = _as_stack(images)
    m, s, _ = stack.shape
    return np.ascontiguousarray(stack.reshape(m, s * s).T)


def from_data_matrix(x, side: int) -> np.ndarray:
    """Inverse of :func:`to_data_matrix`: columns back to ``(m, side, side)``."""
    x = np.asarray(x)
    if x.shape[0] != side * side:
        raise DimensionError(f"{x.shape[0]} rows cannot form {side}x{side} images")
    return x.T.reshape(-1, side, side)


def fft_magnitude(images) -> np.ndarray:
    """Flattened magnitude of the unnormalized 2-D DFT of every image.

    No fftshift is applied; bins keep numpy's natural order.
    """
    stack = _as_stack(images)
    mag = np.abs(np.fft.fft2(stack, axes=(1, 2)))
    return to_data_matrix(mag)


# --- resampling --------------------------------------------------------------


def _require_labeled(ds):
    if not ds.is_labeled:
        raise ValidationError("operation requires a fully labeled dataset")


def balance(ds: PatternDataset, seed: int, per_class: int | None = None) -> PatternDataset:
    """Undersample every class to ``per_class`` images (default: smallest class)."""
    _require_labeled(ds)
    counts = ds.label_counts
    if min(counts) == 0:
        missing = [CLASS_TOKENS[i] for i, c in enumerate(counts) if c == 0]
        raise ValidationError(f"cannot balance: class(es) {missing} absent")
    if per_class is None:
        per_class = min(counts)
    if per_class < 1 or per_class > min(counts):
        raise ValidationError(
            f"per-class count {per_class} exceeds available counts {counts}"
        )
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(3):
        members = np.flatnonzero(ds.labels == c)
        keep.append(rng.choice(members, size=per_class, replace=False))
    return ds.subset(np.sort(np.concatenate(keep)))


def _train_count(m, fraction):
    return int(math.floor(fraction * m + 0.5))


def train_test_split(
    ds: PatternDataset, train_fraction: float, seed: int, stratify: bool = False
) -> tuple[PatternDataset, PatternDataset]:
    """Random partition into train and test sets; order within each side is preserved."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train fraction must lie in (0, 1), got {train_fraction}")
    m = len(ds)
    rng = np.random.default_rng(seed)
    if stratify:
        _require_labeled(ds)
        train = []
        for c in range(3):
            members = np.flatnonzero(ds.labels == c)
            if members.size:
                perm = rng.permutation(members)
                train.append(perm[: _train_count(members.size, train_fraction)])
        train_idx = np.sort(np.concatenate(train))
    else:
        n_train = _train_count(m, train_fraction)
        train_idx = np.sort(rng.permutation(m)[:n_train])
    mask = np.zeros(m, dtype=bool)
    mask[train_idx] = True
    if mask.all() or not mask.any():
        raise ValidationError(
            f"split of {m} images at fraction {train_fraction} leaves one side empty"
        )
    return ds.subset(np.flatnonzero(mask)), ds.subset(np.flatnonzero(~mask))


# --- feature normalization ---------------------------------------------------


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature mean and sample standard deviation (m - 1 denominator)."""

    mean: np.ndarray
    std: np.ndarray


def _coords(features):
    return getattr(features, "coords", features)


def fit_normalization(features) -> NormalizationStats:
    """Fit on training coordinates of shape ``(r, m)`` (or a ReducedFeatures)."""
    c = np.asarray(_coords(features), dtype=np.float64)
    if c.ndim != 2 or c.shape[1] < 2:
        raise ValidationError("normalization needs at least 2 samples")
    if not np.all(np.isfinite(c)):
        raise InputError("coordinates contain non-finite values")
    mean = c.mean(axis=1)
    std = c.std(axis=1, ddof=1)
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        raise DegenerateFeatureError(f"feature(s) {bad.tolist()} have zero variance")
    return NormalizationStats(mean=mean, std=std)


def apply_normalization(stats: NormalizationStats, features):
    c = np.asarray(_coords(features), dtype=np.float64)
    if c.shape[0] != stats.mean.shape[0]:
        raise DimensionError(
            f"coordinates have {c.shape[0]} features, stats cover {stats.mean.shape[0]}"
        )
    out = (c - stats.mean[:, None]) / stats.std[:, None]
    if hasattr(features, "coords"):
        return type(features)(basis=features.basis, coords=out)
    return out


def invert_normalization(stats: NormalizationStats, features):
    c = np.asarray(_coords(features), dtype=np.float64)
    out = c * stats.std[:, None] + stats.mean[:, None]
    if hasattr(features, "coords"):
        return type(features)(basis=features.basis, coords=out)
    return out
