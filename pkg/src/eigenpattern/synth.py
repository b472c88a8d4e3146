"""Synthetic dot / mixed / finger pattern images.

Stand-in data for exercising the whole pipeline without the real printed
pattern archive. Images are periodic-friendly: dots sit on a square lattice,
fingers are stripes along the column axis whose phase meanders with the row,
and mixed images blend the two over smooth random regions.

Pixel value is ``background + contrast * pattern`` plus Gaussian noise,
clamped to [0, 1]. Datasets draw background, contrast and dot/finger widths
per image so that overall brightness does not give the class away.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import ImageMeta, Label, LabeledImage, PatternDataset
from .errors import ValidationError

MEANDER_AMPLITUDE = 1.0 / 6.0
MASK_SHARPNESS = 8.0

# per-image ranges drawn by gen_dataset; widths are Gaussian sigmas relative to the period
BACKGROUND_RANGE = (0.05, 0.3)
CONTRAST_RANGE = (0.4, 0.7)
DOT_WIDTH_RANGE = (0.12, 0.3)
FINGER_WIDTH_RANGE = (0.1, 0.25)

SYNTH_EXPERIMENT = "SYN-01"
SYNTH_RASTER = 60.0
SYNTH_VELOCITIES = (15.0, 30.0, 60.0, 90.0, 120.0, 180.0, 240.0)
SYNTH_TONAL_VALUES = tuple(float(t) for t in range(5, 101, 5))


def synthetic_regime_class(velocity: float, tonal_value: float) -> int:
    """Class of the made-up regime layout used for synthetic metadata.

    Borders rise linearly with the velocity index: the lower one from 20 %
    at the slowest velocity by 7.5 % per step, the upper one 10 % above it.
    """
    i = SYNTH_VELOCITIES.index(float(velocity))
    lower = 20.0 + 7.5 * i
    if tonal_value < lower:
        return 0
    if tonal_value < lower + 10.0:
        return 1
    return 2


@dataclass(frozen=True)
class SynthSpec:
    label: Label = Label.A_DOTS
    side: int = 64
    raster_period: float = 8.0
    finger_wavelength: float = 16.0
    noise_amplitude: float = 0.05
    phase_jitter: float | None = None  # default: one full period
    blend_fraction: float = 0.5
    background: float = 0.1
    contrast: float = 0.8
    dot_width: float = 0.2
    finger_width: float = 0.2
    seed: int = 0

    def validate(self):
        if self.raster_period < 2 or self.finger_wavelength < 2:
            raise ValidationError("raster period and finger wavelength must be >= 2 px")
        if self.side < 4 * max(self.raster_period, self.finger_wavelength):
            raise ValidationError(
                f"side {self.side} too small for period {self.raster_period} / "
                f"wavelength {self.finger_wavelength} (need >= 4x)"
            )
        if not 0.0 <= self.noise_amplitude <= 1.0 or not 0.0 <= self.blend_fraction <= 1.0:
            raise ValidationError("noise amplitude and blend fraction must lie in [0, 1]")
        if self.dot_width <= 0 or self.finger_width <= 0:
            raise ValidationError("dot and finger widths must be positive")
        if self.phase_jitter is not None and self.phase_jitter < 0:
            raise ValidationError("phase jitter must be nonnegative")
        Label.parse(self.label)


def _bump_train(u, period, sigma):
    d = (u + 0.5 * period) % period - 0.5 * period
    return np.exp(-0.5 * (d / sigma) ** 2)


def _dots(spec, rng, grid):
    jitter = spec.raster_period if spec.phase_jitter is None else spec.phase_jitter
    dy, dx = rng.uniform(0.0, jitter, size=2)
    yy, xx = grid
    s = spec.dot_width * spec.raster_period
    return _bump_train(yy - dy, spec.raster_period, s) * _bump_train(xx - dx, spec.raster_period, s)


def _fingers(spec, rng, grid):
    w = spec.finger_wavelength
    jitter = w if spec.phase_jitter is None else spec.phase_jitter
    offset = rng.uniform(0.0, jitter)
    yy, xx = grid
    n = spec.side
    f1, f2 = rng.integers(1, 3), rng.integers(3, 5)
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    amp = MEANDER_AMPLITUDE * w
    meander = amp * (0.7 * np.sin(2 * np.pi * f1 * yy / n + p1) + 0.3 * np.sin(2 * np.pi * f2 * yy / n + p2))
    return _bump_train(xx - offset + meander, w, spec.finger_width * w)


def _region_mask(spec, rng, grid):
    yy, xx = grid
    n = spec.side
    field = np.zeros_like(yy)
    for _ in range(3):
        ky, kx = rng.integers(0, 3, size=2)
        if ky == kx == 0:
            kx = 1
        field += np.cos(2 * np.pi * (ky * yy + kx * xx) / n + rng.uniform(0, 2 * np.pi))
    cut = np.quantile(field, 1.0 - spec.blend_fraction)
    scale = field.std() or 1.0
    return 1.0 / (1.0 + np.exp(-MASK_SHARPNESS * (field - cut) / scale))


def gen_pixels(spec: SynthSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    spec.validate()
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n = spec.side
    grid = np.meshgrid(np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij")
    label = Label.parse(spec.label)
    if label == Label.A_DOTS:
        pattern = _dots(spec, rng, grid)
    elif label == Label.C_FINGERS:
        pattern = _fingers(spec, rng, grid)
    else:
        mask = _region_mask(spec, rng, grid)
        pattern = (1.0 - mask) * _dots(spec, rng, grid) + mask * _fingers(spec, rng, grid)
    img = spec.background + spec.contrast * pattern
    if spec.noise_amplitude > 0:
        img = img + spec.noise_amplitude * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def gen_image(spec: SynthSpec, meta: ImageMeta | None = None, name: str = "") -> LabeledImage:
    """One synthetic image; identical specs (including seed) give identical pixels."""
    return LabeledImage(gen_pixels(spec), Label.parse(spec.label), meta or ImageMeta(), name)


def _cells_by_class():
    cells = {0: [], 1: [], 2: []}
    for v in SYNTH_VELOCITIES:
        for t in SYNTH_TONAL_VALUES:
            cells[synthetic_regime_class(v, t)].append((v, t))
    return cells


def _draw_appearance(rng):
    return {
        "background": float(rng.uniform(*BACKGROUND_RANGE)),
        "contrast": float(rng.uniform(*CONTRAST_RANGE)),
        "dot_width": float(rng.uniform(*DOT_WIDTH_RANGE)),
        "finger_width": float(rng.uniform(*FINGER_WIDTH_RANGE)),
    }


def _meta(v, t):
    return ImageMeta(experiment=SYNTH_EXPERIMENT, velocity=v, tonal_value=t, raster_frequency=SYNTH_RASTER, esa=False)


def gen_dataset(
    per_class: int = 100,
    side: int = 64,
    seed: int = 0,
    *,
    counts: tuple[int, int, int] | None = None,
    noise: float = 0.05,
    class_noise: dict | None = None,
    blend_range: tuple[float, float] = (0.3, 0.7),
    raster_period: float = 8.0,
    finger_wavelength: float = 16.0,
    phase_jitter: float | None = None,
) -> PatternDataset:
    """Labeled synthetic dataset with ``per_class`` images of each class.

    ``counts`` overrides the per-class sizes (e.g. a skewed split);
    ``class_noise`` maps a class token or index to its own noise level. Each
    image draws a random (velocity, tonal value) cell whose synthetic regime
    class matches its label, so regime maps can be built from the metadata.
    """
    counts = (per_class,) * 3 if counts is None else tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 0 or sum(counts) < 1:
        raise ValidationError(f"invalid class counts {counts}")
    if per_class < 1 and counts == (per_class,) * 3:
        raise ValidationError("per_class must be >= 1")
    noise_of = {c: noise for c in range(3)}
    for key, val in (class_noise or {}).items():
        noise_of[int(Label.parse(key))] = float(val)

    labels = np.repeat(np.arange(3), counts)
    children = np.random.SeedSequence(seed).spawn(labels.size)
    cells = _cells_by_class()
    base = SynthSpec(
        side=side,
        raster_period=raster_period,
        finger_wavelength=finger_wavelength,
        phase_jitter=phase_jitter,
    )
    base.validate()
    images = []
    for k, (lab, child) in enumerate(zip(labels, children)):
        rng = np.random.default_rng(child)
        v, t = cells[int(lab)][rng.integers(len(cells[int(lab)]))]
        spec = replace(
            base,
            label=Label(int(lab)),
            noise_amplitude=noise_of[int(lab)],
            blend_fraction=float(rng.uniform(*blend_range)),
            **_draw_appearance(rng),
        )
        images.append(LabeledImage(gen_pixels(spec, rng), Label(int(lab)), _meta(v, t), f"syn_{k:05d}.png"))
    return PatternDataset.from_images(images)


def gen_grid_dataset(per_cell: int = 2, side: int = 64, seed: int = 0, noise: float = 0.05) -> PatternDataset:
    """Images for every cell of the synthetic 7 x 20 velocity/tonal grid.

    Each cell receives ``per_cell`` images of its synthetic regime class.
    """
    if per_cell < 1:
        raise ValidationError("per_cell must be >= 1")
    grid = [(v, t) for v in SYNTH_VELOCITIES for t in SYNTH_TONAL_VALUES]
    children = np.random.SeedSequence(seed).spawn(len(grid) * per_cell)
    base = SynthSpec(side=side, noise_amplitude=noise)
    images = []
    for k, child in enumerate(children):
        v, t = grid[k // per_cell]
        lab = Label(synthetic_regime_class(v, t))
        rng = np.random.default_rng(child)
        spec = replace(base, label=lab, blend_fraction=float(rng.uniform(0.3, 0.7)), **_draw_appearance(rng))
        images.append(LabeledImage(gen_pixels(spec, rng), lab, _meta(v, t), f"grid_{k:05d}.png"))
    return PatternDataset.from_images(images)
