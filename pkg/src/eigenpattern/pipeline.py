"""Training/evaluation workflow: split -> (FFT) -> rSVD -> project -> (normalize) -> classify."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import classify
from .dataset import (
    PatternDataset,
    apply_normalization,
    balance,
    fft_magnitude,
    fit_normalization,
    to_data_matrix,
    train_test_split,
)
from .errors import ValidationError
from .linalg import DEFAULT_OVERSAMPLING, DEFAULT_POWER_ITERATIONS, project, randomized_svd
from .metrics import ConfusionMatrix3, MetricsReport, accumulate, aggregate_cycles, compute_metrics

VARIANTS = ("plain", "fft")


@dataclass
class RunConfig:
    """Workflow settings. Defaults: FFT variant, k=50, r=7, 1-NN, unbalanced, not normalized."""

    variant: str = "fft"
    target_rank: int = 50
    rank: int = 7
    ranks: tuple[int, ...] | None = None
    classifier: str = "knn"
    classifiers: tuple[str, ...] = classify.CLASSIFIERS
    neighbors: int = 1
    max_depth: int = 32
    min_leaf: int = 1
    balance: bool = False
    per_class: int | None = None
    normalize: bool = False
    train_fraction: float = 0.8
    stratify: bool = False
    cycles: int = 5
    seed: int = 0
    oversampling: int = DEFAULT_OVERSAMPLING
    power_iterations: int = DEFAULT_POWER_ITERATIONS

    def validate(self) -> "RunConfig":
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in [self.classifier, *self.classifiers]:
            if name not in classify.CLASSIFIERS:
                raise ValidationError(f"unknown classifier {name!r}")
        if self.target_rank < 1:
            raise ValidationError("target rank must be >= 1")
        for r in self.sweep_ranks():
            if not 1 <= r <= self.target_rank:
                raise ValidationError(f"truncation rank {r} must satisfy 1 <= r <= target rank {self.target_rank}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError("train fraction must lie in (0, 1)")
        if self.cycles < 1:
            raise ValidationError("cycles must be >= 1")
        if self.neighbors < 1:
            raise ValidationError("neighbors must be >= 1")
        if self.per_class is not None and self.per_class < 1:
            raise ValidationError("per-class count must be >= 1")
        return self

    def sweep_ranks(self) -> tuple[int, ...]:
        return tuple(self.ranks) if self.ranks else (self.rank,)

    @property
    def use_fft(self) -> bool:
        return self.variant == "fft"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ranks"] = list(self.ranks) if self.ranks else None
        d["classifiers"] = list(self.classifiers)
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def cycle_seeds(seed: int, cycles: int) -> list[int]:
    """Independent per-cycle seeds derived from the run seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(cycles)]


def feature_matrix(images, use_fft: bool) -> np.ndarray:
    return fft_magnitude(images) if use_fft else to_data_matrix(images)


@dataclass
class ReducedSplit:
    """One train/test split reduced with the training rSVD modes (up to rank k)."""

    u: np.ndarray
    sigma: np.ndarray
    train_coords: np.ndarray
    test_coords: np.ndarray
    train_labels: np.ndarray
    test_labels: np.ndarray
    seed: int
    train_digest: str = ""

    def features(self, r: int, normalize: bool):
        tr, te = self.train_coords[:r], self.test_coords[:r]
        stats = None
        if normalize:
            stats = fit_normalization(tr)
            tr, te = apply_normalization(stats, tr), apply_normalization(stats, te)
        return tr, te, stats


def prepare_dataset(ds: PatternDataset, config: RunConfig) -> PatternDataset:
    if config.balance:
        return balance(ds, seed=config.seed, per_class=config.per_class)
    return ds


def reduce_split(ds: PatternDataset, config: RunConfig, seed: int) -> ReducedSplit:
    train, test = train_test_split(ds, config.train_fraction, seed=seed, stratify=config.stratify)
    x_train = feature_matrix(train, config.use_fft)
    x_test = feature_matrix(test, config.use_fft)
    k = min(config.target_rank, *x_train.shape)
    if k < max(config.sweep_ranks()):
        raise ValidationError(
            f"training matrix {x_train.shape} supports at most rank {k}, below requested r={max(config.sweep_ranks())}"
        )
    fac = randomized_svd(x_train, k, config.oversampling, config.power_iterations, seed=seed)
    return ReducedSplit(
        u=fac.u,
        sigma=fac.sigma,
        train_coords=project(fac.u, x_train),
        test_coords=project(fac.u, x_test),
        train_labels=train.labels,
        test_labels=test.labels,
        seed=seed,
        train_digest=train.digest(),
    )


@dataclass
class CycleResult:
    model: classify.TrainedModel
    confusion: ConfusionMatrix3
    report: MetricsReport


def evaluate_on_split(split: ReducedSplit, config: RunConfig, r: int, classifier: str) -> CycleResult:
    tr, te, stats = split.features(r, config.normalize)
    clf = classify.fit_classifier(
        classifier,
        classify.FeatureMatrix(tr, split.train_labels),
        neighbors=config.neighbors,
        max_depth=config.max_depth,
        min_leaf=config.min_leaf,
    )
    pred = clf.predict(te)
    cm = accumulate(split.test_labels, pred)
    provenance = {
        "seed": split.seed,
        "target_rank": int(split.u.shape[1]),
        "truncation_rank": int(r),
        "variant": config.variant,
        "dataset_digest": split.train_digest,
    }
    model = classify.make_model(clf, split.u[:, :r], config.use_fft, stats, provenance)
    return CycleResult(model, cm, compute_metrics(cm))


@dataclass
class FitResult:
    config: RunConfig
    cycles: list[CycleResult] = field(default_factory=list)

    @property
    def reports(self):
        return [c.report for c in self.cycles]

    @property
    def aggregate(self):
        return aggregate_cycles(self.reports)

    @property
    def model(self) -> classify.TrainedModel:
        """Model of the first cycle; the one written by ``fit``."""
        return self.cycles[0].model


def run_fit(ds: PatternDataset, config: RunConfig) -> FitResult:
    config.validate()
    data = prepare_dataset(ds, config)
    result = FitResult(config)
    for seed in cycle_seeds(config.seed, config.cycles):
        split = reduce_split(data, config, seed)
        result.cycles.append(evaluate_on_split(split, config, config.rank, config.classifier))
    return result


@dataclass(frozen=True)
class SweepRow:
    r: int
    classifier: str
    mean_error: float
    std_error: float
    recall_A: float
    recall_B: float
    recall_C: float
    std_recall_B: float


SWEEP_COLUMNS = ("r", "classifier", "mean_error", "std_error", "recall_A", "recall_B", "recall_C", "std_recall_B")


def run_sweep(ds: PatternDataset, config: RunConfig) -> list[SweepRow]:
    """Cycle-averaged metrics for every (truncation rank, classifier) pair.

    Each cycle uses one split and one rSVD of rank k; all (r, classifier)
    pairs of that cycle share it.
    """
    config.validate()
    data = prepare_dataset(ds, config)
    ranks = config.sweep_ranks()
    reports = {(r, c): [] for r in ranks for c in config.classifiers}
    for seed in cycle_seeds(config.seed, config.cycles):
        split = reduce_split(data, config, seed)
        for r in ranks:
            for c in config.classifiers:
                reports[(r, c)].append(evaluate_on_split(split, config, r, c).report)
    rows = []
    for (r, c), reps in reports.items():
        agg = aggregate_cycles(reps)
        rows.append(SweepRow(
            r=r,
            classifier=c,
            mean_error=agg.mean["error"],
            std_error=agg.std["error"],
            recall_A=agg.mean["recall_A"],
            recall_B=agg.mean["recall_B"],
            recall_C=agg.mean["recall_C"],
            std_recall_B=agg.std["recall_B"],
        ))
    return rows


def plateau_rank(rows, classifier: str, tolerance: float = 1.0) -> int:
    """Smallest r whose mean error is within ``tolerance`` percentage points of the sweep minimum."""
    errs = sorted((row.r, row.mean_error) for row in rows if row.classifier == classifier)
    if not errs:
        raise ValidationError(f"no sweep rows for classifier {classifier!r}")
    best = min(e for _, e in errs)
    return next(r for r, e in errs if e <= best + tolerance)


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})


def render_mode(mode, side: int, fft_domain: bool) -> np.ndarray:
    """Spatial picture of one mode, min-max scaled to [0, 1].

    Modes of FFT-magnitude data are shown as the magnitude of their inverse
    FFT taken with zero phase, shifted so the origin sits in the centre.
    A constant picture maps to all zeros.
    """
    grid = np.asarray(mode, dtype=np.float64).reshape(side, side)
    if fft_domain:
        grid = np.fft.fftshift(np.abs(np.fft.ifft2(grid)))
    lo, hi = grid.min(), grid.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.zeros_like(grid)
    return (grid - lo) / (hi - lo)


def sweep_to_csv(rows) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        vals = [getattr(row, c) for c in SWEEP_COLUMNS]
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in vals))
    return "\n".join(lines) + "\n"


def sweep_from_csv(text: str) -> list[SweepRow]:
    lines = [l for l in text.splitlines() if l.strip()]
    header = tuple(lines[0].split(","))
    if header != SWEEP_COLUMNS:
        raise ValidationError(f"unexpected sweep CSV header {header}")
    rows = []
    for line in lines[1:]:
        vals = dict(zip(SWEEP_COLUMNS, line.split(",")))
        rows.append(SweepRow(
            r=int(vals["r"]),
            classifier=vals["classifier"],
            **{k: float(vals[k]) for k in SWEEP_COLUMNS[2:]},
        ))
    return rows
