"""Eigenpattern classification of printed fluid-splitting patterns.

Randomized-SVD reduced-order models of (optionally FFT-magnitude) pattern
images, four classic classifiers on the reduced coordinates, three-class
metrics, and regime maps over printing velocity and tonal value.
"""

__version__ = "0.1.0"

from .classify import (
    FeatureMatrix,
    TrainedModel,
    fit_gnb,
    fit_knn,
    fit_lda,
    fit_tree,
    load_model,
    predict,
    save_model,
)
from .dataset import (
    Label,
    LabeledImage,
    PatternDataset,
    apply_normalization,
    balance,
    fft_magnitude,
    fit_normalization,
    load_dataset,
    to_data_matrix,
    train_test_split,
)
from .linalg import (
    SvdFactorization,
    cumulative_energy,
    economy_svd,
    normalized_singular_values,
    randomized_svd,
    truncate_and_project,
)
from .metrics import ConfusionMatrix3, accumulate, aggregate_cycles, compute_metrics
from .pipeline import RunConfig, run_fit, run_sweep
from .regime import build_regime_map, export_regime_map, extract_borders
