"""Classifiers on reduced-order coordinates and the trained-model container.

All classifiers consume coordinates laid out like the projection
``basis.T @ X``: shape ``(r, m)``, one column per sample. Class labels are
integers 0, 1, 2 (A, B, C). Every tie is resolved towards the lowest index.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import NormalizationStats, apply_normalization, fft_magnitude, to_data_matrix
from .errors import (
    DimensionError,
    InputError,
    ModelFormatError,
    ModelVersionError,
    NumericalError,
    TruncatedModelError,
    ValidationError,
)
from .linalg import project

N_CLASSES = 3
GNB_VARIANCE_FLOOR = 1e-9
LDA_RIDGE = 1e-8

# bytes per distance block in kNN batch prediction
_KNN_BLOCK_BYTES = 64 * 2**20


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if v.ndim != 2:
            raise DimensionError(f"feature values must be 2-D (r, m), got {v.shape}")
        if lab.shape != (v.shape[1],):
            raise DimensionError(f"{lab.size} labels for {v.shape[1]} samples")
        if v.shape[1] == 0:
            raise ValidationError("no training samples")
        if not np.all(np.isfinite(v)):
            raise InputError("feature values contain non-finite entries")
        if np.any((lab < 0) | (lab >= N_CLASSES)):
            raise InputError("labels must be 0, 1 or 2")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", lab)

    @property
    def r(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


def _check_query(coords, r):
    q = np.asarray(coords, dtype=np.float64)
    if q.ndim == 1:
        q = q[:, None]
    if q.shape[0] != r:
        raise DimensionError(f"query has {q.shape[0]} features, classifier expects {r}")
    return q


# --- k nearest neighbours -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class KnnState:
    train_coords: np.ndarray
    train_labels: np.ndarray
    neighbors: int = 1

    kind = "knn"

    @property
    def r(self):
        return self.train_coords.shape[0]

    def predict(self, coords) -> np.ndarray:
        q = _check_query(coords, self.r).T
        t = self.train_coords.T
        out = np.empty(q.shape[0], dtype=np.int64)
        block = max(1, _KNN_BLOCK_BYTES // (8 * t.size))
        for start in range(0, q.shape[0], block):
            qb = q[start:start + block]
            d2 = np.sum((qb[:, None, :] - t[None, :, :]) ** 2, axis=2)
            if self.neighbors == 1:
                out[start:start + block] = self.train_labels[np.argmin(d2, axis=1)]
                continue
            nearest = np.argsort(d2, axis=1, kind="stable")[:, : self.neighbors]
            votes = np.zeros((qb.shape[0], N_CLASSES), dtype=np.int64)
            np.add.at(votes, (np.arange(qb.shape[0])[:, None], self.train_labels[nearest]), 1)
            out[start:start + block] = np.argmax(votes, axis=1)
        return out

    def arrays(self):
        return {"train_coords": self.train_coords, "train_labels": self.train_labels}

    def params(self):
        return {"neighbors": self.neighbors}


def fit_knn(f: FeatureMatrix, neighbors: int = 1) -> KnnState:
    if not 1 <= neighbors <= f.m:
        raise ValidationError(f"neighbor count {neighbors} outside [1, {f.m}]")
    return KnnState(f.values.copy(), f.labels.copy(), int(neighbors))


# --- classification tree ------------------------------------------------------


def _gini(counts):
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.sum(p * p, axis=-1), 0.0)


def _majority(labels):
    return int(np.argmax(np.bincount(labels, minlength=N_CLASSES)))


@dataclass(frozen=True, eq=False)
class TreeState:
    """Flat binary tree. Leaves have ``feature == -1``; ``value`` is the leaf class."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int
    max_depth: int = 32
    min_leaf: int = 1

    kind = "tree"

    @property
    def r(self):
        return self.n_features

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def predict(self, coords) -> np.ndarray:
        q = _check_query(coords, self.r)
        node = np.zeros(q.shape[1], dtype=np.int64)
        cols = np.arange(q.shape[1])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            a = cols[active]
            go_left = q[feat[active], a] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])
        return self.value[node].astype(np.int64)

    def arrays(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    def params(self):
        return {"n_features": self.n_features, "max_depth": self.max_depth, "min_leaf": self.min_leaf}


def _best_split(x, y, min_leaf):
    """Best (gain, feature, threshold) over all axis-aligned midpoint thresholds."""
    n, r = x.shape
    parent = _gini(np.bincount(y, minlength=N_CLASSES).astype(np.float64))
    best = None
    onehot = np.eye(N_CLASSES)[y]
    for j in range(r):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        # candidate cut after position i (left = first i+1 samples)
        pos = np.flatnonzero(xs[1:] > xs[:-1])
        n_left = pos + 1
        pos = pos[(n_left >= min_leaf) & (n - n_left >= min_leaf)]
        if pos.size == 0:
            continue
        lc = left_counts[pos]
        rc = left_counts[-1] + onehot[order[-1]] - lc
        nl = (pos + 1).astype(np.float64)
        child = (nl * _gini(lc) + (n - nl) * _gini(rc)) / n
        gain = parent - child
        k = int(np.argmax(gain))
        if best is None or gain[k] > best[0]:
            best = (float(gain[k]), j, 0.5 * (xs[pos[k]] + xs[pos[k] + 1]))
    return best


def fit_tree(f: FeatureMatrix, max_depth: int = 32, min_leaf: int = 1) -> TreeState:
    """CART tree grown greedily on Gini impurity decrease.

    A node becomes a leaf when it is pure, at ``max_depth``, or when no
    threshold leaves at least ``min_leaf`` samples on each side.
    """
    if max_depth < 0 or min_leaf < 1:
        raise ValidationError("max_depth must be >= 0 and min_leaf >= 1")
    x = f.values.T
    y = f.labels
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        value[node] = _majority(ys)
        if depth >= max_depth or np.all(ys == ys[0]):
            continue
        split = _best_split(x[idx], ys, min_leaf)
        if split is None:
            continue
        _, j, thr = split
        mask = x[idx, j] <= thr
        feature[node], threshold[node] = j, thr
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        stack.append((rnode, idx[~mask], depth + 1))
        stack.append((lnode, idx[mask], depth + 1))

    return TreeState(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.int64),
        n_features=f.r,
        max_depth=int(max_depth),
        min_leaf=int(min_leaf),
    )


# --- Gaussian naive Bayes -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class GnbState:
    classes: np.ndarray
    means: np.ndarray  # (n_classes, r)
    variances: np.ndarray  # (n_classes, r)
    priors: np.ndarray

    kind = "gnb"

    @property
    def r(self):
        return self.means.shape[1]

    def scores(self, coords) -> np.ndarray:
        """Log prior plus summed log Gaussian densities, shape ``(m, n_classes)``."""
        q = _check_query(coords, self.r).T
        diff = q[:, None, :] - self.means[None]
        log_dens = -0.5 * (np.log(2.0 * np.pi * self.variances)[None] + diff**2 / self.variances[None])
        return np.log(self.priors)[None] + log_dens.sum(axis=2)

    def predict(self, coords) -> np.ndarray:
        return self.classes[np.argmax(self.scores(coords), axis=1)]

    def arrays(self):
        return {"classes": self.classes, "means": self.means, "variances": self.variances, "priors": self.priors}

    def params(self):
        return {}


def fit_gnb(f: FeatureMatrix) -> GnbState:
    x = f.values.T
    classes = np.unique(f.labels)
    counts = np.array([np.sum(f.labels == c) for c in classes])
    if np.any(counts < 2):
        raise ValidationError("naive Bayes needs at least 2 samples per class")
    means = np.stack([x[f.labels == c].mean(axis=0) for c in classes])
    variances = np.stack([x[f.labels == c].var(axis=0, ddof=1) for c in classes])
    global_var = x.var(axis=0, ddof=1) if f.m > 1 else np.zeros(f.r)
    # a feature constant over the whole set carries no class information;
    # a unit floor keeps its (identical) per-class terms finite
    floor = np.where(global_var > 0, GNB_VARIANCE_FLOOR * global_var, 1.0)
    variances = np.maximum(variances, floor[None])
    return GnbState(classes=classes.astype(np.int64), means=means, variances=variances, priors=counts / counts.sum())


# --- linear discriminant ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LdaState:
    classes: np.ndarray
    means: np.ndarray  # (n_classes, r)
    cov_inv: np.ndarray  # (r, r)
    priors: np.ndarray

    kind = "lda"

    @property
    def r(self):
        return self.means.shape[1]

    def scores(self, coords) -> np.ndarray:
        q = _check_query(coords, self.r).T
        w = self.means @ self.cov_inv  # rows: Sigma^-1 mu_c
        bias = -0.5 * np.sum(w * self.means, axis=1) + np.log(self.priors)
        return q @ w.T + bias[None]

    def predict(self, coords) -> np.ndarray:
        return self.classes[np.argmax(self.scores(coords), axis=1)]

    def arrays(self):
        return {"classes": self.classes, "means": self.means, "cov_inv": self.cov_inv, "priors": self.priors}

    def params(self):
        return {}


def fit_lda(f: FeatureMatrix) -> LdaState:
    x = f.values.T
    classes = np.unique(f.labels)
    counts = np.array([np.sum(f.labels == c) for c in classes])
    means = np.stack([x[f.labels == c].mean(axis=0) for c in classes])
    centered = x - means[np.searchsorted(classes, f.labels)]
    dof = max(f.m - classes.size, 1)
    cov = centered.T @ centered / dof
    tr = np.trace(cov)
    if not tr > 0:
        raise NumericalError("pooled within-class covariance is zero; cannot fit a discriminant")
    cov = cov + np.eye(f.r) * (LDA_RIDGE * tr / f.r)
    try:
        cov_inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"pooled covariance is singular after regularization: {exc}") from exc
    if not np.all(np.isfinite(cov_inv)):
        raise NumericalError("pooled covariance inverse is not finite")
    return LdaState(classes=classes.astype(np.int64), means=means, cov_inv=cov_inv, priors=counts / counts.sum())


CLASSIFIERS = ("knn", "tree", "gnb", "lda")
_STATE_TYPES = {cls.kind: cls for cls in (KnnState, TreeState, GnbState, LdaState)}


def fit_classifier(name: str, f: FeatureMatrix, neighbors: int = 1, max_depth: int = 32, min_leaf: int = 1):
    if name == "knn":
        return fit_knn(f, neighbors)
    if name == "tree":
        return fit_tree(f, max_depth, min_leaf)
    if name == "gnb":
        return fit_gnb(f)
    if name == "lda":
        return fit_lda(f)
    raise ValidationError(f"unknown classifier {name!r} (choose from {', '.join(CLASSIFIERS)})")


# --- trained model ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """Everything needed to classify a raw image.

    Prediction runs: optional FFT magnitude -> projection on ``basis`` ->
    optional normalization -> classifier.
    """

    use_fft: bool
    basis: np.ndarray
    classifier: KnnState | TreeState | GnbState | LdaState
    normalization: NormalizationStats | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.basis.shape[1] != self.classifier.r:
            raise DimensionError(
                f"basis has {self.basis.shape[1]} modes but the classifier expects {self.classifier.r}"
            )

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.basis.shape[0])))

    @property
    def truncation_rank(self) -> int:
        return self.basis.shape[1]

    def features(self, images) -> np.ndarray:
        """Reduced (and optionally normalized) coordinates of raw images."""
        stack = np.asarray(getattr(images, "pixels", images), dtype=np.float64)
        if stack.ndim == 2:
            stack = stack[None]
        if stack.ndim != 3 or stack.shape[1] * stack.shape[2] != self.basis.shape[0]:
            raise DimensionError(
                f"images of shape {stack.shape[1:]} do not match a basis for "
                f"{self.side}x{self.side} images"
            )
        x = fft_magnitude(stack) if self.use_fft else to_data_matrix(stack)
        coords = project(self.basis, x)
        if self.normalization is not None:
            coords = apply_normalization(self.normalization, coords)
        return coords

    def predict_many(self, images) -> np.ndarray:
        return self.classifier.predict(self.features(images))


def make_model(classifier, basis, use_fft, normalization=None, provenance=None) -> TrainedModel:
    return TrainedModel(
        use_fft=bool(use_fft),
        basis=np.ascontiguousarray(basis, dtype=np.float64),
        classifier=classifier,
        normalization=normalization,
        provenance=dict(provenance or {}),
    )


def predict(model: TrainedModel, image) -> int:
    """Class index of a single image (a LabeledImage or a square pixel grid)."""
    pixels = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    if pixels.ndim != 2:
        raise DimensionError(f"expected one 2-D image, got shape {pixels.shape}")
    return int(model.predict_many(pixels[None])[0])


# --- persistence --------------------------------------------------------------
#
# Layout (all integers little-endian):
#   4 bytes   magic b"EPAT"
#   u32       format version
#   u64       header length H
#   H bytes   UTF-8 JSON header: {"model": {...}, "arrays": [{"name", "shape"}, ...]}
#   then, for every header array in order, prod(shape) float64 values (<f8)

MAGIC = b"EPAT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def _model_arrays(model):
    arrays = {"basis": model.basis}
    if model.normalization is not None:
        arrays["norm_mean"] = model.normalization.mean
        arrays["norm_std"] = model.normalization.std
    for name, arr in model.classifier.arrays().items():
        arrays["clf_" + name] = arr
    return arrays


def model_to_bytes(model: TrainedModel) -> bytes:
    arrays = _model_arrays(model)
    header = {
        "model": {
            "classifier": model.classifier.kind,
            "classifier_params": model.classifier.params(),
            "use_fft": model.use_fft,
            "normalized": model.normalization is not None,
            "provenance": model.provenance,
        },
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)), head]
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes) -> TrainedModel:
    if len(data) < _PREFIX.size:
        if data[: len(MAGIC)] != MAGIC[: len(data)]:
            raise ModelFormatError("not an EPAT model file (bad magic)")
        raise TruncatedModelError("model file ends inside the fixed prefix")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"not an EPAT model file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {version} (supported: {FORMAT_VERSION})")
    off = _PREFIX.size
    if len(data) < off + head_len:
        raise TruncatedModelError("model file ends inside the header")
    try:
        header = json.loads(data[off:off + head_len].decode("utf-8"))
        spec = header["model"]
        entries = header["arrays"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from exc
    off += head_len
    arrays = {}
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if len(data) < off + nbytes:
            raise TruncatedModelError(f"model file ends inside array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=off).reshape(shape).astype(np.float64)
        off += nbytes
    if off != len(data):
        raise ModelFormatError(f"{len(data) - off} unexpected trailing bytes")

    kind = spec["classifier"]
    if kind not in _STATE_TYPES:
        raise ModelFormatError(f"unknown classifier kind {kind!r}")
    clf_arrays = {k[4:]: v for k, v in arrays.items() if k.startswith("clf_")}
    params = spec.get("classifier_params", {})
    if kind == "knn":
        clf = KnnState(clf_arrays["train_coords"], clf_arrays["train_labels"].astype(np.int64), **params)
    elif kind == "tree":
        ints = {k: clf_arrays[k].astype(np.int64) for k in ("feature", "left", "right", "value")}
        clf = TreeState(threshold=clf_arrays["threshold"], **ints, **params)
    else:
        clf = _STATE_TYPES[kind](**{k: (v.astype(np.int64) if k == "classes" else v) for k, v in clf_arrays.items()})
    norm = None
    if spec.get("normalized"):
        norm = NormalizationStats(mean=arrays["norm_mean"], std=arrays["norm_std"])
    return TrainedModel(
        use_fft=bool(spec["use_fft"]),
        basis=arrays["basis"],
        classifier=clf,
        normalization=norm,
        provenance=spec.get("provenance", {}),
    )


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> TrainedModel:
    return model_from_bytes(Path(path).read_bytes())
