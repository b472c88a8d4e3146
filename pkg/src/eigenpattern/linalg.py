"""SVD machinery for data matrices whose columns are flattened images.

A data matrix is a 2-D float64 numpy array of shape ``(n_pixels, n_images)``.
No mean subtraction is performed anywhere in this module: the first mode of
a nonnegative image collection therefore tracks the mean image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, DimensionError, InputError

DEFAULT_OVERSAMPLING = 10
DEFAULT_POWER_ITERATIONS = 1


def as_data_matrix(x) -> np.ndarray:
    """Validate and convert ``x`` to a 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"data matrix must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise DimensionError(f"data matrix is empty (shape {a.shape})")
    if not np.all(np.isfinite(a)):
        raise InputError("data matrix contains non-finite entries")
    return a


@dataclass(frozen=True)
class SvdFactorization:
    """Thin factorization ``x ~= u @ diag(sigma) @ vt``.

    ``method`` is ``"economy"`` or ``"randomized"``; for the latter ``params``
    holds ``target_rank``, ``oversampling``, ``power_iterations`` and ``seed``.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray
    method: str = "economy"
    params: dict | None = None

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self, r: int | None = None) -> np.ndarray:
        r = self.rank if r is None else r
        return (self.u[:, :r] * self.sigma[:r]) @ self.vt[:r]


@dataclass(frozen=True)
class ReducedFeatures:
    basis: np.ndarray
    coords: np.ndarray

    @property
    def truncation_rank(self) -> int:
        return self.basis.shape[1]


def _fix_signs(u, vt):
    # largest-magnitude entry of every u column is made nonnegative
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def economy_svd(x) -> SvdFactorization:
    x = as_data_matrix(x)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    u, vt = _fix_signs(u, vt)
    return SvdFactorization(u=u, sigma=s, vt=vt, method="economy")


def _orthonormal_basis(y):
    q, _ = np.linalg.qr(y, mode="reduced")
    return q


def randomized_svd(
    x,
    target_rank: int,
    oversampling: int = DEFAULT_OVERSAMPLING,
    power_iterations: int = DEFAULT_POWER_ITERATIONS,
    seed: int = 0,
) -> SvdFactorization:
    """Randomized SVD with a Gaussian sketch and subspace (power) iterations.

    The range of ``x`` is sampled with ``target_rank + oversampling`` random
    combinations of its columns (capped at ``min(x.shape)``), refined by
    ``power_iterations`` rounds of re-orthonormalized subspace iteration, and
    the small projected matrix is decomposed exactly. Only the leading
    ``target_rank`` triplets are returned.
    """
    x = as_data_matrix(x)
    n, m = x.shape
    if not 1 <= target_rank <= min(n, m):
        raise DimensionError(
            f"target rank {target_rank} outside [1, {min(n, m)}] for a {n}x{m} matrix"
        )
    if oversampling < 0 or power_iterations < 0:
        raise InputError("oversampling and power iterations must be nonnegative")

    n_samples = min(target_rank + oversampling, n, m)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((m, n_samples))

    q = _orthonormal_basis(x @ omega)
    for _ in range(power_iterations):
        z = _orthonormal_basis(x.T @ q)
        q = _orthonormal_basis(x @ z)

    b = q.T @ x
    u_small, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ u_small
    u, s, vt = u[:, :target_rank], s[:target_rank], vt[:target_rank]
    u, vt = _fix_signs(u, vt)
    params = {
        "target_rank": int(target_rank),
        "oversampling": int(oversampling),
        "power_iterations": int(power_iterations),
        "seed": int(seed),
    }
    return SvdFactorization(u=u, sigma=s, vt=vt, method="randomized", params=params)


def project(basis: np.ndarray, x) -> np.ndarray:
    """Coordinates of the columns of ``x`` in ``basis`` (``basis.T @ x``)."""
    x = as_data_matrix(x)
    if x.shape[0] != basis.shape[0]:
        raise DimensionError(
            f"data has {x.shape[0]} rows but the basis expects {basis.shape[0]}"
        )
    return basis.T @ x


def truncate_and_project(fac: SvdFactorization, x, r: int) -> ReducedFeatures:
    if not 1 <= r <= fac.rank:
        raise DimensionError(f"truncation rank {r} outside [1, {fac.rank}]")
    basis = np.ascontiguousarray(fac.u[:, :r])
    return ReducedFeatures(basis=basis, coords=project(basis, x))


def _check_spectrum(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=np.float64).ravel()
    if s.size == 0 or not np.all(np.isfinite(s)) or np.any(s < 0):
        raise InputError("singular values must be a nonempty sequence of finite nonnegative reals")
    if not np.any(s > 0):
        raise DegenerateSpectrumError("all singular values are zero")
    return s


def normalized_singular_values(sigma) -> np.ndarray:
    s = _check_spectrum(sigma)
    return s / s.sum()


def cumulative_energy(sigma) -> np.ndarray:
    """Running share of the singular-value sum, in percent."""
    out = np.cumsum(normalized_singular_values(sigma)) * 100.0
    # pin the end point; cumsum rounding can leave it a few ulps off
    out[-1] = 100.0
    return np.minimum(out, 100.0)


def modes_for_energy(sigma, percent: float) -> int:
    """Smallest number of leading modes whose cumulative energy reaches ``percent``."""
    ce = cumulative_energy(sigma)
    return int(np.searchsorted(ce, percent - 1e-12) + 1)
