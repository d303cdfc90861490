"""First and second moments of feature sets.

Three estimators back every metric in the package:

* :func:`compute_stats` -- plain sample mean and unbiased covariance
  (denominator ``n - 1``), two-pass, accumulated in float64.
* :func:`update_stats` -- rank-1 update that appends a single feature
  vector to existing statistics without touching the original rows.
* :func:`weighted_stats` -- weighted mean and covariance normalized by the
  weight sum (biased normalization, deliberately different from
  :func:`compute_stats`; uniform weights give ``(n-1)/n`` times the
  unbiased covariance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamplesError, InvalidDataError, PreconditionError

__all__ = [
    "GaussianStats",
    "compute_stats",
    "update_stats",
    "downdate_stats",
    "weighted_stats",
]


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector, covariance matrix and the sample count they came from."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=np.float64))
        if self.mean.ndim != 1:
            raise PreconditionError("mean must be a 1-D vector")
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise PreconditionError(
                f"cov must be {d}x{d} to match the mean, got {self.cov.shape}"
            )
        if not (np.isfinite(self.mean).all() and np.isfinite(self.cov).all()):
            raise InvalidDataError("mean/cov contain non-finite entries")


def _as_feature_matrix(features) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise PreconditionError(f"features must be a 2-D (n, d) matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidDataError("features contain non-finite entries")
    return arr


def _symmetrize(m: np.ndarray) -> np.ndarray:
    # Absorbs floating-point asymmetry from the accumulation order.
    return (m + m.T) / 2.0


def compute_stats(features) -> GaussianStats:
    """Sample mean and unbiased covariance of an ``(n, d)`` feature matrix.

    Two-pass: the mean is computed first and subtracted before forming the
    scatter matrix, which keeps the result accurate for large ``n`` and
    wide dynamic ranges.  Requires ``n >= 2``.
    """
    arr = _as_feature_matrix(features)
    n = arr.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 samples for a covariance, got {n}")
    mean = arr.mean(axis=0)
    centered = arr - mean
    cov = _symmetrize(centered.T @ centered / (n - 1))
    return GaussianStats(mean=mean, cov=cov, count=n)


def update_stats(stats: GaussianStats, f, new_count: int) -> GaussianStats:
    """Statistics of ``stats``' underlying set with one vector ``f`` appended.

    ``new_count`` is the size of the updated set and must equal
    ``stats.count + 1``; the result matches :func:`compute_stats` on the
    concatenated rows.  The covariance update uses the deviation from the
    *old* mean:

        mean' = (N-1)/N * mean + f/N
        cov'  = (N-2)/(N-1) * cov + outer(f - mean, f - mean) / N
    """
    n = int(new_count)
    if n < 3:
        raise PreconditionError(f"updated count must be >= 3, got {n}")
    if stats.count != n - 1:
        raise PreconditionError(
            f"stats were computed from {stats.count} samples, expected {n - 1} for an update to {n}"
        )
    vec = np.asarray(f, dtype=np.float64)
    if vec.shape != (stats.dim,):
        raise PreconditionError(f"feature vector must have shape ({stats.dim},), got {vec.shape}")
    if not np.isfinite(vec).all():
        raise InvalidDataError("feature vector contains non-finite entries")

    dev = vec - stats.mean
    mean = stats.mean * ((n - 1) / n) + vec / n
    cov = stats.cov * ((n - 2) / (n - 1)) + np.outer(dev, dev) / n
    return GaussianStats(mean=mean, cov=_symmetrize(cov), count=n)


def downdate_stats(stats: GaussianStats, f) -> GaussianStats:
    """Inverse of :func:`update_stats`: remove one vector from the statistics.

    Used to form leave-one-out base statistics when a feature file holds
    the full generated set and a single image must be split off.
    """
    n = stats.count
    if n < 3:
        raise PreconditionError(f"need at least 3 samples to remove one, got {n}")
    vec = np.asarray(f, dtype=np.float64)
    if vec.shape != (stats.dim,):
        raise PreconditionError(f"feature vector must have shape ({stats.dim},), got {vec.shape}")

    mean = (stats.mean * n - vec) / (n - 1)
    dev = vec - mean
    cov = (stats.cov - np.outer(dev, dev) / n) * ((n - 1) / (n - 2))
    return GaussianStats(mean=mean, cov=_symmetrize(cov), count=n - 1)


def weighted_stats(features, weights) -> GaussianStats:
    """Weighted mean and covariance, both normalized by the weight sum.

    The covariance deliberately uses the biased ``sum(w)`` denominator:
    with uniform weights it equals ``(n-1)/n`` times the unbiased
    covariance of :func:`compute_stats`.  Weights must be strictly
    positive and finite; scaling all of them by a constant leaves the
    result unchanged.
    """
    arr = _as_feature_matrix(features)
    w = np.asarray(weights, dtype=np.float64)
    n = arr.shape[0]
    if w.shape != (n,):
        raise PreconditionError(f"weights must have shape ({n},), got {w.shape}")
    if not np.isfinite(w).all():
        raise InvalidDataError("weights contain non-finite entries")
    if (w <= 0).any():
        raise PreconditionError("weights must be strictly positive")

    total = w.sum()
    mean = (w @ arr) / total
    centered = arr - mean
    cov = _symmetrize((centered * w[:, None]).T @ centered / total)
    return GaussianStats(mean=mean, cov=cov, count=n)
