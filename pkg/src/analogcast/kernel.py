"""Compactly supported Gaussian analog weights.

Weights follow exp(-d^2 / (2 * theta1)) truncated to the m nearest
candidates and normalized to sum to one.  Distance ties are broken
toward the smaller (earlier) candidate index so the support is unique.
Exponentials are shifted by the smallest squared distance before
normalizing, which is exact after normalization and keeps tiny theta1
from underflowing every weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class WeightVector:
    """Normalized analog weights aligned with ``candidate_ids``."""

    candidate_ids: np.ndarray  # (n,) as passed in
    weights: np.ndarray  # (n,) nonnegative, sums to 1
    support_ids: np.ndarray  # ids of the m (or fewer) nearest candidates
    theta1: float
    h_max: float  # squared distance of the farthest supported candidate
    pool_short: bool  # True when fewer than m candidates were available


def topk_weights(
    dist: np.ndarray, theta1: float, m: int
) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise truncated Gaussian weights for a (n_rows, n_cand) distance
    matrix. Excluded candidates are marked with +inf distance and can never
    carry weight. Returns (weights, columns), both (n_rows, min(m, n_cand)).
    """
    if theta1 <= 0.0:
        raise ConfigError(f"theta1 must be > 0, got {theta1}")
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[1] < 1:
        raise ConfigError("need a 2-d distance matrix with at least one candidate")
    if (np.nan_to_num(dist, posinf=0.0) < 0).any():
        raise ConfigError("distances must be nonnegative")
    m_eff = min(m, dist.shape[1])
    order = np.argsort(dist, axis=1, kind="stable")  # stable: ties keep lower column
    cols = order[:, :m_eff]
    d2 = np.take_along_axis(dist, cols, axis=1) ** 2
    if not np.isfinite(d2[:, 0]).all():
        raise NumericError("some row has no finite-distance candidate")
    with np.errstate(invalid="ignore"):
        w = np.exp(-(d2 - d2[:, :1]) / (2.0 * theta1))
    w[~np.isfinite(d2)] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    return w, cols


def kernel_weights(
    candidate_ids: np.ndarray, distances: np.ndarray, theta1: float, m: int
) -> WeightVector:
    """Weights over one candidate pool, in the pool's given order.

    Exactly min(m, pool) candidates get nonzero weight; everything beyond
    the m-th nearest squared distance is truncated to zero.
    """
    candidate_ids = np.asarray(candidate_ids)
    distances = np.asarray(distances, dtype=float)
    if candidate_ids.shape != distances.shape or distances.ndim != 1:
        raise ConfigError("candidate_ids and distances must be equal-length 1-d arrays")
    if distances.size == 0:
        raise ConfigError("empty candidate pool")
    # Primary key distance, secondary key candidate id for deterministic ties.
    order = np.lexsort((candidate_ids, distances))
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    w_sorted, _ = topk_weights(distances[order][None, :], theta1, m)
    m_eff = w_sorted.shape[1]
    full = np.zeros(distances.size)
    full[: m_eff] = w_sorted[0]
    full = full[inv]
    support = candidate_ids[order[:m_eff]]
    d2_support = distances[order[:m_eff]] ** 2
    return WeightVector(
        candidate_ids=candidate_ids,
        weights=full,
        support_ids=support,
        theta1=float(theta1),
        h_max=float(d2_support[np.isfinite(d2_support)].max()),
        pool_short=m > distances.size,
    )
