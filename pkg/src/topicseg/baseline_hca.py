"""Hierarchical-clustering baseline with a time-weighted distance.

Pairwise distance mixes normalized timestamp separation with cosine
distance on the raw visual features; average-linkage clustering is cut
where merge similarity (1 - merge distance) falls below the threshold,
and boundaries are emitted wherever the cluster label changes along the
timeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .datamodel import FeatureSequence, Segmentation
from .errors import DataError, DimensionError
from .fusion import _as_matrix


@dataclass(frozen=True)
class HcaConfig:
    """alpha_b balances time vs feature distance; beta_b cuts the dendrogram."""

    alpha_b: float = 0.5
    beta_b: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.alpha_b <= 1.0 and 0.0 <= self.beta_b <= 1.0):
            raise DataError("alpha_b and beta_b must lie in [0, 1]")


def hca_distance_matrix(V1, alpha_b: float) -> np.ndarray:
    """d(i,j) = alpha_b |t_i - t_j|/duration + (1-alpha_b) cos_dist(i,j)/2.

    Both terms are normalized to [0, 1], so the combined distance is too.
    """
    X = _as_matrix(V1)
    n = X.shape[0]
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = X / safe[:, None]
    cos_sim = unit @ unit.T
    cos_sim[norms == 0, :] = 0.0
    cos_sim[:, norms == 0] = 0.0
    cos_dist = np.clip(1.0 - cos_sim, 0.0, 2.0) / 2.0
    t = np.arange(n, dtype=np.float64)
    time_dist = np.abs(t[:, None] - t[None, :]) / n
    D = alpha_b * time_dist + (1.0 - alpha_b) * cos_dist
    np.fill_diagonal(D, 0.0)
    return np.minimum(D, D.T)


def hca_linkage(V1, cfg: HcaConfig) -> np.ndarray:
    """Average-linkage merge tree over the combined distance."""
    X = _as_matrix(V1)
    if X.shape[0] < 2:
        raise DimensionError("clustering needs at least 2 frames")
    D = hca_distance_matrix(X, cfg.alpha_b)
    return linkage(squareform(D, checks=False), method="average")


def hca_segment(V1: FeatureSequence, cfg: HcaConfig | None = None) -> Segmentation:
    """Cluster frames and emit boundaries at timeline label changes.

    The dendrogram is cut where merge similarity drops below beta_b,
    i.e. clusters merged at distance <= 1 - beta_b stay together; beta_b
    of 0 keeps everything in one cluster.
    """
    cfg = cfg or HcaConfig()
    X = _as_matrix(V1)
    n = X.shape[0]
    if n < 2:
        raise DimensionError("clustering needs at least 2 frames")
    Z = hca_linkage(X, cfg)
    labels = fcluster(Z, t=1.0 - cfg.beta_b, criterion="distance")
    change = np.flatnonzero(labels[1:] != labels[:-1])
    return Segmentation(
        duration=float(n),
        boundaries=tuple(float(t + 1) for t in change),
        labels=tuple(int(labels[t]) for t in np.r_[change, n - 1]),
    )
