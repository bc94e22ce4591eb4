"""Merge segments shorter than the minimum admissible length into their
most similar neighbor.

Shortest segment first: its mean visual and language features are
compared with each adjacent segment by cosine similarity (summed over the
two modalities) and the boundary toward the more similar neighbor is
removed; ties merge into the earlier neighbor.  When the merge leaves two
adjacent segments with the same label, the boundary between them goes
too.  The loop runs until every segment is at least l_s seconds long or
a single segment remains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Segmentation
from .errors import DataError
from .fusion import _as_matrix


@dataclass(frozen=True)
class MergeConfig:
    """Minimum segment length in seconds."""

    l_s: float = 60.0

    def __post_init__(self):
        if self.l_s <= 0:
            raise DataError(f"l_s must be positive, got {self.l_s}")


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def _segment_mean(X: np.ndarray, start: float, end: float) -> np.ndarray:
    lo = int(round(start))
    hi = int(round(end))
    lo = max(0, min(lo, X.shape[0] - 1))
    hi = max(lo + 1, min(hi, X.shape[0]))
    return X[lo:hi].mean(axis=0)


def merge_short_segments(seg: Segmentation, V2, L2,
                         cfg: MergeConfig | None = None) -> Segmentation:
    """Absorb segments shorter than cfg.l_s into their more similar neighbor.

    Output boundaries are a subset of the input's; the result has no
    segment shorter than l_s unless it is the single remaining segment.
    Idempotent.
    """
    cfg = cfg or MergeConfig()
    V2 = _as_matrix(V2)
    L2 = _as_matrix(L2)
    edges = [0.0, *seg.boundaries, seg.duration]
    labels = list(seg.labels) if seg.labels is not None else None

    def lengths():
        return [b - a for a, b in zip(edges[:-1], edges[1:])]

    while len(edges) > 2:
        lens = lengths()
        short = [(l, i) for i, l in enumerate(lens) if l < cfg.l_s]
        if not short:
            break
        _, i = min(short)
        mean_v = _segment_mean(V2, edges[i], edges[i + 1])
        mean_l = _segment_mean(L2, edges[i], edges[i + 1])

        def similarity(j):
            return (
                _cosine(mean_v, _segment_mean(V2, edges[j], edges[j + 1]))
                + _cosine(mean_l, _segment_mean(L2, edges[j], edges[j + 1]))
            )

        n_seg = len(lens)
        if i == 0:
            into_left = False
        elif i == n_seg - 1:
            into_left = True
        else:
            into_left = similarity(i - 1) >= similarity(i + 1)
        if into_left:
            del edges[i]
            if labels is not None:
                del labels[i]
                keep = i - 1
        else:
            del edges[i + 1]
            if labels is not None:
                del labels[i]
                keep = i
        if labels is not None:
            # absorbing can leave equal labels flanking the removed edge;
            # coalesce so a blip inside one topic does not leave a boundary
            j = keep
            while j + 1 < len(labels) and labels[j + 1] == labels[j]:
                del edges[j + 1]
                del labels[j + 1]
            while j - 1 >= 0 and labels[j - 1] == labels[j]:
                del edges[j]
                del labels[j]
                j -= 1
    return Segmentation(
        duration=seg.duration,
        boundaries=tuple(edges[1:-1]),
        labels=tuple(labels) if labels is not None else None,
    )
