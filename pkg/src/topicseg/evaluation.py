"""Tolerance-interval boundary matching and precision/recall/F1.

A predicted boundary matches a reference boundary when they lie within
omega_t seconds of each other; matches form a maximum one-to-one
bipartite matching (augmenting paths).  Hits, false alarms and misses
are the matching size and the two leftovers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .datamodel import Segmentation
from .errors import DataError, DimensionError


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int,
                    both_empty_perfect: bool = True) -> "Metrics":
        if tp == fp == fn == 0:
            # both boundary sets empty: perfect by convention
            one = 1.0 if both_empty_perfect else 0.0
            return cls(0, 0, 0, one, one, one)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, f1)


def _max_bipartite_matching(adj: list[list[int]], n_right: int) -> int:
    """Maximum matching size by Kuhn's augmenting-path algorithm."""
    match_right = [-1] * n_right

    def try_augment(u, seen):
        for v in adj[u]:
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] < 0 or try_augment(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    size = 0
    for u in range(len(adj)):
        if try_augment(u, [False] * n_right):
            size += 1
    return size


def boundary_prf(pred: Segmentation, ref: Segmentation, omega_t: float) -> Metrics:
    """Precision/recall/F1 of predicted boundaries under tolerance omega_t.

    Both segmentations must cover the same duration.  Conventions: both
    empty -> all ones; exactly one empty -> all zeros.
    """
    if omega_t <= 0:
        raise DataError(f"omega_t must be positive, got {omega_t}")
    if abs(pred.duration - ref.duration) > 1e-6:
        raise DimensionError(
            f"durations differ: {pred.duration} vs {ref.duration}"
        )
    p = list(pred.boundaries)
    r = list(ref.boundaries)
    adj = [[j for j, rb in enumerate(r) if abs(pb - rb) <= omega_t] for pb in p]
    tp = _max_bipartite_matching(adj, len(r))
    return Metrics.from_counts(tp=tp, fp=len(p) - tp, fn=len(r) - tp)


def sweep_tolerance(pred: Segmentation, ref: Segmentation,
                    omegas: list[float]) -> list[tuple[float, Metrics]]:
    """boundary_prf for each tolerance, in the given order."""
    if any(w <= 0 for w in omegas):
        raise DataError("all tolerances must be positive")
    return [(w, boundary_prf(pred, ref, w)) for w in omegas]


CSV_COLUMNS = ("video_id", "omega_t", "tp", "fp", "fn", "precision", "recall", "f1")


def metrics_rows(per_video: list[tuple[str, float, Metrics]]) -> list[dict]:
    """Per-video rows plus pooled micro- and averaged macro-aggregate rows.

    The aggregates are emitted once per distinct omega_t, in first-seen
    order, with video_id "micro" and "macro".
    """
    rows = [
        {
            "video_id": vid,
            "omega_t": omega,
            "tp": m.tp,
            "fp": m.fp,
            "fn": m.fn,
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
        }
        for vid, omega, m in per_video
    ]
    omegas = []
    for _, omega, _ in per_video:
        if omega not in omegas:
            omegas.append(omega)
    for omega in omegas:
        group = [m for _, w, m in per_video if w == omega]
        micro = Metrics.from_counts(
            tp=sum(m.tp for m in group),
            fp=sum(m.fp for m in group),
            fn=sum(m.fn for m in group),
        )
        rows.append({
            "video_id": "micro", "omega_t": omega,
            "tp": micro.tp, "fp": micro.fp, "fn": micro.fn,
            "precision": micro.precision, "recall": micro.recall, "f1": micro.f1,
        })
        rows.append({
            "video_id": "macro", "omega_t": omega,
            "tp": sum(m.tp for m in group),
            "fp": sum(m.fp for m in group),
            "fn": sum(m.fn for m in group),
            "precision": sum(m.precision for m in group) / len(group),
            "recall": sum(m.recall for m in group) / len(group),
            "f1": sum(m.f1 for m in group) / len(group),
        })
    return rows


def write_metrics_csv(rows: list[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def metrics_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    write_metrics_csv(rows, buf)
    return buf.getvalue()
