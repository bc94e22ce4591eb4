"""Fuse transformed features and transport/correlation signals into the
observation vectors consumed by the segmentation model.

The fused matrix is z-scored per column and projected onto its top
principal components; constant columns are zeroed by the guard and the
component signs are fixed so the whole construction is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import FeatureSequence
from .errors import DataError, DimensionError

CHANNELS = ("visual", "language", "wd_v", "wd_l", "gwd", "cca")


@dataclass(frozen=True)
class SignalSeries:
    """Per-timestep scalar channels produced by the transport stage."""

    wd_v: np.ndarray
    wd_l: np.ndarray
    gwd: np.ndarray
    cca: np.ndarray

    def __post_init__(self):
        arrays = {}
        n = None
        for name in ("wd_v", "wd_l", "gwd", "cca"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise DimensionError(f"{name} must be 1-D")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise DimensionError("signal channels must share one length")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
            arrays[name] = arr
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.wd_v.size

    def to_records(self) -> list[dict]:
        return [
            {
                "t": t,
                "wd_v": float(self.wd_v[t]),
                "wd_l": float(self.wd_l[t]),
                "gwd": float(self.gwd[t]),
                "cca": float(self.cca[t]),
            }
            for t in range(self.n)
        ]

    @classmethod
    def from_records(cls, records) -> "SignalSeries":
        records = sorted(records, key=lambda r: r["t"])
        return cls(
            wd_v=np.array([r["wd_v"] for r in records]),
            wd_l=np.array([r["wd_l"] for r in records]),
            gwd=np.array([r["gwd"] for r in records]),
            cca=np.array([r["cca"] for r in records]),
        )


@dataclass(frozen=True)
class ObservationSequence:
    """Fused, standardized, PCA-projected observations (n, d_obs)."""

    data: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    basis: np.ndarray
    energy: float
    channels: tuple

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, FeatureSequence):
        return x.data
    return np.asarray(x, dtype=np.float64)


def fused_matrix(V2, L2, signals: SignalSeries, channels) -> np.ndarray:
    """Concatenate the selected channel blocks column-wise (pre-standardization)."""
    if not channels:
        raise DataError("at least one channel must be selected")
    unknown = set(channels) - set(CHANNELS)
    if unknown:
        raise DataError(f"unknown channels {sorted(unknown)}")
    V2 = _as_matrix(V2)
    L2 = _as_matrix(L2)
    n = V2.shape[0]
    if L2.shape[0] != n or signals.n != n:
        raise DimensionError("V2, L2 and signals must share one length")
    blocks = []
    for name in CHANNELS:  # fixed order keeps the fusion deterministic
        if name not in channels:
            continue
        if name == "visual":
            blocks.append(V2)
        elif name == "language":
            blocks.append(L2)
        else:
            blocks.append(getattr(signals, name)[:, None])
    return np.hstack(blocks)


def zscore_columns(F: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardize columns to zero mean, unit sample std; constants map to 0."""
    mean = F.mean(axis=0)
    std = F.std(axis=0, ddof=1) if F.shape[0] > 1 else np.zeros(F.shape[1])
    safe = np.where(std > 0, std, 1.0)
    Z = (F - mean) / safe
    Z[:, std == 0] = 0.0
    return Z, mean, std


def _pca_project(Z: np.ndarray, d_obs: int):
    """Top-d_obs principal components with sign fixed per component."""
    _, svals, Vt = np.linalg.svd(Z, full_matrices=False)
    comps = Vt[:d_obs].copy()
    for row in comps:
        j = np.argmax(np.abs(row))
        if row[j] < 0:
            row *= -1.0
    total = float(np.sum(svals**2))
    energy = float(np.sum(svals[:d_obs] ** 2) / total) if total > 0 else 0.0
    return Z @ comps.T, comps, energy


def ablation_select(V2, L2, signals: SignalSeries, channels, d_obs: int,
                    seed: int = 0) -> ObservationSequence:
    """Observation pipeline restricted to a subset of channels.

    d_obs is clipped to the fused width for narrow subsets; the seed is
    accepted for interface stability but the construction is closed-form.
    """
    F = fused_matrix(V2, L2, signals, channels)
    if d_obs < 1:
        raise DimensionError(f"d_obs must be >= 1, got {d_obs}")
    d_eff = min(d_obs, F.shape[1])
    Z, mean, std = zscore_columns(F)
    data, basis, energy = _pca_project(Z, d_eff)
    return ObservationSequence(
        data=data, mean=mean, std=std, basis=basis, energy=energy,
        channels=tuple(name for name in CHANNELS if name in channels),
    )


def build_observations(V2, L2, signals: SignalSeries, d_obs: int,
                       seed: int = 0) -> ObservationSequence:
    """Fuse every channel and project onto the top-d_obs components."""
    full_dim = _as_matrix(V2).shape[1] + _as_matrix(L2).shape[1] + 4
    if not (1 <= d_obs <= full_dim):
        raise DimensionError(f"d_obs must be in [1, {full_dim}], got {d_obs}")
    return ablation_select(V2, L2, signals, CHANNELS, d_obs, seed)
