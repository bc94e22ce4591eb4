"""Core domain types, feature-file and manifest I/O, transcript alignment.

Feature files are the binary interchange format between the segmentation
engine and any feature extractor:

    magic "LSG1" (4 bytes) | u32 version=1 | u32 n | u32 d | n*d float32

All integers and floats are little-endian; the payload is row-major.
Features are float32 on disk and promoted to float64 in memory.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"LSG1"
FEATURE_VERSION = 1

VISUAL = "visual"
LANGUAGE = "language"


@dataclass(frozen=True)
class FeatureSequence:
    """A timestamped matrix of per-frame embeddings for one modality.

    One row per second of video (``fps`` is fixed at 1.0); ``data`` has
    shape (n, d) and is float64 in memory.
    """

    data: np.ndarray
    modality: str = VISUAL
    fps: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"feature matrix must be (n>=1, d>=1), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("feature matrix contains non-finite entries")
        if self.fps != 1.0:
            raise DataError(f"fps must be 1.0, got {self.fps}")
        if self.modality not in (VISUAL, LANGUAGE):
            raise DataError(f"unknown modality {self.modality!r}")
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Covered time span in seconds."""
        return self.n / self.fps


@dataclass(frozen=True)
class Sentence:
    """One transcript sentence with its time span in seconds."""

    text: str
    offset: float
    duration: float

    def __post_init__(self):
        if not (self.offset >= 0 and math.isfinite(self.offset)):
            raise DataError(f"sentence offset must be >= 0, got {self.offset}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise DataError(f"sentence duration must be > 0, got {self.duration}")


@dataclass(frozen=True)
class AlignedTranscript:
    """Per-frame sentence assignments from the window-duplication rule.

    ``per_frame[t]`` lists the indices of the sentences whose time span
    intersects the window [t, t+1); a sentence spanning several windows
    appears in each of them.  ``dropped`` records sentences that start at
    or beyond the end of the video.
    """

    per_frame: tuple
    dropped: tuple = ()

    @property
    def n(self) -> int:
        return len(self.per_frame)


@dataclass(frozen=True)
class Segmentation:
    """Ordered interior boundary timestamps partitioning [0, duration).

    ``boundaries`` is strictly increasing and every entry lies in the open
    interval (0, duration).  ``labels``, when present, gives one state id
    per segment (``len(boundaries) + 1`` entries).
    """

    duration: float
    boundaries: tuple
    labels: tuple | None = None

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise DataError(f"duration must be positive, got {self.duration}")
        bounds = tuple(float(b) for b in self.boundaries)
        for b in bounds:
            if not (0.0 < b < self.duration):
                raise DataError(f"boundary {b} outside (0, {self.duration})")
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise DataError("boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", bounds)
        if self.labels is not None:
            labels = tuple(int(x) for x in self.labels)
            if len(labels) != len(bounds) + 1:
                raise DimensionError(
                    f"expected {len(bounds) + 1} labels, got {len(labels)}"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def num_segments(self) -> int:
        return len(self.boundaries) + 1

    def segments(self) -> list[tuple[float, float]]:
        """Return the covered intervals [(0, b1), (b1, b2), ..., (bk, duration)]."""
        edges = (0.0, *self.boundaries, self.duration)
        return list(zip(edges[:-1], edges[1:]))

    @classmethod
    def from_frame_labels(cls, labels: np.ndarray, fps: float = 1.0) -> "Segmentation":
        """Build a segmentation from a per-frame state sequence."""
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size < 1:
            raise DimensionError("frame labels must be a non-empty 1-D sequence")
        change = np.flatnonzero(labels[1:] != labels[:-1])
        boundaries = tuple((t + 1) / fps for t in change)
        seg_labels = tuple(int(labels[t]) for t in np.r_[change, labels.size - 1])
        return cls(duration=labels.size / fps, boundaries=boundaries, labels=seg_labels)

    def to_dict(self, video_id: str = "") -> dict:
        out = {
            "format_version": 1,
            "video_id": video_id,
            "duration_s": float(self.duration),
            "boundaries_s": [float(b) for b in self.boundaries],
        }
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "Segmentation":
        return cls(
            duration=payload["duration_s"],
            boundaries=tuple(payload["boundaries_s"]),
            labels=tuple(payload["labels"]) if payload.get("labels") else None,
        )


@dataclass
class Manifest:
    """Pointers to the per-video inputs of one segmentation run."""

    video_id: str
    visual_path: str
    language_path: str
    sentences: list = field(default_factory=list)
    reference_boundaries: list | None = None


def write_feature_file(path, data: np.ndarray, modality: str = VISUAL) -> None:
    """Write a feature matrix in the binary interchange format (float32)."""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise DimensionError(f"expected 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("refusing to write non-finite features")
    n, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, n, d))
        fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def load_feature_file(path, modality: str = VISUAL) -> FeatureSequence:
    """Load a binary feature file into a FeatureSequence.

    Raises FormatError on a bad magic/version or truncated payload and
    DataError on non-finite entries.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError(f"{path}: file too short for header")
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, n, d = struct.unpack("<III", blob[4:16])
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * n * d
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload has {len(blob) - 16} bytes, expected {4 * n * d}"
        )
    flat = np.frombuffer(blob, dtype="<f4", offset=16)
    data = flat.reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite feature entries")
    return FeatureSequence(data=data, modality=modality)


def clean_transcript(sentences: list[Sentence]) -> list[Sentence]:
    """Collapse word tokens repeated more than three times in a row to three.

    Casing and punctuation are preserved; tokens compare by exact string
    equality.  Timing metadata is untouched.
    """
    cleaned = []
    for s in sentences:
        kept: list[str] = []
        for tok in s.text.split():
            if len(kept) >= 3 and kept[-1] == kept[-2] == kept[-3] == tok:
                continue
            kept.append(tok)
        cleaned.append(Sentence(text=" ".join(kept), offset=s.offset, duration=s.duration))
    return cleaned


def align_transcript(n: int, sentences: list[Sentence]) -> AlignedTranscript:
    """Assign each sentence to every one-second window it overlaps.

    Window t covers [t, t+1) seconds; sentence i with span
    [offset, offset+duration) lands in every window with a nonempty
    intersection, so a sentence crossing a window edge appears in both
    windows.  Sentences starting at or beyond n seconds are dropped with
    a warning and reported in ``dropped``.
    """
    if n < 1:
        raise DimensionError(f"frame count must be >= 1, got {n}")
    per_frame: list[list[int]] = [[] for _ in range(n)]
    dropped: list[int] = []
    order = sorted(range(len(sentences)), key=lambda i: (sentences[i].offset, i))
    for i in order:
        s = sentences[i]
        if s.offset >= n:
            log.warning("sentence %d starts at %.3fs beyond video end (%ds); dropped", i, s.offset, n)
            dropped.append(i)
            continue
        first = int(math.floor(s.offset))
        last = int(math.ceil(s.offset + s.duration))  # exclusive
        for t in range(max(first, 0), min(last, n)):
            per_frame[t].append(i)
    return AlignedTranscript(
        per_frame=tuple(tuple(entry) for entry in per_frame),
        dropped=tuple(dropped),
    )


def write_manifest(path, manifest: Manifest) -> None:
    payload = {
        "video_id": manifest.video_id,
        "visual_path": manifest.visual_path,
        "language_path": manifest.language_path,
        "sentences": [
            {"text": s.text, "offset": s.offset, "duration": s.duration}
            for s in manifest.sentences
        ],
        "reference_boundaries": manifest.reference_boundaries,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> tuple[Manifest, FeatureSequence, FeatureSequence]:
    """Load a manifest and its referenced feature files.

    Relative feature paths are resolved against the manifest's directory.
    Raises FormatError if the two modalities disagree on frame count.
    """
    path = Path(path)
    with open(path) as fh:
        payload = json.load(fh)
    try:
        manifest = Manifest(
            video_id=payload["video_id"],
            visual_path=payload["visual_path"],
            language_path=payload["language_path"],
            sentences=[Sentence(**s) for s in payload.get("sentences", [])],
            reference_boundaries=payload.get("reference_boundaries"),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: invalid manifest: {exc}") from exc

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else path.parent / p

    visual = load_feature_file(resolve(manifest.visual_path), modality=VISUAL)
    language = load_feature_file(resolve(manifest.language_path), modality=LANGUAGE)
    if visual.n != language.n:
        raise FormatError(
            f"{path}: visual n={visual.n} and language n={language.n} disagree"
        )
    return manifest, visual, language
