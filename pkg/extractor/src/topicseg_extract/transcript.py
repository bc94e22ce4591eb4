"""Transcript parsing, cleaning and frame alignment.

The cleaning and alignment semantics must match the engine exactly
(shared conformance fixtures): word tokens repeated more than three
times in a row collapse to three, and a sentence lands in every window
[t, t+1) its [offset, offset+duration) span intersects.  Sentences
starting at or beyond the end of the video are dropped.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sentence:
    text: str
    offset: float
    duration: float

    def __post_init__(self):
        if not (self.offset >= 0 and math.isfinite(self.offset)):
            raise ValueError(f"offset must be >= 0, got {self.offset}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"duration must be > 0, got {self.duration}")


def load_transcript(path) -> list[Sentence]:
    """Read a transcript JSON: a list of {text, offset, duration} records."""
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, list):
        raise ValueError(f"{path}: transcript must be a JSON array")
    return [Sentence(text=s["text"], offset=s["offset"], duration=s["duration"])
            for s in payload]


def clean_sentences(sentences: list[Sentence]) -> list[Sentence]:
    """Collapse tokens repeated more than three times in a row to three."""
    cleaned = []
    for s in sentences:
        kept: list[str] = []
        for tok in s.text.split():
            if len(kept) >= 3 and kept[-1] == kept[-2] == kept[-3] == tok:
                continue
            kept.append(tok)
        cleaned.append(Sentence(" ".join(kept), s.offset, s.duration))
    return cleaned


def align_sentences(n: int, sentences: list[Sentence]):
    """Per-frame sentence indices under the window-duplication rule.

    Returns (per_frame, dropped) where per_frame[t] lists indices in
    offset order and dropped lists sentences starting past the video end.
    """
    if n < 1:
        raise ValueError(f"frame count must be >= 1, got {n}")
    per_frame: list[list[int]] = [[] for _ in range(n)]
    dropped: list[int] = []
    order = sorted(range(len(sentences)), key=lambda i: (sentences[i].offset, i))
    for i in order:
        s = sentences[i]
        if s.offset >= n:
            log.warning("sentence %d starts at %.3fs beyond video end (%ds); dropped",
                        i, s.offset, n)
            dropped.append(i)
            continue
        first = int(math.floor(s.offset))
        last = int(math.ceil(s.offset + s.duration))
        for t in range(max(first, 0), min(last, n)):
            per_frame[t].append(i)
    return [tuple(entry) for entry in per_frame], dropped
