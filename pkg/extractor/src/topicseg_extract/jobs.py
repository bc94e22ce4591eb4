"""Extraction jobs: one video plus transcript in, engine-format files out."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .featurefile import write_features
from .language import extract_language
from .transcript import load_transcript
from .visual import extract_visual


@dataclass
class ExtractionJob:
    video_path: str
    transcript_path: str | None
    out_dir: str
    video_id: str = ""
    visual_model: str = "resnet50-imagenet"
    sentence_model: str = "all-MiniLM-L6-v2"
    fps: float = 1.0

    def __post_init__(self):
        if not self.video_id:
            self.video_id = Path(self.video_path).stem


def run_job(job: ExtractionJob) -> dict:
    """Extract both modalities and write the manifest the engine consumes.

    Returns the written paths.  The two feature files always agree on n.
    """
    out = Path(job.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    visual = extract_visual(job.video_path, model_id=job.visual_model)
    n = visual.shape[0]
    sentences = load_transcript(job.transcript_path) if job.transcript_path else []
    language, per_frame, dropped = extract_language(
        n, sentences, model_id=job.sentence_model
    )
    paths = {
        "visual": out / f"{job.video_id}_visual.lsg1",
        "language": out / f"{job.video_id}_language.lsg1",
        "manifest": out / f"{job.video_id}_manifest.json",
    }
    write_features(paths["visual"], visual)
    write_features(paths["language"], language)
    manifest = {
        "video_id": job.video_id,
        "visual_path": paths["visual"].name,
        "language_path": paths["language"].name,
        "sentences": [
            {"text": s.text, "offset": s.offset, "duration": s.duration}
            for s in sentences
        ],
        "reference_boundaries": None,
    }
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = {
        "n": n,
        "dropped_sentences": dropped,
        "frames_with_speech": sum(1 for entry in per_frame if entry),
    }
    return {**{k: str(v) for k, v in paths.items()}, "report": report}
