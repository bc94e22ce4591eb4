"""Command line: extract features from a video + transcript pair."""

from __future__ import annotations

import argparse
import json
import sys

from .jobs import ExtractionJob, run_job
from .language import ModelUnavailableError as LanguageModelUnavailable
from .visual import ModelUnavailableError as VisualModelUnavailable


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topicseg-extract",
        description="Extract per-second visual/language features for topicseg",
    )
    parser.add_argument("video", help="video file (any OpenCV-decodable format)")
    parser.add_argument("--transcript", default=None,
                        help="JSON array of {text, offset, duration}")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--video-id", default="")
    parser.add_argument("--visual-model", default="resnet50-imagenet")
    parser.add_argument("--sentence-model", default="all-MiniLM-L6-v2")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        video_path=args.video,
        transcript_path=args.transcript,
        out_dir=args.out,
        video_id=args.video_id,
        visual_model=args.visual_model,
        sentence_model=args.sentence_model,
    )
    try:
        paths = run_job(job)
    except (VisualModelUnavailable, LanguageModelUnavailable) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    except (IOError, ValueError) as exc:
        print(f"job error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(paths, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
