"""Command-line surface: synth, segment, eval, hca, defaults.

Exit codes: 0 success, 1 config/schema, 2 I/O, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baseline_hca import hca_segment
from .datamodel import Segmentation, load_manifest
from .errors import ConfigError, FormatError, TopicsegError
from .evaluation import boundary_prf, metrics_csv_text, metrics_rows
from .pipeline import (
    RunConfig,
    channels_for,
    segment_video,
    segmentation_json,
    train_transforms,
)
from .postprocess import merge_short_segments
from .synth import write_bundle


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for name in ("seed", "window", "d_obs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides or getattr(args, "sweeps", None) is not None or \
            getattr(args, "l_s", None) is not None:
        payload = cfg.to_dict()
        payload.update(overrides)
        if getattr(args, "sweeps", None) is not None:
            payload["hsmm"]["sweeps"] = args.sweeps
        if getattr(args, "l_s", None) is not None:
            payload["merge"]["l_s"] = args.l_s
        cfg = RunConfig.from_dict(payload)
    return cfg


def _write_text(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    paths = write_bundle(args.out, cfg.synth, video_id=args.video_id)
    print(json.dumps(paths, indent=2, sort_keys=True))
    return 0


def _segment_one(manifest_path: str, cfg_payload: dict, channels: tuple,
                 seed: int | None, out_dir: str, transforms=None) -> str:
    cfg = RunConfig.from_dict(cfg_payload)
    manifest, V1, L1 = load_manifest(manifest_path)
    result = segment_video(V1, L1, manifest.sentences, cfg, channels=channels,
                           transforms=transforms, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seg_path = out / f"{manifest.video_id}.json"
    _write_text(seg_path, segmentation_json(result["segmentation"], manifest.video_id))
    diagnostics = {
        "format_version": 1,
        "video_id": manifest.video_id,
        "channels": list(result["channels"]),
        "pca_energy": result["pca_energy"],
        "hsmm": result["diagnostics"].to_dict(),
        "timings_s": result["timings"],
        "raw_boundaries_s": list(result["raw_segmentation"].boundaries),
    }
    if result["aligned"] is not None:
        diagnostics["dropped_sentences"] = list(result["aligned"].dropped)
        diagnostics["frames_with_speech"] = int(
            sum(1 for entry in result["aligned"].per_frame if entry)
        )
    _write_text(out / f"{manifest.video_id}_diagnostics.json",
                json.dumps(diagnostics, indent=2, sort_keys=True) + "\n")
    return str(seg_path)


def cmd_segment(args) -> int:
    cfg = _load_config(args)
    channels = channels_for(args.modality, tuple(args.channels.split(",")) if args.channels else None)
    transforms = None
    if args.dcca_scope == "corpus":
        blocks = [load_manifest(m)[1:] for m in args.manifests]
        V1 = np.vstack([v.data for v, _ in blocks])
        L1 = np.vstack([l.data for _, l in blocks])
        transforms = train_transforms(V1, L1, cfg, seed=cfg.seed)[:3]
    payload = cfg.to_dict()
    if args.jobs > 1 and len(args.manifests) > 1 and transforms is None:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_segment_one, m, payload, channels, args.seed, args.out)
                for m in args.manifests
            ]
            for fut in futures:
                print(fut.result())
    else:
        for m in args.manifests:
            print(_segment_one(m, payload, channels, args.seed, args.out,
                               transforms=transforms))
    if args.signals_out:
        # recompute on the first manifest only; a debugging aid, not a batch path
        manifest, V1, L1 = load_manifest(args.manifests[0])
        result = segment_video(V1, L1, manifest.sentences, cfg, channels=channels,
                               transforms=transforms, seed=args.seed)
        _write_text(args.signals_out, json.dumps(
            {"format_version": 1, "video_id": manifest.video_id,
             "signals": result["signals"].to_records()},
            indent=2, sort_keys=True) + "\n")
    return 0


def _load_segmentation(path) -> tuple[Segmentation, str]:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return Segmentation.from_dict(payload), payload.get("video_id", Path(path).stem)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a segmentation file: {exc}") from exc


def cmd_eval(args) -> int:
    if len(args.files) % 2 != 0:
        raise ConfigError("eval expects PRED TRUTH file pairs")
    omegas = [float(w) for w in args.omega.split(",")]
    per_video = []
    for pred_path, truth_path in zip(args.files[::2], args.files[1::2]):
        pred, vid = _load_segmentation(pred_path)
        truth, _ = _load_segmentation(truth_path)
        for omega in omegas:
            per_video.append((vid, omega, boundary_prf(pred, truth, omega)))
    rows = metrics_rows(per_video)
    text = metrics_csv_text(rows)
    if args.csv:
        _write_text(args.csv, text)
    else:
        sys.stdout.write(text)
    if args.series_out:
        _write_text(args.series_out, json.dumps(
            {"format_version": 1, "series": rows}, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_hca(args) -> int:
    cfg = _load_config(args)
    manifest, V1, L1 = load_manifest(args.manifest)
    seg = hca_segment(V1, cfg.hca)
    seg = merge_short_segments(seg, V1.data, L1.data, cfg.merge)
    _write_text(args.out, segmentation_json(seg, manifest.video_id))
    print(args.out)
    return 0


def cmd_defaults(args) -> int:
    print(json.dumps(RunConfig().to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topicseg",
        description="Unsupervised multimodal topic segmentation for long videos",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None)

    p_synth = sub.add_parser("synth", help="generate a synthetic video bundle")
    add_config(p_synth)
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--video-id", default="synth")
    p_synth.set_defaults(func=cmd_synth)

    p_seg = sub.add_parser("segment", help="segment one or more videos")
    add_config(p_seg)
    p_seg.add_argument("manifests", nargs="+", help="manifest JSON paths")
    p_seg.add_argument("--out", required=True, help="output directory")
    p_seg.add_argument("--modality", choices=("visual", "language", "multimodal"),
                       default=None)
    p_seg.add_argument("--channels", default=None,
                       help="comma-separated channel subset (overrides --modality)")
    p_seg.add_argument("--jobs", type=int, default=1,
                       help="parallel videos (per-video runs stay sequential)")
    p_seg.add_argument("--sweeps", type=int, default=None)
    p_seg.add_argument("--window", type=int, default=None)
    p_seg.add_argument("--d-obs", dest="d_obs", type=int, default=None)
    p_seg.add_argument("--l-s", dest="l_s", type=float, default=None)
    p_seg.add_argument("--dcca-scope", choices=("video", "corpus"), default="video")
    p_seg.add_argument("--signals-out", default=None,
                       help="dump the per-timestep signal records as JSON")
    p_seg.set_defaults(func=cmd_segment)

    p_eval = sub.add_parser("eval", help="score predictions against references")
    p_eval.add_argument("files", nargs="+", help="PRED TRUTH [PRED TRUTH ...]")
    p_eval.add_argument("--omega", default="60",
                        help="comma-separated tolerances in seconds")
    p_eval.add_argument("--csv", default=None, help="write CSV here (default stdout)")
    p_eval.add_argument("--series-out", default=None,
                        help="write the rows as JSON series for plotting")
    p_eval.set_defaults(func=cmd_eval)

    p_hca = sub.add_parser("hca", help="clustering baseline segmentation")
    add_config(p_hca)
    p_hca.add_argument("manifest")
    p_hca.add_argument("--out", required=True, help="output JSON file")
    p_hca.set_defaults(func=cmd_hca)

    p_def = sub.add_parser("defaults", help="print the default configuration")
    p_def.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except TopicsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
