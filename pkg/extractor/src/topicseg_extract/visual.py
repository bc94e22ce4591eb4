"""Per-second visual embeddings from a video file.

Frames are sampled once per second (n = floor(duration)) and pushed
through a ResNet-50 backbone's penultimate layer, giving 2048-d rows.
Model ids:

    resnet50-imagenet        pretrained weights (needs download access)
    resnet50-untrained:SEED  seeded random weights, for offline testing

Inference runs in eval mode on CPU; identical frames embed identically.
"""

from __future__ import annotations

import numpy as np

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class ModelUnavailableError(RuntimeError):
    """Pretrained weights could not be loaded in this environment."""


def load_backbone(model_id: str):
    """Build the embedding backbone for a model id."""
    import torch
    from torchvision.models import resnet50

    if model_id == "resnet50-imagenet":
        try:
            from torchvision.models import ResNet50_Weights

            net = resnet50(weights=ResNet50_Weights.IMAGENET1K_V1)
        except Exception as exc:  # download failure, offline sandbox, ...
            raise ModelUnavailableError(
                f"pretrained weights unavailable: {exc}"
            ) from exc
    elif model_id.startswith("resnet50-untrained"):
        _, _, seed = model_id.partition(":")
        torch.manual_seed(int(seed) if seed else 0)
        net = resnet50(weights=None)
    else:
        raise ValueError(f"unknown visual model id {model_id!r}")
    net.fc = torch.nn.Identity()
    net.eval()
    return net


def _preprocess(frame_bgr: np.ndarray) -> np.ndarray:
    """BGR uint8 -> normalized float32 CHW at 224x224 (resize + center crop)."""
    import cv2

    rgb = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2RGB)
    h, w = rgb.shape[:2]
    scale = 256.0 / min(h, w)
    resized = cv2.resize(rgb, (int(round(w * scale)), int(round(h * scale))),
                         interpolation=cv2.INTER_LINEAR)
    rh, rw = resized.shape[:2]
    top = (rh - 224) // 2
    left = (rw - 224) // 2
    crop = resized[top:top + 224, left:left + 224].astype(np.float32) / 255.0
    crop = (crop - IMAGENET_MEAN) / IMAGENET_STD
    return crop.transpose(2, 0, 1)


def sample_frames(video_path, fps_out: float = 1.0):
    """Yield one decoded frame per output second; n = floor(duration)."""
    import cv2

    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise IOError(f"cannot open video {video_path}")
    try:
        native_fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
        frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if native_fps <= 0 or frame_count <= 0:
            raise IOError(f"{video_path}: cannot determine duration")
        duration = frame_count / native_fps
        n = int(duration * fps_out)
        if n < 1:
            raise IOError(f"{video_path}: shorter than one output frame")
        for t in range(n):
            idx = min(int(round(t / fps_out * native_fps)), frame_count - 1)
            cap.set(cv2.CAP_PROP_POS_FRAMES, idx)
            ok, frame = cap.read()
            if not ok:
                raise IOError(f"{video_path}: decode failure at t={t}s (frame {idx})")
            yield t, frame
    finally:
        cap.release()


def extract_visual(video_path, model_id: str = "resnet50-imagenet",
                   batch_size: int = 16) -> np.ndarray:
    """(n, 2048) embeddings, one row per second of video."""
    import torch

    net = load_backbone(model_id)
    rows = []
    batch = []
    with torch.no_grad():
        for _, frame in sample_frames(video_path):
            batch.append(_preprocess(frame))
            if len(batch) == batch_size:
                rows.append(net(torch.from_numpy(np.stack(batch))).numpy())
                batch = []
        if batch:
            rows.append(net(torch.from_numpy(np.stack(batch))).numpy())
    return np.vstack(rows).astype(np.float64)
