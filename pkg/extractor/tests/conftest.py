import json
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
CONFORMANCE_DIR = REPO_ROOT / "conformance"


@pytest.fixture(scope="session")
def alignment_cases():
    with open(CONFORMANCE_DIR / "alignment_cases.json") as fh:
        return json.load(fh)["cases"]


@pytest.fixture(scope="session")
def test_clip(tmp_path_factory):
    """A 10-second synthetic clip (8 fps, 80 frames) with changing colors."""
    import cv2

    path = tmp_path_factory.mktemp("video") / "clip.avi"
    fps, seconds, size = 8, 10, (64, 64)
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, size
    )
    assert writer.isOpened(), "OpenCV cannot write MJPG/avi in this environment"
    rng = np.random.default_rng(0)
    palette = [rng.integers(0, 255, size=3) for _ in range(seconds)]
    palette[7] = palette[3]  # two seconds share identical frames
    for second in range(seconds):
        for _ in range(fps):
            frame = np.full((size[1], size[0], 3), palette[second], dtype=np.uint8)
            writer.write(frame)
    writer.release()
    return str(path)
