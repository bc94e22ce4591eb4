import json

import numpy as np
import pytest

from topicseg_extract.featurefile import read_features, write_features
from topicseg_extract.jobs import ExtractionJob, run_job
from topicseg_extract.language import (
    ModelUnavailableError,
    embed_sentences,
    extract_language,
    hash_embed,
)
from topicseg_extract.transcript import Sentence
from topicseg_extract.visual import extract_visual, load_backbone

UNTRAINED = "resnet50-untrained:0"


def pretrained_available() -> bool:
    try:
        load_backbone("resnet50-imagenet")
        return True
    except Exception:
        return False


class TestVisual:
    def test_ten_second_clip_shape(self, test_clip):
        feats = extract_visual(test_clip, model_id=UNTRAINED)
        assert feats.shape == (10, 2048)
        assert np.all(np.isfinite(feats))

    def test_identical_frames_identical_rows(self, test_clip):
        # seconds 3 and 7 of the fixture hold identical frames; eval-mode
        # inference maps equal inputs to equal embeddings, and re-running
        # the extraction is stable
        a = extract_visual(test_clip, model_id=UNTRAINED)
        b = extract_visual(test_clip, model_id=UNTRAINED)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a[3], a[7])
        assert np.any(a[3] != a[4])

    def test_decode_failure(self, tmp_path):
        bogus = tmp_path / "not_a_video.avi"
        bogus.write_bytes(b"this is not a video")
        with pytest.raises(IOError):
            extract_visual(bogus, model_id=UNTRAINED)

    @pytest.mark.skipif(not pretrained_available(),
                        reason="pretrained weights not downloadable here")
    def test_reference_embedding(self, test_clip):
        # reference-inference oracle: only meaningful with published weights
        feats = extract_visual(test_clip, model_id="resnet50-imagenet")
        assert feats.shape[1] == 2048


class TestLanguage:
    def test_empty_transcript_all_zero(self):
        feats, per_frame, dropped = extract_language(5, [], model_id="hash:384")
        assert feats.shape == (5, 384)
        np.testing.assert_array_equal(feats, 0.0)

    def test_shared_embedding_across_windows(self):
        sents = [Sentence("alpha beta", 3.5, 2.0)]
        feats, per_frame, _ = extract_language(10, sents, model_id="hash:384")
        np.testing.assert_array_equal(feats[3], feats[4])
        np.testing.assert_array_equal(feats[4], feats[5])
        assert np.linalg.norm(feats[3]) > 0
        np.testing.assert_array_equal(feats[0], 0.0)

    def test_mean_of_overlapping_sentences(self):
        sents = [Sentence("one two", 0.1, 0.3), Sentence("three four", 0.5, 0.4)]
        feats, _, _ = extract_language(1, sents, model_id="hash:64")
        separate = embed_sentences(["one two", "three four"], "hash:64")
        np.testing.assert_allclose(feats[0], separate.mean(axis=0), atol=1e-12)

    def test_hash_embedder_deterministic(self):
        a = hash_embed(["hello world"], dim=32)
        b = hash_embed(["hello world"], dim=32)
        np.testing.assert_array_equal(a, b)
        assert abs(np.linalg.norm(a[0]) - 1.0) < 1e-9

    def test_minilm_unavailable_raises_cleanly(self):
        if pretrained_available():
            pytest.skip("downloads work here; unavailability path not testable")
        with pytest.raises(ModelUnavailableError):
            embed_sentences(["hi"], "all-MiniLM-L6-v2")


class TestJob:
    def test_end_to_end_conformance(self, tmp_path, test_clip):
        # emitted files must round-trip through the engine's loader with
        # matching n across modalities
        transcript = tmp_path / "transcript.json"
        transcript.write_text(json.dumps([
            {"text": "topic one intro", "offset": 0.2, "duration": 2.0},
            {"text": "so so so so details", "offset": 3.5, "duration": 2.0},
            {"text": "too late to matter", "offset": 99.0, "duration": 1.0},
        ]))
        job = ExtractionJob(
            video_path=test_clip,
            transcript_path=str(transcript),
            out_dir=str(tmp_path / "out"),
            video_id="clip",
            visual_model=UNTRAINED,
            sentence_model="hash:384",
        )
        paths = run_job(job)
        assert paths["report"]["n"] == 10
        assert paths["report"]["dropped_sentences"] == [2]

        from topicseg.datamodel import load_feature_file, load_manifest

        manifest, vis, lang = load_manifest(paths["manifest"])
        assert manifest.video_id == "clip"
        assert vis.n == lang.n == 10
        assert vis.d == 2048 and lang.d == 384
        direct = load_feature_file(paths["visual"])
        np.testing.assert_array_equal(direct.data, vis.data)

    def test_feature_file_self_roundtrip(self, tmp_path):
        x = np.random.default_rng(0).normal(size=(4, 3)).astype(np.float32)
        path = tmp_path / "t.lsg1"
        write_features(path, x)
        np.testing.assert_array_equal(read_features(path), x.astype(np.float64))

    def test_engine_can_segment_extracted_features(self, tmp_path, test_clip):
        # a tiny end-to-end sanity run through the engine's manifest loader
        transcript = tmp_path / "t.json"
        transcript.write_text(json.dumps(
            [{"text": f"word{i}", "offset": float(i), "duration": 1.0}
             for i in range(10)]
        ))
        job = ExtractionJob(
            video_path=test_clip, transcript_path=str(transcript),
            out_dir=str(tmp_path / "out2"), video_id="tiny",
            visual_model=UNTRAINED, sentence_model="hash:16",
        )
        paths = run_job(job)
        from topicseg.datamodel import load_manifest

        _, vis, lang = load_manifest(paths["manifest"])
        assert vis.n == lang.n
