import json

import numpy as np
import pytest

from topicseg.datamodel import load_feature_file, load_manifest
from topicseg.dcca import linear_cca_fit
from topicseg.errors import DataError
from topicseg.synth import SynthConfig, generate, write_bundle

SMALL = dict(T=240, K=3, d_v=12, d_l=6, min_len=40)


class TestGenerate:
    def test_single_segment_no_boundaries(self):
        _, _, _, truth = generate(SynthConfig(T=120, K=1, d_v=4, d_l=3, min_len=40, seed=0))
        assert truth.boundaries == ()

    def test_deterministic_per_seed(self):
        a = generate(SynthConfig(seed=7, **SMALL))
        b = generate(SynthConfig(seed=7, **SMALL))
        np.testing.assert_array_equal(a[0].data, b[0].data)
        np.testing.assert_array_equal(a[1].data, b[1].data)
        assert [s.text for s in a[2]] == [s.text for s in b[2]]
        assert a[3] == b[3]

    def test_boundary_count_and_min_len(self):
        for seed in range(5):
            _, _, _, truth = generate(SynthConfig(seed=seed, **SMALL))
            assert len(truth.boundaries) == SMALL["K"] - 1
            lens = np.diff([0.0, *truth.boundaries, truth.duration])
            assert np.all(lens >= SMALL["min_len"])
            assert lens.sum() == SMALL["T"]

    def test_nearest_centroid_recovery(self):
        # sep = 10*noise, no spikes: the per-frame decision margin is about
        # 7 sigma, so nearest-centroid labeling is essentially exact
        cfg = SynthConfig(T=400, K=4, d_v=16, d_l=8, sep=1.0, noise=0.1,
                          spike_rate=0.0, min_len=60, seed=3)
        V1, _, _, truth = generate(cfg)
        edges = np.r_[0.0, np.array(truth.boundaries), truth.duration].astype(int)
        labels = np.zeros(cfg.T, dtype=int)
        for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            labels[a:b] = k
        centroids = np.array([V1.data[labels == k].mean(axis=0) for k in range(cfg.K)])
        d2 = ((V1.data[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        frame_error = np.mean(d2.argmin(axis=1) != labels)
        assert frame_error <= 0.01

    def test_language_ignores_spikes(self):
        base = dict(T=300, K=3, d_v=10, d_l=5, min_len=60, seed=11)
        clean = generate(SynthConfig(spike_rate=0.0, **base))
        spiked = generate(SynthConfig(spike_rate=0.5, **base))
        np.testing.assert_array_equal(clean[1].data, spiked[1].data)
        assert np.any(clean[0].data != spiked[0].data)

    def test_cca_on_spike_free_data(self):
        cfg = SynthConfig(T=600, K=4, d_v=16, d_l=8, sep=1.0, noise=0.1,
                          spike_rate=0.0, min_len=80, seed=5)
        V1, L1, _, _ = generate(cfg)
        model = linear_cca_fit(V1.data, L1.data, k=2, r=1e-4)
        assert model.rho[0] >= 0.9

    def test_sentences_tag_segments(self):
        V1, L1, sentences, truth = generate(SynthConfig(seed=1, **SMALL))
        assert len(sentences) == SMALL["T"]
        first_boundary = int(truth.boundaries[0])
        assert sentences[0].text.startswith("topic00")
        assert sentences[first_boundary].text.startswith("topic01")

    def test_infeasible_lengths(self):
        with pytest.raises(DataError):
            SynthConfig(T=100, K=3, min_len=40)


class TestBundle:
    def test_bundle_roundtrip(self, tmp_path):
        cfg = SynthConfig(seed=2, **SMALL)
        paths = write_bundle(tmp_path, cfg, video_id="demo")
        manifest, vis, lang = load_manifest(paths["manifest"])
        assert vis.n == lang.n == SMALL["T"]
        assert vis.d == SMALL["d_v"] and lang.d == SMALL["d_l"]
        V1, L1, _, truth = generate(cfg)
        np.testing.assert_allclose(vis.data, V1.data.astype(np.float32), atol=1e-6)
        assert manifest.reference_boundaries == list(truth.boundaries)
        with open(paths["truth"]) as fh:
            truth_payload = json.load(fh)
        assert truth_payload["boundaries_s"] == list(truth.boundaries)

    def test_single_segment_truth_empty(self, tmp_path):
        cfg = SynthConfig(T=120, K=1, d_v=4, d_l=3, min_len=40, seed=0)
        paths = write_bundle(tmp_path, cfg)
        with open(paths["truth"]) as fh:
            assert json.load(fh)["boundaries_s"] == []
