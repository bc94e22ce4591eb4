import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicseg.datamodel import Segmentation
from topicseg.errors import DataError
from topicseg.postprocess import MergeConfig, merge_short_segments


def features_for(duration, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(int(duration), d)), rng.normal(size=(int(duration), 2))


class TestMergeShortSegments:
    def test_noop_when_all_long(self):
        seg = Segmentation(duration=300.0, boundaries=(100.0, 200.0), labels=(0, 1, 2))
        V2, L2 = features_for(300)
        assert merge_short_segments(seg, V2, L2, MergeConfig(60.0)) == seg

    def test_spec_worked_example(self):
        # middle segment matches the left segment's features exactly and is
        # orthogonal to the right's: boundary at 100 goes, 130 survives
        duration = 300
        V2 = np.zeros((duration, 3))
        V2[:130] = [1.0, 0.0, 0.0]
        V2[130:] = [0.0, 1.0, 0.0]
        L2 = np.zeros((duration, 2))
        L2[:130] = [1.0, 0.0]
        L2[130:] = [0.0, 1.0]
        seg = Segmentation(duration=float(duration), boundaries=(100.0, 130.0),
                           labels=(0, 1, 2))
        merged = merge_short_segments(seg, V2, L2, MergeConfig(60.0))
        assert merged.boundaries == (130.0,)
        assert merged.labels == (0, 2)

    def test_single_short_segment_unchanged(self):
        seg = Segmentation(duration=30.0, boundaries=())
        V2, L2 = features_for(30)
        merged = merge_short_segments(seg, V2, L2, MergeConfig(60.0))
        assert merged == seg

    def test_equal_label_coalescing(self):
        # a 1-second blip splitting one topic leaves no interior boundary
        duration = 240
        V2 = np.ones((duration, 3))
        V2[120] = [-5.0, 2.0, 1.0]
        L2 = np.ones((duration, 2))
        seg = Segmentation(duration=float(duration), boundaries=(120.0, 121.0),
                           labels=(4, 9, 4))
        merged = merge_short_segments(seg, V2, L2, MergeConfig(60.0))
        assert merged.boundaries == ()
        assert merged.labels == (4,)

    def test_first_and_last_use_only_neighbor(self):
        duration = 200
        V2, L2 = features_for(duration)
        seg = Segmentation(duration=float(duration), boundaries=(30.0, 170.0),
                           labels=(0, 1, 2))
        merged = merge_short_segments(seg, V2, L2, MergeConfig(60.0))
        assert merged.boundaries == ()  # 30s head and 30s tail both absorbed

    def test_config_validation(self):
        with pytest.raises(DataError):
            MergeConfig(0.0)

    @given(st.integers(min_value=0, max_value=2_000))
    @settings(max_examples=60, deadline=None)
    def test_invariants_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        duration = int(rng.integers(20, 400))
        n_bounds = int(rng.integers(0, min(8, duration - 1)))
        bounds = np.sort(rng.choice(np.arange(1, duration), size=n_bounds, replace=False))
        labels = [int(rng.integers(0, 5))]
        for _ in range(n_bounds):
            nxt = int(rng.integers(0, 5))
            labels.append(nxt if nxt != labels[-1] else (nxt + 1) % 5)
        seg = Segmentation(duration=float(duration),
                           boundaries=tuple(float(b) for b in bounds),
                           labels=tuple(labels))
        V2, L2 = features_for(duration, seed=seed)
        cfg = MergeConfig(float(rng.integers(5, 80)))
        merged = merge_short_segments(seg, V2, L2, cfg)
        # boundaries only removed, never added or moved
        assert set(merged.boundaries) <= set(seg.boundaries)
        # every output segment long enough, or a single segment remains
        lens = np.diff([0.0, *merged.boundaries, merged.duration])
        assert merged.num_segments == 1 or np.all(lens >= cfg.l_s)
        # idempotent
        again = merge_short_segments(merged, V2, L2, cfg)
        assert again == merged

    def test_deterministic_tie_goes_left(self):
        duration = 210
        V2 = np.ones((duration, 3))
        L2 = np.ones((duration, 2))
        seg = Segmentation(duration=float(duration), boundaries=(90.0, 120.0),
                           labels=(0, 1, 2))
        merged = merge_short_segments(seg, V2, L2, MergeConfig(60.0))
        # both neighbors identical: merge into the earlier one
        assert merged.boundaries == (120.0,)
        assert merged.labels == (0, 2)
