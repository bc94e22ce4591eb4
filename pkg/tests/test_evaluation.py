import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicseg.datamodel import Segmentation
from topicseg.errors import DataError, DimensionError
from topicseg.evaluation import (
    Metrics,
    boundary_prf,
    metrics_csv_text,
    metrics_rows,
    sweep_tolerance,
)


def seg(duration, *bounds):
    return Segmentation(duration=duration, boundaries=tuple(bounds))


def brute_force_matching(pred, ref, omega):
    """Oracle: maximum one-to-one matching by exhaustive enumeration."""
    n, m = len(pred), len(ref)
    best = 0
    for k in range(min(n, m), -1, -1):
        for p_idx in itertools.permutations(range(n), k):
            for r_idx in itertools.combinations(range(m), k):
                if all(abs(pred[p] - ref[r]) <= omega for p, r in zip(p_idx, r_idx)):
                    return k
        if best:
            break
    return 0


class TestBoundaryPrf:
    def test_identical_sets(self):
        s = seg(1000.0, 100.0, 400.0, 700.0)
        m = boundary_prf(s, s, omega_t=60.0)
        assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)

    def test_spec_worked_example(self):
        pred = seg(1000.0, 100.0, 200.0)
        ref = seg(1000.0, 130.0, 290.0)
        m = boundary_prf(pred, ref, omega_t=60.0)
        assert (m.tp, m.fp, m.fn) == (1, 1, 1)
        assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)

    def test_empty_conventions(self):
        empty = seg(100.0)
        one = seg(100.0, 50.0)
        both = boundary_prf(empty, empty, omega_t=10.0)
        assert (both.precision, both.recall, both.f1) == (1.0, 1.0, 1.0)
        m = boundary_prf(one, empty, omega_t=10.0)
        assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
        m = boundary_prf(empty, one, omega_t=10.0)
        assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)

    def test_matching_not_greedy(self):
        # a greedy nearest-first matcher pairs 100<->95 and strands 90;
        # the maximum matching pairs 90<->95 and 100<->105
        pred = seg(500.0, 90.0, 100.0)
        ref = seg(500.0, 95.0, 105.0)
        m = boundary_prf(pred, ref, omega_t=6.0)
        assert m.tp == 2

    def test_duration_mismatch(self):
        with pytest.raises(DimensionError):
            boundary_prf(seg(100.0, 10.0), seg(200.0, 10.0), omega_t=5.0)
        with pytest.raises(DataError):
            boundary_prf(seg(100.0, 10.0), seg(100.0, 10.0), omega_t=0.0)

    @given(
        st.lists(st.integers(min_value=1, max_value=99), max_size=6, unique=True),
        st.lists(st.integers(min_value=1, max_value=99), max_size=6, unique=True),
        st.integers(min_value=1, max_value=40),
    )
    @settings(max_examples=300, deadline=None)
    def test_matches_enumeration_oracle(self, pred_b, ref_b, omega):
        pred = seg(100.0, *sorted(pred_b))
        ref = seg(100.0, *sorted(ref_b))
        m = boundary_prf(pred, ref, omega_t=float(omega))
        assert m.tp == brute_force_matching(sorted(pred_b), sorted(ref_b), omega)

    @given(
        st.lists(st.integers(min_value=1, max_value=99), max_size=6, unique=True),
        st.lists(st.integers(min_value=1, max_value=99), max_size=6, unique=True),
    )
    @settings(max_examples=100, deadline=None)
    def test_swap_symmetry(self, pred_b, ref_b):
        pred = seg(100.0, *sorted(pred_b))
        ref = seg(100.0, *sorted(ref_b))
        a = boundary_prf(pred, ref, omega_t=15.0)
        b = boundary_prf(ref, pred, omega_t=15.0)
        assert a.precision == b.recall and a.recall == b.precision
        assert abs(a.f1 - b.f1) < 1e-12


class TestSweepTolerance:
    def test_tp_monotone_in_omega(self):
        pred = seg(1000.0, 100.0, 340.0, 420.0, 800.0)
        ref = seg(1000.0, 150.0, 400.0, 790.0)
        rows = sweep_tolerance(pred, ref, [30.0, 60.0, 90.0, 120.0])
        tps = [m.tp for _, m in rows]
        assert tps == sorted(tps)

    def test_identical_all_ones(self):
        s = seg(1000.0, 100.0, 200.0)
        rows = sweep_tolerance(s, s, [30.0, 60.0])
        assert all(m.f1 == 1.0 for _, m in rows)

    def test_rows_match_single_calls(self, rng):
        bounds_p = sorted(rng.choice(np.arange(1, 99), size=5, replace=False))
        bounds_r = sorted(rng.choice(np.arange(1, 99), size=5, replace=False))
        pred = seg(100.0, *map(float, bounds_p))
        ref = seg(100.0, *map(float, bounds_r))
        for omega, m in sweep_tolerance(pred, ref, [5.0, 10.0, 25.0]):
            assert m == boundary_prf(pred, ref, omega)

    def test_invalid_omegas(self):
        with pytest.raises(DataError):
            sweep_tolerance(seg(10.0), seg(10.0), [5.0, -1.0])


class TestCsvExport:
    def test_columns_and_aggregates(self):
        per_video = [
            ("a", 60.0, Metrics.from_counts(2, 1, 1)),
            ("b", 60.0, Metrics.from_counts(1, 0, 3)),
        ]
        rows = metrics_rows(per_video)
        ids = [r["video_id"] for r in rows]
        assert ids == ["a", "b", "micro", "macro"]
        micro = rows[2]
        assert (micro["tp"], micro["fp"], micro["fn"]) == (3, 1, 4)
        assert abs(micro["precision"] - 3 / 4) < 1e-12
        macro = rows[3]
        expected_macro_p = ((2 / 3) + 1.0) / 2
        assert abs(macro["precision"] - expected_macro_p) < 1e-12
        text = metrics_csv_text(rows)
        header = text.splitlines()[0]
        assert header == "video_id,omega_t,tp,fp,fn,precision,recall,f1"
