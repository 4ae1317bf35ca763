import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from temporal_pyramid.sampler import SamplePlan, segment_bounds, segment_indices


def test_one_frame_per_segment():
    assert segment_indices(SamplePlan(25, 25, "center")) == list(range(1, 26))


def test_center_of_equal_segments():
    # Segment k spans (k-1)*25+1 .. k*25; the center is floor((start+end)/2).
    assert segment_indices(SamplePlan(100, 4, "center")) == [13, 38, 63, 88]


def test_short_video_duplicates_frames():
    assert segment_indices(SamplePlan(2, 4, "center")) == [1, 1, 2, 2]
    assert segment_indices(SamplePlan(2, 4, "random", seed=9)) == [1, 1, 2, 2]


def test_invalid_plan():
    with pytest.raises(ValueError):
        SamplePlan(0, 3)
    with pytest.raises(ValueError):
        SamplePlan(3, 3, "dense")


def test_random_mode_is_seeded():
    a = segment_indices(SamplePlan(300, 25, "random", seed=5))
    b = segment_indices(SamplePlan(300, 25, "random", seed=5))
    c = segment_indices(SamplePlan(300, 25, "random", seed=6))
    assert a == b
    assert a != c


@given(st.integers(1, 400), st.integers(1, 64))
def test_segments_partition_frames(t, T):
    if t < T:
        return
    bounds = segment_bounds(t, T)
    assert bounds[0][0] == 1 and bounds[-1][1] == t
    assert all(b[0] == a[1] + 1 for a, b in zip(bounds, bounds[1:]))
    lengths = [e - s + 1 for s, e in bounds]
    assert max(lengths) - min(lengths) <= 1


@given(st.integers(1, 400), st.integers(1, 64), st.sampled_from(["center", "random"]), st.integers(0, 2 ** 32))
def test_indices_in_segment_and_ordered(t, T, mode, seed):
    idx = segment_indices(SamplePlan(t, T, mode, seed))
    assert len(idx) == T
    assert all(1 <= i <= t for i in idx)
    assert idx == sorted(idx)
    if t >= T:
        for i, (s, e) in zip(idx, segment_bounds(t, T)):
            assert s <= i <= e


def test_external_generator_used():
    rng = np.random.default_rng(0)
    a = segment_indices(SamplePlan(100, 10, "random"), rng)
    b = segment_indices(SamplePlan(100, 10, "random"), rng)
    assert a != b
