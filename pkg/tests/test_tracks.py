import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdm.tracks import (
    BoundingBox,
    FrameAnnotation,
    ParseError,
    PhaseSegmentation,
    ValidationError,
    VideoSample,
    dumps_dataset,
    interpolate_missing,
    normalize_depth,
    parse_dataset,
    validate,
)

from .strategies import samples

MINIMAL = {"video_id": "v1", "frames": [{"index": 0, "object1": {"x": 0.1, "y": 0.2, "w": 0.3, "h": 0.4}}]}


def line(rec):
    return (json.dumps(rec) + "\n").encode()


def test_parse_minimal_record():
    (s,) = parse_dataset(line(MINIMAL))
    assert s.video_id == "v1"
    assert s.class_id is None
    assert s.frames[0].object1 == BoundingBox(0.1, 0.2, 0.3, 0.4)
    assert s.frames[0].hand is None


def test_parse_empty_source():
    assert parse_dataset(b"") == []
    assert parse_dataset(b"\n  \n") == []


def test_box_out_of_bounds_names_field():
    rec = {"video_id": "bad", "frames": [{"index": 0, "object1": {"x": 0.9, "y": 0.0, "w": 0.3, "h": 0.1}}]}
    with pytest.raises(ValidationError, match=r"object1\.x\+w") as info:
        parse_dataset(line(rec))
    assert info.value.video_id == "bad"


def test_malformed_line_reports_line_number():
    src = line(MINIMAL) + b"\n" + b'{"video_id": "v2", "frames": [\n'
    with pytest.raises(ParseError, match="line 3"):
        parse_dataset(src)


@pytest.mark.parametrize(
    "frames, field",
    [
        ([], "frames"),
        ([{"index": 1}], "frames[0].index"),
        ([{"index": 0}, {"index": 0}], "frames[1].index"),
        ([{"index": 0, "container": {"object1": 1.5}}], "container.object1"),
        ([{"index": 0, "hand": {"x": 0.1, "y": 0.1, "w": 0.0, "h": 0.1}}], "hand.w/h"),
        ([{"index": 0, "object2": {"x": 0.1, "y": 0.1, "w": 0.1}}], "object2"),
    ],
)
def test_invariant_violations(frames, field):
    with pytest.raises(ValidationError) as info:
        parse_dataset(line({"video_id": "v", "frames": frames}))
    assert field in info.value.field


def test_phases_must_be_legal():
    frames = [{"index": t} for t in range(4)]
    ok = {"a": [0, 1], "b": [1, 1], "c": [1, 3], "d": [3, 3], "e": [3, 4]}
    (s,) = parse_dataset(line({"video_id": "v", "frames": frames, "phases": ok}))
    assert s.phase_truth.ranges == ((0, 1), (1, 1), (1, 3), (3, 3), (3, 4))
    bad = dict(ok, c=[1, 1], d=[1, 3])
    with pytest.raises(ValidationError, match="phase c"):
        parse_dataset(line({"video_id": "v", "frames": frames, "phases": bad}))


def test_depth_and_container_fields():
    rec = {
        "video_id": "v",
        "class_id": 112,
        "frames": [{"index": 0, "depth": {"hand": 2.5}, "container": {"object2": 0.25}}],
    }
    (s,) = parse_dataset(line(rec))
    f = s.frames[0]
    assert (f.depth_hand, f.depth_object1, f.container_object2) == (2.5, None, 0.25)
    assert s.class_id == 112


@settings(max_examples=150, deadline=None)
@given(st.lists(samples(), max_size=4))
def test_round_trip(batch):
    for s in batch:
        validate(s)
    text = dumps_dataset(batch)
    assert parse_dataset(text.encode("utf-8")) == batch


# -- interpolation -------------------------------------------------------------


def _track(boxes, entity="object1", depths=None):
    frames = []
    for t, b in enumerate(boxes):
        kw = {"index": t, entity: b}
        if depths is not None and depths[t] is not None:
            kw["depth_" + entity] = depths[t]
        frames.append(FrameAnnotation(**kw))
    return VideoSample("v", tuple(frames))


def test_interpolate_midpoint():
    s = _track([BoundingBox(0.1, 0.1, 0.2, 0.2), None, BoundingBox(0.3, 0.5, 0.4, 0.2)], depths=[1.0, None, 2.0])
    out = interpolate_missing(s, max_gap=1)
    b = out.frames[1].object1
    assert b.x == pytest.approx(0.2)
    assert b.y == pytest.approx(0.3)
    assert b.w == pytest.approx(0.3)
    assert b.h == pytest.approx(0.2)
    assert out.frames[1].depth_object1 == pytest.approx(1.5)


def test_interpolate_skips_depth_without_both_endpoints():
    s = _track([BoundingBox(0.1, 0.1, 0.2, 0.2), None, BoundingBox(0.3, 0.1, 0.2, 0.2)], depths=[1.0, None, None])
    out = interpolate_missing(s, max_gap=1)
    assert out.frames[1].object1 is not None
    assert out.frames[1].depth_object1 is None


def test_long_gap_left_alone():
    box = BoundingBox(0.1, 0.1, 0.2, 0.2)
    s = _track([box, None, None, None, box])
    assert interpolate_missing(s, max_gap=1) == s
    assert interpolate_missing(s, max_gap=3).frames[2].object1 == box


def test_leading_and_trailing_absence_left_alone():
    box = BoundingBox(0.1, 0.1, 0.2, 0.2)
    s = _track([None, None, box, box, None])
    assert interpolate_missing(s, max_gap=5) == s


def test_negative_gap_rejected():
    with pytest.raises(ValueError):
        interpolate_missing(_track([BoundingBox(0.1, 0.1, 0.1, 0.1)]), max_gap=-1)


@settings(max_examples=150, deadline=None)
@given(samples(max_frames=14), st.integers(0, 5))
def test_interpolation_idempotent_and_keeps_present_frames(s, gap):
    once = interpolate_missing(s, gap)
    assert interpolate_missing(once, gap) == once
    for before, after in zip(s.frames, once.frames):
        for entity in ("object1", "object2", "hand"):
            if before.box(entity) is not None:
                assert after.box(entity) == before.box(entity)
                assert after.depth(entity) == before.depth(entity)
        assert after.container_object1 == before.container_object1
    validate(once)


# -- depth normalization ---------------------------------------------------------


def _depth_sample(values):
    frames = [FrameAnnotation(index=t, depth_object1=v) for t, v in enumerate(values)]
    return VideoSample("d", tuple(frames))


def test_normalize_depth_example():
    out = normalize_depth(_depth_sample([1.0, 2.0, 3.0]))
    assert [f.depth_object1 for f in out.frames] == [-0.5, 0.0, 0.5]


def test_normalize_depth_degenerate():
    out = normalize_depth(_depth_sample([5.0, 5.0]))
    assert [f.depth_object1 for f in out.frames] == [0.0, 0.0]
    single = normalize_depth(_depth_sample([7.0]))
    assert single.frames[0].depth_object1 == 0.0


def test_normalize_depth_without_depth_is_identity():
    s = _track([BoundingBox(0.1, 0.1, 0.1, 0.1)])
    assert normalize_depth(s) is s


def _all_depths(s):
    return [f.depth(e) for f in s.frames for e in ("object1", "object2", "hand")]


@settings(max_examples=150, deadline=None)
@given(samples(max_frames=10))
def test_normalize_depth_bounds_and_order(s):
    before = _all_depths(s)
    after = _all_depths(normalize_depth(s))
    assert [v is None for v in before] == [v is None for v in after]
    present = [(b, a) for b, a in zip(before, after) if b is not None]
    if len({b for b, _ in present}) >= 2:
        assert all(-1.0 <= a <= 1.0 for _, a in present)
        for b1, a1 in present:
            for b2, a2 in present:
                assert (b1 > b2) == (a1 > a2)
    else:
        assert all(a == 0.0 for _, a in present)


def test_segmentation_helpers():
    seg = PhaseSegmentation.from_starts((2, 2, 5, 6), 8)
    assert seg.ranges == ((0, 2), (2, 2), (2, 5), (5, 6), (6, 8))
    assert seg.labels() == [0, 0, 2, 2, 2, 3, 4, 4]
    assert PhaseSegmentation.from_labels(seg.labels()) == seg
    assert seg.range_of("c") == (2, 5)
    seg.check(8)
    with pytest.raises(ValueError):
        seg.check(9)


def test_frozen_types():
    box = BoundingBox(0.1, 0.1, 0.1, 0.1)
    with pytest.raises(dataclasses.FrozenInstanceError):
        box.x = 0.5
