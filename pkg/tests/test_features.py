import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdm.features import (
    BASE_MASK,
    FEATURE_INDEX,
    FEATURE_NAMES,
    FULL_MASK,
    N_FEATURES,
    PHASE_FEATURES,
    depth_features,
    dumps_feature_table,
    hand_carry,
    loads_feature_table,
    parse_mask,
    phase_features,
    video_features,
)
from tdm.geometry import containment, iou
from tdm.tracks import PHASES, BoundingBox, FrameAnnotation, PhaseSegmentation, VideoSample

from .strategies import GRID, boxes, samples, segmentations


def grid_iou(p, q):
    """Count unit cells of the 1/GRID lattice covered by each box."""
    def cells(b):
        x0, y0 = round(b.x * GRID), round(b.y * GRID)
        x1, y1 = round((b.x + b.w) * GRID), round((b.y + b.h) * GRID)
        return {(i, j) for i in range(x0, x1) for j in range(y0, y1)}

    a, b = cells(p), cells(q)
    return Fraction(len(a & b), len(a | b))


def test_iou_examples():
    box = BoundingBox(0.1, 0.2, 0.3, 0.4)
    assert iou(box, box) == 1.0
    assert iou(BoundingBox(0, 0, 0.2, 0.2), BoundingBox(0.5, 0.5, 0.2, 0.2)) == 0.0
    assert iou(BoundingBox(0, 0, 0.5, 0.5), BoundingBox(0.25, 0.25, 0.5, 0.5)) == pytest.approx(0.0625 / 0.4375)
    assert iou(BoundingBox(0, 0, 0.5, 0.5), BoundingBox(0.25, 0.25, 0.5, 0.5)) == pytest.approx(1 / 7)


@settings(max_examples=300, deadline=None)
@given(boxes(), boxes())
def test_iou_matches_grid_count(p, q):
    v = iou(p, q)
    assert v == pytest.approx(float(grid_iou(p, q)), abs=1e-12)
    assert v == iou(q, p)
    assert 0.0 <= v <= 1.0
    assert (v == 1.0) == (p == q)


@given(boxes())
def test_iou_one_only_for_identical(p):
    q = BoundingBox(p.x, p.y, p.w, np.nextafter(p.h, 0))
    assert iou(p, q) < 1.0


def test_containment_bounds():
    outer = BoundingBox(0.1, 0.1, 0.5, 0.5)
    assert containment(BoundingBox(0.2, 0.2, 0.1, 0.1), outer) == 1.0
    assert containment(BoundingBox(0.7, 0.7, 0.1, 0.1), outer) == 0.0
    assert containment(BoundingBox(0.55, 0.2, 0.1, 0.1), outer) == pytest.approx(0.5)


# -- hand carry ---------------------------------------------------------------


def _moving(hand_steps, obj_steps):
    """Build frames from per-step displacements of hand and object1."""
    hx, hy, ox, oy = 0.3, 0.3, 0.3, 0.4
    frames = [FrameAnnotation(0, object1=BoundingBox(ox, oy, 0.1, 0.1), hand=BoundingBox(hx, hy, 0.1, 0.1))]
    for t, ((dhx, dhy), (dox, doy)) in enumerate(zip(hand_steps, obj_steps), start=1):
        hx, hy, ox, oy = hx + dhx, hy + dhy, ox + dox, oy + doy
        frames.append(FrameAnnotation(t, object1=BoundingBox(ox, oy, 0.1, 0.1), hand=BoundingBox(hx, hy, 0.1, 0.1)))
    return VideoSample("c", tuple(frames))


def test_carry_identical_motion():
    steps = [(0.02, 0.01)] * 5
    s = _moving(steps, steps)
    assert hand_carry(s, (0, 6), 1) == 1.0


def test_carry_static_object():
    s = _moving([(0.02, 0.0)] * 4, [(0.0, 0.0)] * 4)
    assert hand_carry(s, (0, 5), 1) == 0.0


def test_carry_three_of_four():
    hand = [(0.02, 0.0), (0.0, 0.02), (0.02, 0.0), (0.0, -0.02)]
    obj = [(0.02, 0.0), (0.0, 0.02), (-0.02, 0.0), (0.0, -0.02)]
    s = _moving(hand, obj)
    assert hand_carry(s, (0, 5), 1, angle_threshold=0.8) == 0.75


def test_carry_no_qualifying_pairs():
    s = _moving([(0.02, 0.0)] * 3, [(0.02, 0.0)] * 3)
    assert hand_carry(s, (0, 4), 2) == 0.0  # object2 never present
    assert hand_carry(s, (0, 1), 1) == 0.0  # frame 0 has no previous frame


# -- phase features ----------------------------------------------------------------


def _static(box1, box2=None, n=2, **extra):
    frames = tuple(FrameAnnotation(t, object1=box1, object2=box2, **extra) for t in range(n))
    return VideoSample("s", frames)


ALL_C = PhaseSegmentation(((0, 0), (0, 0), (0, 2), (2, 2), (2, 2)))


def test_empty_phase_is_zero():
    s = _static(BoundingBox(0.1, 0.1, 0.2, 0.2))
    v = phase_features(s, ALL_C, "a")
    assert v.shape == (len(PHASE_FEATURES),) == (22,)
    assert not v.any()


def test_size_and_motion():
    s = _static(BoundingBox(0.1, 0.1, 0.2, 0.2))
    v = dict(zip(PHASE_FEATURES, phase_features(s, ALL_C, "c")))
    assert v["size1"] == pytest.approx(0.04)
    assert v["motion1"] == 0.0
    assert v["presence_1"] == 1.0 and v["presence_2"] == 0.0 and v["presence_h"] == 0.0


def test_full_containment():
    s = _static(BoundingBox(0.3, 0.3, 0.1, 0.1), BoundingBox(0.2, 0.2, 0.4, 0.4), n=3)
    seg = PhaseSegmentation.from_starts((0, 0, 3, 3), 3)
    v = dict(zip(PHASE_FEATURES, phase_features(s, seg, "c")))
    assert v["containment_12"] == 1.0
    assert v["vert_offset_12"] == pytest.approx(-0.05)
    assert v["horiz_offset_12"] == pytest.approx(-0.05)
    assert v["iou_12"] == pytest.approx(0.01 / 0.16)


def test_relative_motion_sign():
    frames = tuple(
        FrameAnnotation(t, object1=BoundingBox(0.1 + 0.05 * t, 0.4, 0.1, 0.1), object2=BoundingBox(0.7, 0.4, 0.1, 0.1))
        for t in range(4)
    )
    s = VideoSample("r", frames)
    seg = PhaseSegmentation.from_starts((0, 0, 4, 4), 4)
    v = dict(zip(PHASE_FEATURES, phase_features(s, seg, "c")))
    assert v["rel_motion_12"] == pytest.approx(-0.05)
    assert v["motion1"] == pytest.approx(0.05)


# -- depth ---------------------------------------------------------------------


def test_depth_constant():
    s = _static(BoundingBox(0.1, 0.1, 0.1, 0.1), BoundingBox(0.5, 0.5, 0.1, 0.1), n=3,
                depth_object1=0.2, depth_object2=-0.3)
    seg = PhaseSegmentation.from_starts((0, 0, 3, 3), 3)
    assert depth_features(s, seg, "c") == pytest.approx((0.2, -0.3, 0.0, 0.5))


def test_depth_missing():
    s = _static(BoundingBox(0.1, 0.1, 0.1, 0.1))
    assert depth_features(s, ALL_C, "c") == (0.0, 0.0, 0.0, 0.0)


def swap_objects(s):
    frames = tuple(
        dataclasses.replace(
            f,
            object1=f.object2,
            object2=f.object1,
            depth_object1=f.depth_object2,
            depth_object2=f.depth_object1,
            container_object1=f.container_object2,
            container_object2=f.container_object1,
        )
        for f in s.frames
    )
    return dataclasses.replace(s, frames=frames)


@settings(max_examples=150, deadline=None)
@given(samples(min_frames=1, max_frames=10), st.data())
def test_depth_difference_antisymmetric(s, data):
    seg = data.draw(segmentations(len(s)))
    swapped = swap_objects(s)
    for p in PHASES:
        d1, d2, dh, diff = depth_features(s, seg, p)
        e1, e2, eh, ediff = depth_features(swapped, seg, p)
        assert (e1, e2, eh) == (d2, d1, dh)
        assert ediff == -diff


# -- full vector ---------------------------------------------------------------


def test_feature_names():
    assert len(FEATURE_NAMES) == N_FEATURES == 117
    assert len(set(FEATURE_NAMES)) == 117
    for name in ("c.depth_diff_12", "b.motion_hand", "container_object1", "e.phase_present"):
        assert name in FEATURE_INDEX


def _rich_sample():
    frames = []
    for t in range(6):
        frames.append(FrameAnnotation(
            t,
            object1=BoundingBox(0.1 + 0.02 * t, 0.2, 0.1, 0.1),
            object2=BoundingBox(0.5, 0.5, 0.2, 0.2),
            hand=BoundingBox(0.1 + 0.02 * t, 0.1, 0.1, 0.1),
            depth_object1=0.1 * t,
            depth_object2=-0.2,
            depth_hand=0.05,
            container_object1=0.3,
            container_object2=0.9,
        ))
    return VideoSample("r", tuple(frames))


def test_masks():
    s = _rich_sample()
    seg = PhaseSegmentation.from_starts((1, 2, 4, 5), 6)
    full = video_features(s, seg, FULL_MASK)
    base = video_features(s, seg, BASE_MASK)
    depth_idx = [FEATURE_INDEX[f"{p}.{n}"] for p in PHASES for n in ("depth1", "depth2", "depth_hand", "depth_diff_12")]
    cont_idx = [FEATURE_INDEX["container_object1"], FEATURE_INDEX["container_object2"]]
    assert full[depth_idx].any() and full[cont_idx].all()
    assert not base[depth_idx].any() and not base[cont_idx].any()
    others = np.setdiff1d(np.arange(N_FEATURES), depth_idx + cont_idx)
    assert np.array_equal(full[others], base[others])
    assert full[FEATURE_INDEX["container_object2"]] == pytest.approx(0.9)
    assert full[FEATURE_INDEX["b.carry_1"]] == 1.0
    assert full[FEATURE_INDEX["a.phase_present"]] == 1.0


def test_parse_mask():
    assert parse_mask("base, depth") == frozenset({"base", "depth"})
    with pytest.raises(ValueError):
        parse_mask("base,colour")
    with pytest.raises(ValueError):
        parse_mask("")


def translate(s, dx, dy):
    frames = tuple(
        dataclasses.replace(f, **{e: f.box(e).translated(dx, dy) for e in ("object1", "object2", "hand") if f.box(e)})
        for f in s.frames
    )
    return dataclasses.replace(s, frames=frames)


@settings(max_examples=150, deadline=None)
@given(samples(max_frames=10, limit=48), st.integers(0, 16), st.integers(0, 16), st.data())
def test_translation_invariance(s, dx, dy, data):
    seg = data.draw(segmentations(len(s)))
    moved = translate(s, dx / GRID, dy / GRID)
    assert np.array_equal(video_features(s, seg), video_features(moved, seg))


@settings(max_examples=150, deadline=None)
@given(samples(max_frames=12), st.data(), st.sets(st.sampled_from(["base", "depth", "container"]), min_size=1))
def test_dimension_and_presence(s, data, mask):
    seg = data.draw(segmentations(len(s)))
    v = video_features(s, seg, mask)
    assert v.shape == (117,)
    assert np.isfinite(v).all()
    full = video_features(s, seg)
    for p, (start, end) in zip(PHASES, seg.ranges):
        block = full[FEATURE_INDEX[f"{p}.size1"]: FEATURE_INDEX[f"{p}.size1"] + 22]
        assert full[FEATURE_INDEX[f"{p}.phase_present"]] == float(end > start)
        if end == start:
            assert not block.any()
            continue
        for entity, name in (("object1", "presence_1"), ("object2", "presence_2"), ("hand", "presence_h")):
            count = sum(s.frames[t].box(entity) is not None for t in range(start, end))
            assert full[FEATURE_INDEX[f"{p}.{name}"]] == count / (end - start)
        for name in ("iou_12", "iou_1h", "iou_2h", "carry_1", "carry_2", "containment_12"):
            assert 0.0 <= full[FEATURE_INDEX[f"{p}.{name}"]] <= 1.0


def test_feature_table_round_trip():
    s = _rich_sample()
    seg = PhaseSegmentation.from_starts((1, 2, 4, 5), 6)
    rows = [("r", 106, video_features(s, seg)), ("q", None, np.zeros(117))]
    text = dumps_feature_table(rows)
    assert text.splitlines()[0].startswith("video_id,class_id,a.size1,")
    back = loads_feature_table(text)
    assert [(r[0], r[1]) for r in back] == [("r", 106), ("q", None)]
    assert np.array_equal(back[0][2], rows[0][2])
    assert dumps_feature_table(back) == text
