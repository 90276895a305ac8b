"""Interpretable per-phase relational features.

A video and its segmentation become one fixed 117-entry vector: 22 relations
for each of the five phases, five phase-present flags, and two video-level
container scores. Missing data is encoded as 0 next to explicit presence flags.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Optional

import numpy as np

from .geometry import centroid_distance, containment, iou
from .tracks import PHASES, PhaseSegmentation, VideoSample

PHASE_FEATURES = (
    "size1",
    "size2",
    "size_hand",
    "motion1",
    "motion2",
    "motion_hand",
    "rel_motion_12",
    "vert_offset_12",
    "horiz_offset_12",
    "iou_12",
    "iou_1h",
    "iou_2h",
    "carry_1",
    "carry_2",
    "containment_12",
    "presence_1",
    "presence_2",
    "presence_h",
    "depth1",
    "depth2",
    "depth_hand",
    "depth_diff_12",
)
DEPTH_FEATURES = ("depth1", "depth2", "depth_hand", "depth_diff_12")
N_PHASE_FEATURES = len(PHASE_FEATURES)

FEATURE_NAMES = tuple(
    [f"{p}.{name}" for p in PHASES for name in PHASE_FEATURES]
    + [f"{p}.phase_present" for p in PHASES]
    + ["container_object1", "container_object2"]
)
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

MASK_NAMES = ("base", "depth", "container")
FULL_MASK = frozenset(MASK_NAMES)
BASE_MASK = frozenset({"base"})

DEFAULT_ANGLE_THRESHOLD = 0.8
DEFAULT_SPEED_EPSILON = 0.005


def _group_of(name: str) -> str:
    if name.startswith("container_"):
        return "container"
    if name.split(".", 1)[1] in DEPTH_FEATURES:
        return "depth"
    return "base"


FEATURE_GROUPS = tuple(_group_of(n) for n in FEATURE_NAMES)


def parse_mask(text) -> frozenset:
    """Turn ``"base,depth"`` (or an iterable of names) into a mask set."""
    names = [t.strip() for t in text.split(",")] if isinstance(text, str) else list(text)
    names = [n for n in names if n]
    unknown = sorted(set(names) - FULL_MASK)
    if unknown:
        raise ValueError(f"unknown feature group(s) {', '.join(unknown)}; choose from {', '.join(MASK_NAMES)}")
    if not names:
        raise ValueError("feature mask must name at least one group")
    return frozenset(names)


def format_mask(mask: Iterable[str]) -> str:
    return ",".join(n for n in MASK_NAMES if n in set(mask))


def mask_vector(mask: Iterable[str]) -> np.ndarray:
    mask = set(mask)
    return np.array([g in mask for g in FEATURE_GROUPS])


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def _displacement(prev, cur) -> tuple:
    return cur.cx - prev.cx, cur.cy - prev.cy


def hand_carry(
    sample: VideoSample,
    frame_range: tuple,
    object_slot: int,
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD,
    speed_epsilon: float = DEFAULT_SPEED_EPSILON,
) -> float:
    """Fraction of frame pairs in which the object moves along with the hand.

    Only frames with a previous frame where hand and object are present in both
    count. A pair qualifies when both displacements exceed *speed_epsilon* and
    their cosine exceeds *angle_threshold*.
    """
    if object_slot not in (1, 2):
        raise ValueError("object_slot must be 1 or 2")
    entity = f"object{object_slot}"
    start, end = frame_range
    pairs = hits = 0
    for t in range(max(start, 1), end):
        prev, cur = sample.frames[t - 1], sample.frames[t]
        h0, h1, o0, o1 = prev.hand, cur.hand, prev.box(entity), cur.box(entity)
        if h0 is None or h1 is None or o0 is None or o1 is None:
            continue
        pairs += 1
        hx, hy = _displacement(h0, h1)
        ox, oy = _displacement(o0, o1)
        hn, on = math.hypot(hx, hy), math.hypot(ox, oy)
        if hn > speed_epsilon and on > speed_epsilon and (hx * ox + hy * oy) / (hn * on) > angle_threshold:
            hits += 1
    return hits / pairs if pairs else 0.0


def depth_features(sample: VideoSample, seg: PhaseSegmentation, p) -> tuple:
    """(depth1, depth2, depth_hand, depth_diff_12) averaged over phase *p*."""
    start, end = seg.range_of(p)
    frames = sample.frames[start:end]
    d1 = [f.depth_object1 for f in frames if f.depth_object1 is not None]
    d2 = [f.depth_object2 for f in frames if f.depth_object2 is not None]
    dh = [f.depth_hand for f in frames if f.depth_hand is not None]
    diff = [
        f.depth_object1 - f.depth_object2
        for f in frames
        if f.depth_object1 is not None and f.depth_object2 is not None
    ]
    return _mean(d1), _mean(d2), _mean(dh), _mean(diff)


def phase_features(
    sample: VideoSample,
    seg: PhaseSegmentation,
    p,
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD,
    speed_epsilon: float = DEFAULT_SPEED_EPSILON,
) -> np.ndarray:
    """The 22 relations of one phase, ordered as ``PHASE_FEATURES``."""
    start, end = seg.range_of(p)
    if end <= start:
        return np.zeros(N_PHASE_FEATURES)
    frames = sample.frames
    span = range(start, end)
    n = end - start

    def boxes(entity):
        return [frames[t].box(entity) for t in span if frames[t].box(entity) is not None]

    def motion(entity):
        return _mean(
            centroid_distance(frames[t - 1].box(entity), frames[t].box(entity))
            for t in span
            if t > 0 and frames[t].box(entity) is not None and frames[t - 1].box(entity) is not None
        )

    both12 = [(frames[t].object1, frames[t].object2) for t in span
              if frames[t].object1 is not None and frames[t].object2 is not None]

    def pair_iou(a, b):
        return _mean(iou(frames[t].box(a), frames[t].box(b)) for t in span
                     if frames[t].box(a) is not None and frames[t].box(b) is not None)

    rel_motion = _mean(
        centroid_distance(frames[t].object1, frames[t].object2)
        - centroid_distance(frames[t - 1].object1, frames[t - 1].object2)
        for t in span
        if t > 0
        and None not in (frames[t].object1, frames[t].object2, frames[t - 1].object1, frames[t - 1].object2)
    )
    b1, b2, bh = boxes("object1"), boxes("object2"), boxes("hand")
    out = [
        _mean(b.area for b in b1),
        _mean(b.area for b in b2),
        _mean(b.area for b in bh),
        motion("object1"),
        motion("object2"),
        motion("hand"),
        rel_motion,
        _mean(o1.cy - o2.cy for o1, o2 in both12),
        _mean(o1.cx - o2.cx for o1, o2 in both12),
        pair_iou("object1", "object2"),
        pair_iou("object1", "hand"),
        pair_iou("object2", "hand"),
        hand_carry(sample, (start, end), 1, angle_threshold, speed_epsilon),
        hand_carry(sample, (start, end), 2, angle_threshold, speed_epsilon),
        _mean(containment(o1, o2) for o1, o2 in both12),
        len(b1) / n,
        len(b2) / n,
        len(bh) / n,
        *depth_features(sample, seg, p),
    ]
    return np.array(out, dtype=float)


def container_features(sample: VideoSample) -> tuple:
    """Video-level mean container probability of object1 and object2."""
    c1 = [f.container_object1 for f in sample.frames if f.container_object1 is not None]
    c2 = [f.container_object2 for f in sample.frames if f.container_object2 is not None]
    return _mean(c1), _mean(c2)


def video_features(
    sample: VideoSample,
    seg: PhaseSegmentation,
    mask: Iterable[str] = FULL_MASK,
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD,
    speed_epsilon: float = DEFAULT_SPEED_EPSILON,
) -> np.ndarray:
    """Assemble the 117-entry vector; groups outside *mask* are zeroed, never dropped."""
    parts = [phase_features(sample, seg, p, angle_threshold, speed_epsilon) for p in PHASES]
    flags = [float(e > s) for s, e in seg.ranges]
    vec = np.concatenate([*parts, flags, container_features(sample)])
    vec[~mask_vector(mask)] = 0.0
    return vec


# -- feature table -------------------------------------------------------------

TABLE_HEADER = ("video_id", "class_id") + FEATURE_NAMES


def dumps_feature_table(rows: Iterable[tuple]) -> str:
    """CSV text for ``(video_id, class_id, vector)`` rows; floats at full precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for video_id, class_id, vec in rows:
        writer.writerow([video_id, "" if class_id is None else class_id, *(repr(float(v)) for v in vec)])
    return buf.getvalue()


def loads_feature_table(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != TABLE_HEADER:
        raise ValueError("feature table header does not match the expected columns")
    rows = []
    for row in reader:
        class_id: Optional[int] = int(row[1]) if row[1] else None
        rows.append((row[0], class_id, np.array([float(v) for v in row[2:]])))
    return rows
