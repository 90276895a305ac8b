"""Annotated video tracks: data model, dataset ingestion, gap filling and depth normalization.

Boxes are stored as fractions of the frame size so that every derived feature is
resolution independent. A dataset file holds one JSON record per line.
"""
from __future__ import annotations

import dataclasses
import io
import json
import math
import statistics
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence, Union

PHASES = ("a", "b", "c", "d", "e")
ENTITIES = ("object1", "object2", "hand")
CONTAINER_ENTITIES = ("object1", "object2")

DEFAULT_MAX_GAP = 3
_BOUNDS_EPS = 1e-9


class ParseError(ValueError):
    """A dataset line could not be decoded into a record."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(ValueError):
    """A decoded record violates a data-model invariant."""

    def __init__(self, video_id: str, field_name: str, message: str):
        super().__init__(f"video {video_id!r}: {field_name}: {message}")
        self.video_id = video_id
        self.field = field_name


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)


@dataclass(frozen=True)
class FrameAnnotation:
    index: int
    object1: Optional[BoundingBox] = None
    object2: Optional[BoundingBox] = None
    hand: Optional[BoundingBox] = None
    depth_object1: Optional[float] = None
    depth_object2: Optional[float] = None
    depth_hand: Optional[float] = None
    container_object1: Optional[float] = None
    container_object2: Optional[float] = None

    def box(self, entity: str) -> Optional[BoundingBox]:
        return getattr(self, entity)

    def depth(self, entity: str) -> Optional[float]:
        return getattr(self, "depth_" + entity)


@dataclass(frozen=True)
class PhaseSegmentation:
    """Half-open frame ranges for phases a..e, in order.

    The ranges tile ``[0, n)`` without gaps; any phase except ``c`` may be empty.
    """

    ranges: tuple

    @classmethod
    def from_starts(cls, starts: Sequence[int], n: int) -> "PhaseSegmentation":
        """Build from the start frames of phases b, c, d, e (phase a starts at 0)."""
        bounds = (0, *starts, n)
        return cls(tuple((bounds[i], bounds[i + 1]) for i in range(5)))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "PhaseSegmentation":
        n = len(labels)
        starts = []
        for p in range(1, 5):
            starts.append(next((t for t, lab in enumerate(labels) if lab >= p), n))
        return cls.from_starts(starts, n)

    @property
    def n_frames(self) -> int:
        return self.ranges[-1][1]

    @property
    def starts(self) -> tuple:
        """Start frames of phases b..e; the tie-break key for segmentations."""
        return tuple(r[0] for r in self.ranges[1:])

    def range_of(self, phase: Union[str, int]) -> tuple:
        idx = PHASES.index(phase) if isinstance(phase, str) else phase
        return self.ranges[idx]

    def labels(self) -> list:
        out = []
        for p, (start, end) in enumerate(self.ranges):
            out.extend([p] * (end - start))
        return out

    def check(self, n: Optional[int] = None) -> None:
        """Raise ``ValueError`` unless the ranges form a legal segmentation."""
        if len(self.ranges) != 5:
            raise ValueError("segmentation needs exactly five phases")
        if self.ranges[0][0] != 0:
            raise ValueError("phase a must start at frame 0")
        for (s0, e0), (s1, _) in zip(self.ranges, self.ranges[1:]):
            if e0 != s1:
                raise ValueError("phase ranges must be consecutive")
        for s, e in self.ranges:
            if e < s:
                raise ValueError(f"negative-length phase range [{s}, {e})")
        c_start, c_end = self.ranges[2]
        if c_end <= c_start:
            raise ValueError("phase c must be non-empty")
        if n is not None and self.n_frames != n:
            raise ValueError(f"phases cover {self.n_frames} frames, video has {n}")

    def describe(self) -> str:
        return " ".join(f"{p}=[{s},{e})" for p, (s, e) in zip(PHASES, self.ranges))


@dataclass(frozen=True)
class VideoSample:
    video_id: str
    frames: tuple
    class_id: Optional[int] = None
    phase_truth: Optional[PhaseSegmentation] = None

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ActionClass:
    id: int
    name: str


SSV2_PUTTING = (
    ActionClass(106, "Putting something into something"),
    ActionClass(112, "Putting something onto something"),
    ActionClass(118, "Putting something underneath something"),
)


def validate(sample: VideoSample) -> VideoSample:
    """Check every invariant of *sample*; return it unchanged or raise ValidationError."""
    vid = sample.video_id
    if not isinstance(vid, str):
        raise ValidationError(str(vid), "video_id", "must be a string")
    if not sample.frames:
        raise ValidationError(vid, "frames", "must be non-empty")
    for t, frame in enumerate(sample.frames):
        if frame.index != t:
            raise ValidationError(vid, f"frames[{t}].index", f"expected {t}, got {frame.index}")
        for entity in ENTITIES:
            box = frame.box(entity)
            if box is not None:
                _check_box(vid, f"frames[{t}].{entity}", box)
            d = frame.depth(entity)
            if d is not None and not math.isfinite(d):
                raise ValidationError(vid, f"frames[{t}].depth.{entity}", "must be finite")
        for entity in CONTAINER_ENTITIES:
            p = getattr(frame, "container_" + entity)
            if p is not None and not (0.0 <= p <= 1.0):
                raise ValidationError(vid, f"frames[{t}].container.{entity}", "must lie in [0, 1]")
    if sample.phase_truth is not None:
        try:
            sample.phase_truth.check(len(sample.frames))
        except ValueError as exc:
            raise ValidationError(vid, "phases", str(exc)) from None
    return sample


def _check_box(vid: str, where: str, box: BoundingBox) -> None:
    name = where.rsplit(".", 1)[-1]
    for attr in ("x", "y", "w", "h"):
        if not math.isfinite(getattr(box, attr)):
            raise ValidationError(vid, f"{name}.{attr}", f"not finite at {where}")
    if box.x < 0 or box.y < 0:
        raise ValidationError(vid, f"{name}.x/y", f"negative origin at {where}")
    if box.w <= 0 or box.h <= 0:
        raise ValidationError(vid, f"{name}.w/h", f"non-positive size at {where}")
    if box.x + box.w > 1 + _BOUNDS_EPS:
        raise ValidationError(vid, f"{name}.x+w", f"{box.x + box.w:g} > 1 at {where}")
    if box.y + box.h > 1 + _BOUNDS_EPS:
        raise ValidationError(vid, f"{name}.y+h", f"{box.y + box.h:g} > 1 at {where}")


# -- serialization -------------------------------------------------------------


def _box_from_json(obj, vid: str, where: str) -> BoundingBox:
    if not isinstance(obj, dict):
        raise ValidationError(vid, where, "box must be an object with x, y, w, h")
    try:
        return BoundingBox(*(float(obj[k]) for k in ("x", "y", "w", "h")))
    except (KeyError, TypeError, ValueError):
        raise ValidationError(vid, where, "box must carry numeric x, y, w, h") from None


def _optional_float(obj: dict, key: str, vid: str, where: str) -> Optional[float]:
    if key not in obj or obj[key] is None:
        return None
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(vid, f"{where}.{key}", "must be a number")
    return float(value)


def record_to_sample(rec: dict) -> VideoSample:
    """Decode one parsed JSON record. Raises ValidationError on bad fields."""
    if not isinstance(rec, dict):
        raise ValidationError("?", "record", "must be a JSON object")
    vid = rec.get("video_id")
    if not isinstance(vid, str):
        raise ValidationError(str(vid), "video_id", "required string field")
    class_id = rec.get("class_id")
    if class_id is not None and (isinstance(class_id, bool) or not isinstance(class_id, int)):
        raise ValidationError(vid, "class_id", "must be an integer")
    raw_frames = rec.get("frames")
    if not isinstance(raw_frames, list):
        raise ValidationError(vid, "frames", "required array field")

    frames = []
    for t, raw in enumerate(raw_frames):
        if not isinstance(raw, dict) or isinstance(raw.get("index"), bool) or not isinstance(raw.get("index"), int):
            raise ValidationError(vid, f"frames[{t}].index", "required integer field")
        kw = {"index": raw["index"]}
        for entity in ENTITIES:
            if raw.get(entity) is not None:
                kw[entity] = _box_from_json(raw[entity], vid, entity)
        depth = raw.get("depth") or {}
        if not isinstance(depth, dict):
            raise ValidationError(vid, f"frames[{t}].depth", "must be an object")
        for entity in ENTITIES:
            kw["depth_" + entity] = _optional_float(depth, entity, vid, f"frames[{t}].depth")
        container = raw.get("container") or {}
        if not isinstance(container, dict):
            raise ValidationError(vid, f"frames[{t}].container", "must be an object")
        for entity in CONTAINER_ENTITIES:
            kw["container_" + entity] = _optional_float(container, entity, vid, f"frames[{t}].container")
        frames.append(FrameAnnotation(**kw))

    phase_truth = None
    if rec.get("phases") is not None:
        phases = rec["phases"]
        if not isinstance(phases, dict):
            raise ValidationError(vid, "phases", "must map phase letters to [start, end)")
        ranges = []
        for p in PHASES:
            pair = phases.get(p)
            if (not isinstance(pair, list) or len(pair) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) for v in pair)):
                raise ValidationError(vid, f"phases.{p}", "must be an integer [start, end) pair")
            ranges.append(tuple(pair))
        phase_truth = PhaseSegmentation(tuple(ranges))

    return validate(VideoSample(vid, tuple(frames), class_id, phase_truth))


def sample_to_record(sample: VideoSample) -> dict:
    rec = {"video_id": sample.video_id}
    if sample.class_id is not None:
        rec["class_id"] = sample.class_id
    frames = []
    for f in sample.frames:
        raw = {"index": f.index}
        for entity in ENTITIES:
            box = f.box(entity)
            if box is not None:
                raw[entity] = {"x": box.x, "y": box.y, "w": box.w, "h": box.h}
        depth = {e: f.depth(e) for e in ENTITIES if f.depth(e) is not None}
        if depth:
            raw["depth"] = depth
        container = {
            e: getattr(f, "container_" + e)
            for e in CONTAINER_ENTITIES
            if getattr(f, "container_" + e) is not None
        }
        if container:
            raw["container"] = container
        frames.append(raw)
    rec["frames"] = frames
    if sample.phase_truth is not None:
        rec["phases"] = {p: list(r) for p, r in zip(PHASES, sample.phase_truth.ranges)}
    return rec


def parse_dataset(source: Union[bytes, str, IO]) -> list:
    """Read line-delimited JSON records into validated samples, in file order.

    *source* may be a binary or text stream, raw bytes, or a string.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    samples = []
    for line_no, line in enumerate(source, start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(line_no, f"invalid UTF-8 ({exc.reason})") from None
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, exc.msg) from None
        if not isinstance(rec, dict):
            raise ParseError(line_no, "record must be a JSON object")
        samples.append(record_to_sample(rec))
    return samples


def dumps_dataset(samples: Iterable[VideoSample]) -> str:
    return "".join(json.dumps(sample_to_record(s), separators=(",", ":")) + "\n" for s in samples)


def load_dataset(path) -> list:
    with open(path, "rb") as fh:
        return parse_dataset(fh)


def save_dataset(samples: Iterable[VideoSample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_dataset(samples))


# -- cleaning ------------------------------------------------------------------


def _lerp(a: float, b: float, t: float) -> float:
    return a + (b - a) * t


def interpolate_missing(sample: VideoSample, max_gap: int = DEFAULT_MAX_GAP) -> VideoSample:
    """Bridge short detector dropouts by linear interpolation.

    Each entity is handled on its own. Runs of absent frames of length at most
    ``max_gap`` that sit strictly between two present frames get interpolated
    boxes (and depth when both endpoints have it). Leading and trailing runs
    are left alone.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    frames = list(sample.frames)
    for entity in ENTITIES:
        present = [t for t, f in enumerate(frames) if f.box(entity) is not None]
        for left, right in zip(present, present[1:]):
            gap = right - left - 1
            if gap == 0 or gap > max_gap:
                continue
            b0, b1 = frames[left].box(entity), frames[right].box(entity)
            d0, d1 = frames[left].depth(entity), frames[right].depth(entity)
            for t in range(left + 1, right):
                frac = (t - left) / (right - left)
                box = BoundingBox(
                    _lerp(b0.x, b1.x, frac),
                    _lerp(b0.y, b1.y, frac),
                    _lerp(b0.w, b1.w, frac),
                    _lerp(b0.h, b1.h, frac),
                )
                update = {entity: box}
                if d0 is not None and d1 is not None:
                    update["depth_" + entity] = _lerp(d0, d1, frac)
                frames[t] = dataclasses.replace(frames[t], **update)
    return dataclasses.replace(sample, frames=tuple(frames))


def normalize_depth(sample: VideoSample) -> VideoSample:
    """Median-center and range-scale all depth values of one video.

    Degenerate inputs (a single value, or all values equal) map every present
    depth to 0. Samples without depth come back unchanged.
    """
    keys = ["depth_" + e for e in ENTITIES]
    values = [getattr(f, k) for f in sample.frames for k in keys if getattr(f, k) is not None]
    if not values:
        return sample
    lo, hi = min(values), max(values)
    if len(values) >= 2 and hi > lo:
        med = statistics.median(values)
        span = hi - lo

        def rescale(v):
            return (v - med) / span
    else:

        def rescale(v):
            return 0.0

    frames = tuple(
        dataclasses.replace(f, **{k: rescale(getattr(f, k)) for k in keys if getattr(f, k) is not None})
        for f in sample.frames
    )
    return dataclasses.replace(sample, frames=frames)


def prepare(sample: VideoSample, max_gap: int = DEFAULT_MAX_GAP) -> VideoSample:
    """Standard cleaning applied before segmentation and feature extraction."""
    return normalize_depth(interpolate_missing(sample, max_gap))
