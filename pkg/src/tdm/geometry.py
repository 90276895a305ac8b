"""Pairwise bounding-box relations."""
from __future__ import annotations

import math

from .tracks import BoundingBox

_BELOW_ONE = math.nextafter(1.0, 0.0)


def intersection_area(p: BoundingBox, q: BoundingBox) -> float:
    w = min(p.x + p.w, q.x + q.w) - max(p.x, q.x)
    h = min(p.y + p.h, q.y + q.h) - max(p.y, q.y)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(p: BoundingBox, q: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    if p == q:
        return 1.0
    inter = intersection_area(p, q)
    if inter == 0.0:
        return 0.0
    union = p.area + q.area - inter
    # distinct boxes must stay strictly below 1 even when rounding says otherwise
    return min(_BELOW_ONE, inter / union)


def containment(inner: BoundingBox, outer: BoundingBox) -> float:
    """Fraction of *inner*'s area that lies inside *outer*."""
    # measure inner with the same edge arithmetic so full containment is exactly 1
    own = ((inner.x + inner.w) - inner.x) * ((inner.y + inner.h) - inner.y) or inner.area
    return min(1.0, intersection_area(inner, outer) / own)


def centroid_distance(p: BoundingBox, q: BoundingBox) -> float:
    return math.hypot(p.cx - q.cx, p.cy - q.cy)
