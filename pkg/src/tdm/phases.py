"""Five-phase temporal segmentation of a video.

Each action class learns one diagonal Gaussian per phase over small per-frame
descriptors. A video is segmented by the monotone a->e labelling that maximizes
the summed log-likelihood, found exactly by dynamic programming.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import centroid_distance, iou
from .tracks import PHASES, PhaseSegmentation, VideoSample

DESCRIPTOR_NAMES = (
    "hand_present",
    "hand_speed",
    "object1_speed",
    "object2_speed",
    "hand_obj1_distance",
    "hand_obj2_distance",
    "obj1_obj2_distance",
    "overlap_hand_obj1",
    "overlap_hand_obj2",
    "obj1_present",
    "obj2_present",
)
N_DESCRIPTOR = len(DESCRIPTOR_NAMES)

# Larger than any in-frame centroid distance (sqrt 2), so absence never looks like proximity.
ABSENT_DISTANCE = 1.5
DEFAULT_VARIANCE_FLOOR = 1e-4
BRUTE_FORCE_MAX_FRAMES = 16

_C = 2  # index of phase c, the only phase that may not be empty

# Allowed label transitions between consecutive frames: never backwards, never skipping c.
_ALLOWED_NEXT = tuple(
    tuple(q for q in range(5) if q >= p and not (p < _C < q)) for p in range(5)
)
_START_LABELS = (0, 1, 2)
_END_LABELS = (2, 3, 4)


class TrainingError(ValueError):
    pass


def _speed(prev, cur) -> float:
    if prev is None or cur is None:
        return 0.0
    return math.hypot(cur.cx - prev.cx, cur.cy - prev.cy)


def frame_descriptor(sample: VideoSample, index: int, absent_distance: float = ABSENT_DISTANCE) -> np.ndarray:
    """Return the 11-dim descriptor of frame *index* (order: ``DESCRIPTOR_NAMES``)."""
    n = len(sample.frames)
    if not 0 <= index < n:
        raise IndexError(f"frame index {index} out of range for {n} frames")
    f = sample.frames[index]
    prev = sample.frames[index - 1] if index > 0 else None
    o1, o2, h = f.object1, f.object2, f.hand

    def dist(p, q):
        return absent_distance if p is None or q is None else centroid_distance(p, q)

    def overlap(p, q):
        return 0.0 if p is None or q is None else iou(p, q)

    return np.array(
        [
            float(h is not None),
            _speed(prev and prev.hand, h),
            _speed(prev and prev.object1, o1),
            _speed(prev and prev.object2, o2),
            dist(h, o1),
            dist(h, o2),
            dist(o1, o2),
            overlap(h, o1),
            overlap(h, o2),
            float(o1 is not None),
            float(o2 is not None),
        ]
    )


def descriptor_matrix(sample: VideoSample, absent_distance: float = ABSENT_DISTANCE) -> np.ndarray:
    """Stack the descriptors of every frame into an ``(n, 11)`` array."""
    return np.stack([frame_descriptor(sample, t, absent_distance) for t in range(len(sample.frames))])


@dataclass(frozen=True)
class PhaseModel:
    """Per-phase diagonal Gaussians over frame descriptors.

    ``means`` and ``variances`` have shape ``(5, n_dims)``, rows in phase order.
    """

    means: np.ndarray
    variances: np.ndarray
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    absent_distance: float = ABSENT_DISTANCE

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        if means.shape != variances.shape or means.ndim != 2 or means.shape[0] != 5:
            raise ValueError("means and variances must both have shape (5, n_dims)")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if np.any(variances < self.variance_floor):
            raise ValueError("variances must be >= variance_floor")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    def __eq__(self, other):
        if not isinstance(other, PhaseModel):
            return NotImplemented
        return (
            np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
            and self.variance_floor == other.variance_floor
            and self.absent_distance == other.absent_distance
        )

    __hash__ = None

    def frame_scores(self, descriptors: np.ndarray) -> np.ndarray:
        """Log-likelihood of every frame under every phase, shape ``(n, 5)``."""
        d = np.asarray(descriptors, dtype=float)
        quad = (d[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :]
        norm = np.log(2.0 * np.pi * self.variances)
        return (-0.5 * quad - 0.5 * norm[None, :, :]).sum(axis=2)

    def to_dict(self) -> dict:
        return {
            "format": "tdm-phase-v1",
            "variance_floor": self.variance_floor,
            "absent_distance": self.absent_distance,
            "phases": {
                p: {"mean": self.means[i].tolist(), "variance": self.variances[i].tolist()}
                for i, p in enumerate(PHASES)
            },
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "PhaseModel":
        if rec.get("format") != "tdm-phase-v1":
            raise ValueError(f"unsupported phase model format {rec.get('format')!r}")
        phases = rec["phases"]
        return cls(
            means=np.array([phases[p]["mean"] for p in PHASES], dtype=float),
            variances=np.array([phases[p]["variance"] for p in PHASES], dtype=float),
            variance_floor=float(rec["variance_floor"]),
            absent_distance=float(rec.get("absent_distance", ABSENT_DISTANCE)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PhaseModel":
        return cls.from_dict(json.loads(text))


def _fsum_stats(rows: np.ndarray) -> tuple:
    # fsum keeps the result independent of row order.
    n = rows.shape[0]
    mean = np.array([math.fsum(col) / n for col in rows.T])
    var = np.array([math.fsum((col - m) ** 2) / n for col, m in zip(rows.T, mean)])
    return mean, var


def fit_phase_model_from_descriptors(
    labelled: Sequence[tuple],
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    absent_distance: float = ABSENT_DISTANCE,
) -> PhaseModel:
    """Fit from ``(descriptor_matrix, PhaseSegmentation)`` pairs."""
    if not variance_floor > 0:
        raise ValueError("variance_floor must be positive")
    pooled = {p: [] for p in range(5)}
    for desc, seg in labelled:
        for p, (start, end) in enumerate(seg.ranges):
            if end > start:
                pooled[p].append(np.asarray(desc[start:end], dtype=float))
    means, variances = [], []
    for p in range(5):
        if not pooled[p]:
            raise TrainingError(f"phase {PHASES[p]} has no training frames")
        mean, var = _fsum_stats(np.concatenate(pooled[p]))
        means.append(mean)
        variances.append(np.maximum(var, variance_floor))
    return PhaseModel(np.array(means), np.array(variances), variance_floor, absent_distance)


def fit_phase_model(
    samples: Sequence[VideoSample],
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    absent_distance: float = ABSENT_DISTANCE,
) -> PhaseModel:
    """Learn per-phase descriptor means and (population) variances from labelled videos."""
    labelled = []
    for s in samples:
        if s.phase_truth is None:
            raise TrainingError(f"video {s.video_id!r} has no phase labels")
        labelled.append((descriptor_matrix(s, absent_distance), s.phase_truth))
    return fit_phase_model_from_descriptors(labelled, variance_floor, absent_distance)


def phase_log_score(model: PhaseModel, d: np.ndarray, p) -> float:
    """Diagonal-Gaussian log-likelihood of descriptor *d* under phase *p*."""
    i = PHASES.index(p) if isinstance(p, str) else int(p)
    mu, var = model.means[i], model.variances[i]
    d = np.asarray(d, dtype=float)
    return float(np.sum(-0.5 * (d - mu) ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)))


def exact_scores(scores: np.ndarray) -> list:
    """Convert a float score table to Python ints on a common binary scale.

    Every finite double is an integer multiple of a power of two, so sums and
    comparisons of the converted values are exact; ties are real ties.
    """
    ratios = [[float(v).as_integer_ratio() for v in row] for row in np.asarray(scores, dtype=float)]
    denom = max((den for row in ratios for _, den in row), default=1)
    return [[num * (denom // den) for num, den in row] for row in ratios]


def best_labelling(scores) -> list:
    """Maximum-score monotone labelling of an ``(n, 5)`` score table.

    Labels never decrease, never jump over phase c, start in a..c and end in
    c..e. Among optimal labellings the lexicographically largest label sequence
    is returned, which is the one whose phase start frames are earliest.
    """
    table = exact_scores(scores)
    n = len(table)
    if n == 0:
        raise ValueError("cannot segment an empty video")
    # value[t][p]: best total over frames t..n-1 with frame t labelled p (None = infeasible)
    value = [[None] * 5 for _ in range(n)]
    for p in _END_LABELS:
        value[n - 1][p] = table[n - 1][p]
    for t in range(n - 2, -1, -1):
        nxt = value[t + 1]
        for p in range(5):
            cands = [nxt[q] for q in _ALLOWED_NEXT[p] if nxt[q] is not None]
            if cands:
                value[t][p] = table[t][p] + max(cands)

    def pick(options, row):
        # ties go to the largest label
        best = None
        for q in options:
            v = row[q]
            if v is not None and (best is None or v >= row[best]):
                best = q
        return best

    labels = [pick(_START_LABELS, value[0])]
    for t in range(1, n):
        labels.append(pick(_ALLOWED_NEXT[labels[-1]], value[t]))
    return labels


def segment_scores(scores) -> PhaseSegmentation:
    return PhaseSegmentation.from_labels(best_labelling(scores))


def segment(model: PhaseModel, sample: VideoSample) -> PhaseSegmentation:
    """Best legal five-phase segmentation of *sample* under *model*."""
    scores = model.frame_scores(descriptor_matrix(sample, model.absent_distance))
    return segment_scores(scores)


def legal_starts(n: int):
    """Every (b, c, d, e) start tuple of a legal segmentation, in lexicographic order."""
    for b, c, d, e in itertools.combinations_with_replacement(range(n + 1), 4):
        if c < d:
            yield (b, c, d, e)


def brute_force_segment_scores(scores) -> PhaseSegmentation:
    table = exact_scores(scores)
    n = len(table)
    if n == 0:
        raise ValueError("cannot segment an empty video")
    if n > BRUTE_FORCE_MAX_FRAMES:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_MAX_FRAMES} frames, got {n}")
    best, best_total = None, None
    for starts in legal_starts(n):
        bounds = (0, *starts, n)
        total = 0
        for p in range(5):
            for t in range(bounds[p], bounds[p + 1]):
                total += table[t][p]
        if best_total is None or total > best_total:
            best, best_total = starts, total
    return PhaseSegmentation.from_starts(best, n)


def brute_force_segment(model: PhaseModel, sample: VideoSample) -> PhaseSegmentation:
    """Exhaustive reference for :func:`segment` (videos of at most 16 frames)."""
    n = len(sample.frames)
    if n > BRUTE_FORCE_MAX_FRAMES:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_MAX_FRAMES} frames, got {n}")
    scores = model.frame_scores(descriptor_matrix(sample, model.absent_distance))
    return brute_force_segment_scores(scores)


def segmentation_score(scores, seg: PhaseSegmentation) -> float:
    """Total log-score of *seg*, summed with correct rounding."""
    s = np.asarray(scores, dtype=float)
    return math.fsum(s[t, p] for t, p in enumerate(seg.labels()))
