"""Synthetic "putting something into / onto / underneath something" tracks.

A static reference object (object2) sits in the scene. The hand enters from the
left carrying object1 (phase b), places it (c), leaves (d), and the result stays
visible (e). The three classes differ only in where object1 ends up and, for
"underneath", in how far behind object2 it ends in depth. That depth gap is
scaled by ``depth_signal`` so experiments can dial the depth cue up or down.

Timing, scene layout, depth and jitter are drawn from separate random streams
that do not depend on the class, so with ``depth_signal=0`` two classes
generated from the same seed carry identical depth tracks.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tracks import BoundingBox, FrameAnnotation, PhaseSegmentation, VideoSample

INTO, ONTO, UNDERNEATH = 106, 112, 118
CLASS_IDS = (INTO, ONTO, UNDERNEATH)

# Raw depth by which object1 ends up behind object2 for "underneath" at depth_signal=1.
UNDERNEATH_DEPTH_GAP = 0.6
_HAND_DEPTH_LEAD = 0.05
_MIN_SIZE = 0.01
_EDGE_MARGIN = 0.015


@dataclass(frozen=True)
class ScenarioParams:
    n_frames: int = 40
    noise_sigma: float = 0.005
    depth_noise_sigma: float = 0.02
    depth_signal: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 5:
            raise ValueError("n_frames must be >= 5")
        if self.noise_sigma < 0 or self.depth_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.depth_signal <= 1.0:
            raise ValueError("depth_signal must lie in [0, 1]")


def _streams(seed: int) -> dict:
    names = ("timing", "scene", "place", "depth", "jitter", "container")
    seqs = np.random.SeedSequence(seed & ((1 << 64) - 1)).spawn(len(names))
    return {name: np.random.default_rng(s) for name, s in zip(names, seqs)}


def _phase_starts(n: int, rng: np.random.Generator) -> tuple:
    fa, fb, fc, fd = rng.uniform(0.10, 0.18), rng.uniform(0.20, 0.28), rng.uniform(0.15, 0.22), rng.uniform(0.15, 0.22)
    b = int(round(n * fa))
    c = min(int(round(n * (fa + fb))), n - 1)
    d = min(max(c + 1, int(round(n * (fa + fb + fc)))), n)
    e = min(max(d, int(round(n * (fa + fb + fc + fd)))), n)
    return b, c, d, e


def _progress(t: int, start: int, end: int) -> float:
    # reaches 1 on the last frame of the phase
    return (t - start + 1) / (end - start)


def _lerp(p, q, s):
    return (p[0] + (q[0] - p[0]) * s, p[1] + (q[1] - p[1]) * s)


def _box(center, size) -> list:
    return [center[0] - size[0] / 2.0, center[1] - size[1] / 2.0, size[0], size[1]]


def _finish_box(raw, jitter) -> BoundingBox:
    x, y, w, h = (np.asarray(raw, dtype=float) + jitter).tolist()
    w = min(max(w, _MIN_SIZE), 1.0)
    h = min(max(h, _MIN_SIZE), 1.0)
    x = min(max(x, 0.0), 1.0 - w)
    y = min(max(y, 0.0), 1.0 - h)
    return BoundingBox(x, y, w, h)


def gen_sample(class_id: int, params: ScenarioParams = ScenarioParams(), video_id: str = None) -> VideoSample:
    """One labelled synthetic video; deterministic in ``(class_id, params)``."""
    if class_id not in CLASS_IDS:
        raise ValueError(f"class_id must be one of {CLASS_IDS}, got {class_id!r}")
    rng = _streams(params.seed)
    n = params.n_frames
    sb, sc, sd, se = _phase_starts(n, rng["timing"])

    scene = rng["scene"]
    w2, h2 = scene.uniform(0.24, 0.32), scene.uniform(0.22, 0.30)
    x2, y2 = scene.uniform(0.50, 0.62), scene.uniform(0.35, 0.50)
    w1, h1 = scene.uniform(0.07, 0.10), scene.uniform(0.07, 0.10)
    wh, hh = scene.uniform(0.09, 0.12), scene.uniform(0.10, 0.13)
    lift = scene.uniform(0.08, 0.15)
    entry_cy, exit_cy = scene.uniform(0.30, 0.60), scene.uniform(0.20, 0.60)
    x_frac = scene.uniform(0.0, 1.0)

    place = rng["place"]
    x1 = x2 + _EDGE_MARGIN + x_frac * (w2 - w1 - 2 * _EDGE_MARGIN)
    if class_id == INTO:
        bottom = y2 + h2 - place.uniform(0.0, 0.06)
    elif class_id == UNDERNEATH:
        bottom = y2 + h2 + place.uniform(-0.03, 0.05)
    else:
        bottom = y2 + place.uniform(0.0, 0.03)
    final1 = (x1 + w1 / 2.0, bottom - h1 / 2.0)
    above = (final1[0], final1[1] - lift)
    entry1 = (w1 / 2.0 + 0.01, entry_cy)
    grip = (0.0, -(h1 + hh) / 4.0)  # hand centre sits over the top half of object1
    exit_h = (wh / 2.0 + 0.01, exit_cy)

    dep = rng["depth"]
    d2 = dep.uniform(1.8, 2.2)
    d_near = d2 - dep.uniform(0.35, 0.50)
    gap = UNDERNEATH_DEPTH_GAP * params.depth_signal if class_id == UNDERNEATH else 0.0
    d_final = d2 + gap
    depth_noise = dep.normal(0.0, 1.0, size=(n, 3)) * params.depth_noise_sigma
    jitter = rng["jitter"].normal(0.0, 1.0, size=(n, 3, 4)) * params.noise_sigma
    cont = rng["container"]
    cont_base = cont.uniform(0.0, 1.0, size=2)
    cont_noise = cont.normal(0.0, 0.05, size=(n, 2))

    frames = []
    for t in range(n):
        kw = {"index": t}
        c1 = hc = None
        dep1 = deph = None
        if sb <= t < sc:
            c1 = _lerp(entry1, above, _progress(t, sb, sc))
            hc = (c1[0] + grip[0], c1[1] + grip[1])
            dep1 = d_near
            deph = dep1 - _HAND_DEPTH_LEAD
        elif sc <= t < sd:
            s = _progress(t, sc, sd)
            c1 = _lerp(above, final1, s)
            hc = (c1[0] + grip[0], c1[1] + grip[1])
            dep1 = d_near + (d_final - d_near) * s
            deph = dep1 - _HAND_DEPTH_LEAD
        elif t >= sd:
            c1 = final1
            dep1 = d_final
            if t < se:
                release = (final1[0] + grip[0], final1[1] + grip[1])
                s = _progress(t, sd, se)
                hc = _lerp(release, exit_h, s)
                deph = (d_final - _HAND_DEPTH_LEAD) + ((d_near - _HAND_DEPTH_LEAD) - (d_final - _HAND_DEPTH_LEAD)) * s

        kw["object2"] = _finish_box([x2, y2, w2, h2], jitter[t, 1])
        kw["depth_object2"] = d2 + depth_noise[t, 1]
        kw["container_object2"] = float(np.clip(cont_base[1] + cont_noise[t, 1], 0.0, 1.0))
        if c1 is not None:
            kw["object1"] = _finish_box(_box(c1, (w1, h1)), jitter[t, 0])
            kw["depth_object1"] = dep1 + depth_noise[t, 0]
            kw["container_object1"] = float(np.clip(cont_base[0] + cont_noise[t, 0], 0.0, 1.0))
        if hc is not None:
            kw["hand"] = _finish_box(_box(hc, (wh, hh)), jitter[t, 2])
            kw["depth_hand"] = deph + depth_noise[t, 2]
        frames.append(FrameAnnotation(**{k: (float(v) if isinstance(v, np.floating) else v) for k, v in kw.items()}))

    if video_id is None:
        video_id = f"synth-{class_id}-{params.seed & 0xFFFFFFFF:08x}"
    truth = PhaseSegmentation.from_starts((sb, sc, sd, se), n)
    return VideoSample(video_id, tuple(frames), class_id, truth)


def sample_seed(root_seed: int, class_id: int, k: int) -> int:
    """64-bit seed for sample *k* of *class_id*, derived from the root seed."""
    seq = np.random.SeedSequence([root_seed & ((1 << 64) - 1), class_id, k])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def gen_dataset(n_per_class: int, params: ScenarioParams = ScenarioParams(), classes=CLASS_IDS) -> list:
    """``n_per_class`` videos of every class, interleaved class by class."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out = []
    for k in range(n_per_class):
        for c in classes:
            p = replace(params, seed=sample_seed(params.seed, c, k))
            out.append(gen_sample(c, p, video_id=f"synth-{c}-{k:04d}"))
    return out


def gen_splits(n_train: int, n_eval: int, params: ScenarioParams = ScenarioParams()) -> tuple:
    """Disjoint train and eval sets; the eval root seed is ``params.seed + 1``."""
    train = gen_dataset(n_train, params)
    evaluation = gen_dataset(n_eval, replace(params, seed=params.seed + 1))
    evaluation = [replace(s, video_id=s.video_id.replace("synth-", "synth-eval-")) for s in evaluation]
    return train, evaluation
