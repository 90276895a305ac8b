"""End-to-end training, prediction and evaluation over VideoSample lists."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .evaluation import EvalReport, evaluate_pairs
from .features import FULL_MASK, format_mask, video_features
from .forest import ForestParams, argmax_class, class_probabilities, dumps_model, model_from_dict, train_one_vs_rest
from .phases import ABSENT_DISTANCE, DEFAULT_VARIANCE_FLOOR, PhaseModel, fit_phase_model, segment
from .tracks import DEFAULT_MAX_GAP, SSV2_PUTTING, ActionClass, VideoSample, prepare

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "tdm-bundle-v1"
_KNOWN_NAMES = {c.id: c.name for c in SSV2_PUTTING}


def dataset_classes(samples: Iterable[VideoSample]) -> list:
    ids = sorted({s.class_id for s in samples if s.class_id is not None})
    return [ActionClass(i, _KNOWN_NAMES.get(i, f"class {i}")) for i in ids]


def fit_phase_models(
    samples: Sequence[VideoSample],
    class_ids: Iterable[int],
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    absent_distance: float = ABSENT_DISTANCE,
    max_examples: Optional[int] = None,
) -> dict:
    """One phase model per class from that class's phase-labelled videos."""
    models = {}
    for cid in class_ids:
        labelled = [s for s in samples if s.class_id == cid and s.phase_truth is not None]
        if max_examples is not None:
            labelled = labelled[:max_examples]
        log.info("class %s: fitting phase model on %d labelled videos", cid, len(labelled))
        models[cid] = fit_phase_model(labelled, variance_floor, absent_distance)
    return models


def train_models(
    samples: Sequence[VideoSample],
    params: ForestParams = ForestParams(),
    mask=FULL_MASK,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    absent_distance: float = ABSENT_DISTANCE,
    max_gap: int = DEFAULT_MAX_GAP,
    phase_examples: Optional[int] = None,
    n_jobs: int = 1,
) -> dict:
    """Fit phase models and one-vs-rest forests; returns ``class_id -> ClassModel``.

    Every class looks at every training video through its own segmentation,
    exactly as it will at prediction time.
    """
    prepared = [prepare(s, max_gap) for s in samples]
    classes = dataset_classes(prepared)
    phase_models = fit_phase_models(prepared, [c.id for c in classes], variance_floor, absent_distance, phase_examples)
    views = {}
    for c in classes:
        pm = phase_models[c.id]
        views[c.id] = [(video_features(s, segment(pm, s), mask), s.class_id) for s in prepared]
    log.info("training %d forests of %d trees", len(classes), params.n_trees)
    return train_one_vs_rest(views, classes, params, phase_models, mask, n_jobs=n_jobs)


def predict(models: dict, samples: Sequence[VideoSample], max_gap: int = DEFAULT_MAX_GAP) -> list:
    return [argmax_class(class_probabilities(models, prepare(s, max_gap))) for s in samples]


def evaluate_models(
    models: dict,
    samples: Sequence[VideoSample],
    model_id: str = "tdm",
    max_gap: int = DEFAULT_MAX_GAP,
) -> EvalReport:
    labelled = [s for s in samples if s.class_id is not None]
    preds = predict(models, labelled, max_gap)
    classes = sorted(models)
    mask = format_mask(next(iter(models.values())).mask) if models else ""
    return evaluate_pairs([(s.class_id, p) for s, p in zip(labelled, preds)], classes, model_id, mask)


def save_bundle(models: dict, directory) -> list:
    """Write one forest file and one phase-model file per class plus an index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"format": BUNDLE_FORMAT, "classes": []}
    written = []
    for cid in sorted(models):
        m = models[cid]
        forest_name, phase_name = f"forest_{cid}.json", f"phase_{cid}.json"
        (directory / forest_name).write_text(dumps_model(m, phase_name if m.phase_model else None), encoding="utf-8")
        written.append(directory / forest_name)
        if m.phase_model is not None:
            (directory / phase_name).write_text(m.phase_model.dumps(), encoding="utf-8")
            written.append(directory / phase_name)
        index["classes"].append({"id": cid, "name": m.name, "forest": forest_name})
    (directory / "bundle.json").write_text(json.dumps(index, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    written.append(directory / "bundle.json")
    return written


def load_bundle(directory) -> dict:
    directory = Path(directory)
    index = json.loads((directory / "bundle.json").read_text(encoding="utf-8"))
    if index.get("format") != BUNDLE_FORMAT:
        raise ValueError(f"unsupported bundle format {index.get('format')!r}")
    models = {}
    for entry in index["classes"]:
        rec = json.loads((directory / entry["forest"]).read_text(encoding="utf-8"))
        phase = None
        if rec.get("phase_model"):
            phase = PhaseModel.loads((directory / rec["phase_model"]).read_text(encoding="utf-8"))
        m = model_from_dict(rec, phase)
        models[m.class_id] = m
    return models
