"""Gini decision-tree ensembles, one-vs-rest per action class.

Everything random is drawn from generators seeded by (root seed, class id,
tree index), so a trained forest is bit-reproducible no matter how many
threads build it.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .features import FULL_MASK, N_FEATURES, format_mask, parse_mask, video_features
from .phases import PhaseModel, segment
from .tracks import ActionClass, VideoSample

FOREST_FORMAT = "tdm-forest-v1"
_SEED_MASK = (1 << 64) - 1
# Minimum gain (in weighted-count units) for a split to count as an improvement.
_MIN_GAIN = 1e-12


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2
    n_candidate_features: int = math.ceil(math.sqrt(N_FEATURES))
    seed: int = 0

    def __post_init__(self):
        for name in ("n_trees", "max_depth", "min_leaf", "n_candidate_features"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Tree:
    """Flat binary tree. Node 0 is the root; ``feature == -1`` marks a leaf.

    Internal nodes send ``x[feature] <= threshold`` left. Leaves store the
    positive fraction of the training rows that reached them.
    """

    feature: tuple
    threshold: tuple
    left: tuple
    right: tuple
    value: tuple
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def leaf_value(self, x) -> float:
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return self.value[i]

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold, dtype=float)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        return np.asarray(self.value, dtype=float)[node]

    def to_nodes(self) -> list:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"kind": "leaf", "value": self.value[i]})
            else:
                nodes.append({
                    "kind": "split",
                    "feature": self.feature[i],
                    "threshold": self.threshold[i],
                    "left": self.left[i],
                    "right": self.right[i],
                })
        return nodes

    @classmethod
    def from_nodes(cls, nodes: list, n_features: int) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []
        for node in nodes:
            if node["kind"] == "leaf":
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(node["value"]))
            else:
                feature.append(int(node["feature"]))
                threshold.append(float(node["threshold"]))
                left.append(int(node["left"]))
                right.append(int(node["right"]))
                value.append(0.0)
        return cls(tuple(feature), tuple(threshold), tuple(left), tuple(right), tuple(value), n_features)


def gini(labels) -> float:
    """Gini impurity 1 - p^2 - (1-p)^2 of a binary label multiset."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("gini of an empty label set is undefined")
    p = float(np.count_nonzero(labels)) / labels.size
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _purity(pos, n):
    # sum over classes of count^2 / n; larger means purer. Maximizing the
    # children's total is the same as minimizing their weighted Gini.
    neg = n - pos
    return (pos * pos + neg * neg) / n


def _best_split(X, y, candidates, min_gain):
    """Return (feature, threshold) of the best split or None."""
    n = y.size
    total_pos = int(y.sum())
    parent = _purity(float(total_pos), float(n))
    best = None
    best_score = parent + min_gain
    for j in candidates:
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        v = col[order]
        cut = np.nonzero(v[:-1] < v[1:])[0]
        if cut.size == 0:
            continue
        pos_left = np.cumsum(y[order])[cut].astype(float)
        n_left = (cut + 1).astype(float)
        score = _purity(pos_left, n_left) + _purity(total_pos - pos_left, n - n_left)
        k = int(np.argmax(score))
        if score[k] > best_score:
            best_score = score[k]
            lo, hi = v[cut[k]], v[cut[k] + 1]
            thr = lo + (hi - lo) / 2.0
            # midpoint can round up to hi for adjacent floats
            best = (int(j), float(thr if thr < hi else lo))
    return best


def train_tree(rows, labels, rng: np.random.Generator, params: ForestParams) -> Tree:
    """Grow one Gini tree on *rows* (no resampling; see :func:`train_forest`)."""
    X = np.asarray(rows, dtype=float)
    y = np.asarray(labels).astype(int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("rows must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValueError(f"got {y.size} labels for {X.shape[0]} rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    d = X.shape[1]
    k = min(params.n_candidate_features, d)

    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        yy = y[idx]
        value.append(float(yy.mean()))
        n_pos = int(yy.sum())
        if depth >= params.max_depth or n_pos in (0, idx.size) or idx.size < 2 * params.min_leaf:
            return node
        candidates = np.sort(rng.choice(d, size=k, replace=False))
        split = _best_split(X[idx], yy, candidates, _MIN_GAIN)
        if split is None:
            return node
        j, thr = split
        go_left = X[idx, j] <= thr
        feature[node], threshold[node], value[node] = j, thr, 0.0
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return Tree(tuple(feature), tuple(threshold), tuple(left), tuple(right), tuple(value), d)


def tree_generators(seed: int, key: Sequence[int], t: int) -> tuple:
    """Independent (bootstrap, feature-sampling) generators for tree *t*."""
    entropy = [seed & _SEED_MASK, *(k & _SEED_MASK for k in key), t]
    boot, feat = np.random.SeedSequence(entropy).spawn(2)
    return np.random.default_rng(boot), np.random.default_rng(feat)


def train_forest(rows, labels, params: ForestParams, key: Sequence[int] = (), n_jobs: int = 1) -> list:
    """Bagged ensemble of ``params.n_trees`` trees.

    Tree *t* sees a bootstrap resample drawn from a generator seeded by
    ``(params.seed, *key, t)``; *key* lets callers give each class its own stream.
    """
    X = np.asarray(rows, dtype=float)
    y = np.asarray(labels).astype(int)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("rows must be a non-empty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValueError(f"got {y.size} labels for {X.shape[0]} rows")
    n = X.shape[0]

    def build(t):
        boot_rng, feat_rng = tree_generators(params.seed, key, t)
        idx = boot_rng.integers(0, n, size=n)
        return train_tree(X[idx], y[idx], feat_rng, params)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(build, range(params.n_trees)))
    return [build(t) for t in range(params.n_trees)]


def predict_proba_batch(forest: Sequence[Tree], X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    for tree in forest:
        if X.shape[1] != tree.n_features:
            raise ValueError(f"expected {tree.n_features} features, got {X.shape[1]}")
    # fixed tree-by-tree summation: a row's result must not depend on the batch it came in
    total = np.zeros(X.shape[0])
    for tree in forest:
        total += tree.predict_batch(X)
    return total / len(forest)


def predict_proba(forest: Sequence[Tree], x) -> float:
    """Mean leaf fraction reached by *x* over all trees."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a single feature vector")
    return float(predict_proba_batch(forest, x[None, :])[0])


# -- one-vs-rest ---------------------------------------------------------------


@dataclass(frozen=True)
class ClassModel:
    class_id: int
    trees: tuple
    params: ForestParams
    mask: frozenset = FULL_MASK
    phase_model: Optional[PhaseModel] = None
    name: str = ""

    def proba(self, x) -> float:
        return predict_proba(self.trees, x)


def _class_id(c) -> int:
    return c.id if isinstance(c, ActionClass) else int(c)


def train_one_vs_rest(
    dataset,
    classes: Iterable,
    params: ForestParams,
    phase_models: Optional[Mapping[int, PhaseModel]] = None,
    mask: Iterable[str] = FULL_MASK,
    n_jobs: int = 1,
) -> dict:
    """Train one binary forest per class: that class positive, all others negative.

    *dataset* is a sequence of ``(feature_vector, class_id)`` pairs shared by
    every class, or a mapping ``class_id -> pairs`` when each class sees the
    data through its own segmentation.
    """
    classes = list(classes)
    names = {c.id: c.name for c in classes if isinstance(c, ActionClass)}
    ids = [_class_id(c) for c in classes]
    if len(set(ids)) != len(ids):
        raise TrainingError("class ids must be unique")
    models = {}
    for cid in ids:
        pairs = dataset[cid] if isinstance(dataset, Mapping) else dataset
        X = np.array([np.asarray(v, dtype=float) for v, _ in pairs])
        y = np.array([int(label == cid) for _, label in pairs])
        if y.sum() == 0:
            raise TrainingError(f"class {cid} has no positive training examples")
        trees = train_forest(X, y, params, key=(cid,), n_jobs=n_jobs)
        models[cid] = ClassModel(
            class_id=cid,
            trees=tuple(trees),
            params=params,
            mask=frozenset(mask),
            phase_model=None if phase_models is None else phase_models[cid],
            name=names.get(cid, ""),
        )
    return models


def class_probabilities(models: Mapping[int, ClassModel], sample: VideoSample, mask=None) -> dict:
    """Segment *sample* with each class's own phase model and score it with its forest."""
    out = {}
    for cid in sorted(models):
        m = models[cid]
        if m.phase_model is None:
            raise ValueError(f"class {cid} has no phase model")
        seg = segment(m.phase_model, sample)
        x = video_features(sample, seg, m.mask if mask is None else mask)
        out[cid] = m.proba(x)
    return out


def argmax_class(probabilities: Mapping[int, float]) -> int:
    """Highest-probability class; ties go to the lowest class id."""
    if not probabilities:
        raise ValueError("no class probabilities to arbitrate")
    return min(probabilities, key=lambda c: (-probabilities[c], c))


def predict_class(models: Mapping[int, ClassModel], sample: VideoSample, mask=None) -> int:
    if not models:
        raise ValueError("need at least one class model")
    return argmax_class(class_probabilities(models, sample, mask))


# -- persistence ---------------------------------------------------------------


def model_to_dict(model: ClassModel, phase_ref: Optional[str]) -> dict:
    return {
        "format": FOREST_FORMAT,
        "class_id": model.class_id,
        "name": model.name,
        "params": asdict(model.params),
        "mask": format_mask(model.mask),
        "phase_model": phase_ref,
        "n_features": model.trees[0].n_features if model.trees else N_FEATURES,
        "trees": [t.to_nodes() for t in model.trees],
    }


def model_from_dict(rec: dict, phase_model: Optional[PhaseModel] = None) -> ClassModel:
    if rec.get("format") != FOREST_FORMAT:
        raise ValueError(f"unsupported model format {rec.get('format')!r}")
    n_features = int(rec["n_features"])
    return ClassModel(
        class_id=int(rec["class_id"]),
        trees=tuple(Tree.from_nodes(nodes, n_features) for nodes in rec["trees"]),
        params=ForestParams(**rec["params"]),
        mask=parse_mask(rec["mask"]),
        phase_model=phase_model,
        name=rec.get("name", ""),
    )


def dumps_model(model: ClassModel, phase_ref: Optional[str]) -> str:
    return json.dumps(model_to_dict(model, phase_ref), sort_keys=True, separators=(",", ":")) + "\n"
