"""Command-line entry point: ``tdm <validate|synth|train|evaluate|segment|features>``.

Settings resolve as defaults < JSON config file (``--config``) < flags. The
resolved config is echoed to stderr on every run. Exit codes: 0 success,
1 data/validation/training error, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .evaluation import render_report
from .features import dumps_feature_table, format_mask, parse_mask, video_features
from .forest import ForestParams
from .phases import ABSENT_DISTANCE, DEFAULT_VARIANCE_FLOOR, segment
from .pipeline import evaluate_models, load_bundle, save_bundle, train_models
from .synthetic import ScenarioParams, gen_splits
from .tracks import DEFAULT_MAX_GAP, load_dataset, prepare, save_dataset

log = logging.getLogger("tdm")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    train: Optional[str] = None
    eval: Optional[str] = None
    model_dir: Optional[str] = None
    out: Optional[str] = None
    format: str = "table"
    model_id: str = "tdm"
    mask: str = "base,depth,container"
    trees: int = 100
    max_depth: int = 8
    min_leaf: int = 2
    candidate_features: int = ForestParams.n_candidate_features
    seed: int = 0
    jobs: int = 1
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    absent_distance: float = ABSENT_DISTANCE
    max_gap: int = DEFAULT_MAX_GAP
    phase_examples: Optional[int] = None
    n_per_class: int = 50
    n_eval_per_class: int = 50
    n_frames: int = 40
    noise_sigma: float = 0.005
    depth_noise_sigma: float = 0.02
    depth_signal: float = 1.0

    def forest_params(self) -> ForestParams:
        return ForestParams(self.trees, self.max_depth, self.min_leaf, self.candidate_features, self.seed)

    def scenario(self) -> ScenarioParams:
        return ScenarioParams(self.n_frames, self.noise_sigma, self.depth_noise_sigma, self.depth_signal, self.seed)

    def feature_mask(self) -> frozenset:
        return parse_mask(self.mask)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


_CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path}: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - _CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"config file {path}: unknown key(s) {', '.join(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _CONFIG_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    cfg.feature_mask()  # reject bad mask names early
    if cfg.format not in ("table", "csv"):
        raise ValueError(f"format must be table or csv, got {cfg.format!r}")
    return cfg


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file of RunConfig defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--mask", help="comma list from base,depth,container")
    p.add_argument("--trees", type=int)
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--min-leaf", type=int, dest="min_leaf")
    p.add_argument("--candidate-features", type=int, dest="candidate_features")
    p.add_argument("--out", help="output path (file, or directory for synth)")
    p.add_argument("--format", choices=("table", "csv"))
    p.add_argument("--train", help="training dataset file")
    p.add_argument("--eval", help="evaluation dataset file")
    p.add_argument("--model-dir", dest="model_dir")
    p.add_argument("--model-id", dest="model_id")
    p.add_argument("--jobs", type=int, help="worker threads for forest training")
    p.add_argument("--max-gap", type=int, dest="max_gap")
    p.add_argument("--variance-floor", type=float, dest="variance_floor")
    p.add_argument("--absent-distance", type=float, dest="absent_distance")
    p.add_argument("--phase-examples", type=int, dest="phase_examples",
                   help="labelled videos per class used to fit phase models (default: all)")
    p.add_argument("--n-per-class", type=int, dest="n_per_class")
    p.add_argument("--n-eval-per-class", type=int, dest="n_eval_per_class")
    p.add_argument("--n-frames", type=int, dest="n_frames")
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    p.add_argument("--depth-noise-sigma", type=float, dest="depth_noise_sigma")
    p.add_argument("--depth-signal", type=float, dest="depth_signal")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="tdm", description="Top-down action recognition from object and hand box tracks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("validate", parents=[common], help="parse a dataset file and check invariants")
    p.add_argument("file")
    sub.add_parser("synth", parents=[common], help="write synthetic train/eval datasets")
    sub.add_parser("train", parents=[common], help="fit phase models and one-vs-rest forests")
    sub.add_parser("evaluate", parents=[common], help="score a trained bundle on an eval set")
    p = sub.add_parser("segment", parents=[common], help="print phase boundaries per class model")
    p.add_argument("file")
    p.add_argument("--video-id", dest="video_id")
    p.add_argument("--class", type=int, dest="class_id")
    p = sub.add_parser("features", parents=[common], help="dump the feature table")
    p.add_argument("file")
    p.add_argument("--class", type=int, dest="class_id",
                   help="segment with this class's phase model (needs --model-dir); default: ground-truth phases")
    return parser


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate(cfg: RunConfig, args) -> int:
    samples = load_dataset(args.file)
    labelled = sum(s.phase_truth is not None for s in samples)
    print(f"ok: {len(samples)} samples ({labelled} with phase labels) in {args.file}")
    return EXIT_OK


def cmd_synth(cfg: RunConfig, args) -> int:
    out = Path(cfg.out or ".")
    train_path = Path(cfg.train) if cfg.train else out / "train.jsonl"
    eval_path = Path(cfg.eval) if cfg.eval else out / "eval.jsonl"
    train, evaluation = gen_splits(cfg.n_per_class, cfg.n_eval_per_class, cfg.scenario())
    for path, data in ((train_path, train), (eval_path, evaluation)):
        path.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(data, path)
        print(f"wrote {len(data)} samples to {path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    _require(cfg, "train", "model_dir")
    samples = load_dataset(cfg.train)
    models = train_models(
        samples,
        cfg.forest_params(),
        cfg.feature_mask(),
        variance_floor=cfg.variance_floor,
        absent_distance=cfg.absent_distance,
        max_gap=cfg.max_gap,
        phase_examples=cfg.phase_examples,
        n_jobs=cfg.jobs,
    )
    written = save_bundle(models, cfg.model_dir)
    print(f"trained {len(models)} class models on {len(samples)} samples; wrote {len(written)} files to {cfg.model_dir}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    _require(cfg, "eval", "model_dir")
    models = load_bundle(cfg.model_dir)
    bundle_mask = format_mask(next(iter(models.values())).mask)
    if args.mask is not None and format_mask(cfg.feature_mask()) != bundle_mask:
        raise ValueError(f"bundle in {cfg.model_dir} was trained with mask {bundle_mask}; retrain to use {args.mask}")
    samples = load_dataset(cfg.eval)
    report = evaluate_models(models, samples, cfg.model_id, cfg.max_gap)
    _write(render_report(report, cfg.format), cfg.out)
    return EXIT_OK


def _pick_models(cfg: RunConfig, args) -> dict:
    models = load_bundle(cfg.model_dir)
    if args.class_id is not None:
        if args.class_id not in models:
            raise ValueError(f"class {args.class_id} not in bundle {cfg.model_dir}")
        models = {args.class_id: models[args.class_id]}
    return models


def cmd_segment(cfg: RunConfig, args) -> int:
    _require(cfg, "model_dir")
    models = _pick_models(cfg, args)
    samples = load_dataset(args.file)
    if args.video_id is not None:
        samples = [s for s in samples if s.video_id == args.video_id]
        if not samples:
            raise ValueError(f"video {args.video_id!r} not found in {args.file}")
    lines = []
    for s in samples:
        prepared = prepare(s, cfg.max_gap)
        for cid in sorted(models):
            seg = segment(models[cid].phase_model, prepared)
            lines.append(f"{s.video_id}\tclass {cid}\t{seg.describe()}\n")
    _write("".join(lines), cfg.out)
    return EXIT_OK


def cmd_features(cfg: RunConfig, args) -> int:
    samples = [prepare(s, cfg.max_gap) for s in load_dataset(args.file)]
    mask = cfg.feature_mask()
    phase_model = None
    if args.class_id is not None:
        _require(cfg, "model_dir")
        phase_model = _pick_models(cfg, args)[args.class_id].phase_model
    rows = []
    for s in samples:
        if phase_model is not None:
            seg = segment(phase_model, s)
        elif s.phase_truth is not None:
            seg = s.phase_truth
        else:
            raise ValueError(f"video {s.video_id!r} has no phase labels; pass --model-dir and --class")
        rows.append((s.video_id, s.class_id, video_features(s, seg, mask)))
    _write(dumps_feature_table(rows), cfg.out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "segment": cmd_segment,
    "features": cmd_features,
}


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("TDM_LOG", "info").lower(), logging.INFO
    )
    root = logging.getLogger("tdm")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def run(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        cfg = resolve_config(args)
        print("config: " + cfg.to_json(), file=sys.stderr)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tdm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, TypeError) as exc:
        # ParseError, ValidationError and TrainingError are all ValueErrors
        print(f"tdm: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
