"""Feature-group ablation on synthetic data, printed as a per-class P/R table.

    python scripts/run_ablation.py [--n-per-class 50] [--depth-signal 1.0] [--seed 0] [--trees 100]

Trains one bundle per mask on the same split and prints every row under a
shared header, plus the per-class recall change versus the base-only row.
"""
import argparse
import time

from tdm.evaluation import render_comparison
from tdm.forest import ForestParams
from tdm.pipeline import evaluate_models, train_models
from tdm.synthetic import ScenarioParams, gen_splits

MASKS = (
    ("base", {"base"}),
    ("base+depth", {"base", "depth"}),
    ("base+container", {"base", "container"}),
    ("full", {"base", "depth", "container"}),
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-per-class", type=int, default=50)
    ap.add_argument("--n-eval-per-class", type=int, default=50)
    ap.add_argument("--depth-signal", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    scenario = ScenarioParams(depth_signal=args.depth_signal, seed=args.seed)
    train, evaluation = gen_splits(args.n_per_class, args.n_eval_per_class, scenario)
    params = ForestParams(n_trees=args.trees, seed=args.seed)

    reports = []
    for name, mask in MASKS:
        start = time.perf_counter()
        models = train_models(train, params, mask, n_jobs=args.jobs)
        reports.append(evaluate_models(models, evaluation, name))
        print(f"# {name}: {time.perf_counter() - start:.1f}s")

    print(render_comparison(reports), end="")
    base = reports[0]
    print("\nrecall change vs base:")
    for r in reports[1:]:
        cells = " ".join(f"{c}:{x - b:+.2f}" for c, x, b in zip(r.classes, r.recall, base.recall))
        print(f"  {r.model_id:<15} {cells}  macro:{r.macro_recall - base.macro_recall:+.2f}")


if __name__ == "__main__":
    main()
