"""Command-line entry point: generate, train, eval, baseline, tune, experiment.

Exit codes: 0 success, 1 usage error, 2 data/format or I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as pio
from .benchmarks import PROBLEMS, generate_dataset, get_problem
from .choice_core import InvalidArgument
from .evaluation import evaluate, random_baseline_report
from .experiment import Protocol, make_tuned_fit, run_problem
from .losses import LossWeights
from .training import Architecture, TrainConfig, TrainingDiverged, train
from .tuning import SearchSpace

logger = logging.getLogger("pareto_choice")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
THREADS_ENV = "PARETO_CHOICE_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment. Keys match flag names."""
    out = {}
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _weights(text: str) -> LossWeights:
    try:
        return LossWeights.from_sequence(float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _problems(text: str) -> list[str]:
    names = [s.strip().upper() for s in text.split(",") if s.strip()]
    if names == ["ALL"]:
        return list(PROBLEMS)
    bad = [n for n in names if n not in PROBLEMS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown problem(s) {bad}; choose from {', '.join(PROBLEMS)} or ALL")
    return names


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=_positive_int, default=500)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--max-lr", type=float, default=1e-2)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pareto-choice", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # --config is accepted before or after the command name
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value file supplying defaults")

    g = sub.add_parser("generate", parents=[common], help="write a benchmark choice dataset as JSON Lines")
    g.add_argument("--problem", required=True)
    g.add_argument("--tasks", type=_positive_int, default=40960)
    g.add_argument("--size", type=_positive_int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", parents=[common], help="train an embedding network on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--val", help="optional validation dataset for per-epoch A-mean")
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--log", help="training log CSV path (default: <out>.log.csv)")
    t.add_argument("--weights", type=_weights, default=LossWeights(), help="alpha_po,alpha_dom,alpha_mds,alpha_l2")
    t.add_argument("--hidden-layers", type=int, default=1)
    t.add_argument("--hidden-units", type=_positive_int, default=32)
    t.add_argument("--output-dim", type=_positive_int, default=2)
    _add_train_flags(t)

    e = sub.add_parser("eval", parents=[common], help="score a model on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default="all")
    e.add_argument("--repetition", type=int)

    b = sub.add_parser("baseline", parents=[common], help="score random Bernoulli(p) choices")
    b.add_argument("--data", required=True)
    b.add_argument("--p", type=float, default=0.5)
    b.add_argument("--trials", type=_positive_int, default=10000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)

    u = sub.add_parser("tune", parents=[common], help="tune hyperparameters on a train/validation split of a dataset")
    u.add_argument("--data", required=True)
    u.add_argument("--budget", type=_positive_int, default=60)
    u.add_argument("--val-frac", type=float, default=1.0 / 9.0)
    u.add_argument("--method", choices=["bo", "random"], default="bo")
    u.add_argument("--pin-mds", action="store_true", help="fix the MDS weight at 0")
    u.add_argument("--out", required=True, help="trial log CSV")
    u.add_argument("--best", help="write the best configuration as JSON")
    _add_train_flags(u)

    x = sub.add_parser("experiment", parents=[common], help="full protocol: generate, tune, cross-validate, plot")
    x.add_argument("--problems", type=_problems, default=list(PROBLEMS), help="comma list or ALL")
    x.add_argument("--tasks", type=_positive_int, default=40960)
    x.add_argument("--size", type=_positive_int, default=10)
    x.add_argument("--reps", type=_positive_int, default=5)
    x.add_argument("--test-frac", type=float, default=0.1)
    x.add_argument("--val-frac", type=float, default=1.0 / 9.0)
    x.add_argument("--budget", type=_positive_int, default=60)
    x.add_argument("--method", choices=["bo", "random"], default="bo")
    x.add_argument("--ablate-mds", action="store_true")
    x.add_argument("--out-dir", required=True)
    _add_train_flags(x)
    return parser


_BOOL_KEYS = {"ablate_mds", "pin_mds"}


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = read_config(known.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        command = next((a for a in argv if a in COMMANDS), None)
        if command is None:
            raise UsageError("a command is required")
        sub = parser._subparsers._group_actions[0].choices[command]
        known_keys = {a.dest for a in sub._actions}
        unknown = set(cfg) - known_keys
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
        defaults = {}
        for k, v in cfg.items():
            defaults[k] = v.lower() in ("1", "true", "yes", "on") if k in _BOOL_KEYS else v
        sub.set_defaults(**defaults)
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
    return parser.parse_args(argv)


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def cmd_generate(args) -> None:
    spec = get_problem(args.problem)
    data = generate_dataset(spec, args.tasks, args.size, args.seed)
    fp = pio.save_dataset(data, args.out)
    logger.info("wrote %d tasks to %s (fingerprint %s)", len(data), args.out, fp)


def cmd_train(args) -> None:
    data, fingerprint = pio.load_dataset(args.data)
    val = pio.load_dataset(args.val)[0] if args.val else None
    arch = Architecture(args.hidden_layers, args.hidden_units, args.output_dim)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, max_lr=args.max_lr,
                      weights=args.weights, optimizer=args.optimizer, seed=args.seed)
    report = train(data, val, arch, cfg)
    meta = {
        "training": cfg.to_dict(),
        "seed": cfg.seed,
        "dataset_fingerprint": fingerprint,
        "problem": data.problem,
    }
    pio.save_model(report.params, args.out, meta)
    log_path = args.log or f"{args.out}.log.csv"
    pio.write_csv(log_path, pio.LOG_COLUMNS, pio.training_log_rows(report))
    logger.info("final loss %.6f after %d steps", report.epochs[-1].loss.total, report.steps)


def cmd_eval(args) -> None:
    params, meta = pio.load_model(args.model)
    data, _ = pio.load_dataset(args.data)
    if params.input_dim != data.d:
        raise UsageError(f"model expects {params.input_dim} features but dataset has {data.d}")
    rep = evaluate(data, params, split=args.split, repetition=args.repetition)
    pio.write_csv(args.out, pio.EVAL_COLUMNS, [pio.eval_row(rep)])


def cmd_baseline(args) -> None:
    data, _ = pio.load_dataset(args.data)
    rep = random_baseline_report(data, args.p, args.trials, args.seed)
    pio.write_csv(args.out, pio.EVAL_COLUMNS, [pio.eval_row(rep)])


def cmd_tune(args) -> None:
    data, fingerprint = pio.load_dataset(args.data)
    n = len(data)
    n_val = int(round(n * args.val_frac))
    if not 1 <= n_val < n:
        raise UsageError(f"validation fraction {args.val_frac} leaves an empty split of {n} tasks")
    perm = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0,))).permutation(n)
    val, tr = data.subset(np.sort(perm[:n_val])), data.subset(np.sort(perm[n_val:]))
    space = SearchSpace().pin(2, 0.0) if args.pin_mds else SearchSpace()
    base = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, optimizer=args.optimizer)
    fit = make_tuned_fit(space, args.budget, base, method=args.method)
    _, result = fit(tr, val, args.seed)
    rows = []
    for t in result.trials:
        a = t.config.alphas
        rows.append({
            "trial": t.index, "proposal": t.proposal, "val_a_mean": t.score,
            "alpha_po": a[0], "alpha_dom": a[1], "alpha_mds": a[2], "alpha_l2": a[3],
            "max_lr": t.config.max_lr, "hidden_layers": t.config.hidden_layers,
            "hidden_units": t.config.hidden_units, "wall_clock": t.wall_clock,
        })
    cols = ["trial", "proposal", "val_a_mean", "alpha_po", "alpha_dom", "alpha_mds", "alpha_l2",
            "max_lr", "hidden_layers", "hidden_units", "wall_clock"]
    pio.write_csv(args.out, cols, rows)
    if args.best:
        doc = {"config": result.best.config.to_dict(), "val_a_mean": result.best.score,
               "trial": result.best.index, "dataset_fingerprint": fingerprint, "seed": args.seed}
        pio.atomic_write(args.best, json.dumps(doc, indent=1) + "\n")


def _experiment_protocol(args) -> Protocol:
    return Protocol(
        n_tasks=args.tasks, m=args.size, reps=args.reps, test_frac=args.test_frac, val_frac=args.val_frac,
        budget=args.budget, tune_method=args.method,
        train=TrainConfig(epochs=args.epochs, batch_size=args.batch_size, optimizer=args.optimizer),
        seed=args.seed,
    )


def _run_one(problem: str, protocol: Protocol, ablate: bool):
    res = run_problem(problem, protocol, ablate=ablate)
    return problem, {arm: cv for arm, cv in res.arms.items()}, len(res.data)


def experiment_rows(problem: str, arms: dict, n_tasks: int):
    summary, detail = [], []
    for arm, cv in arms.items():
        summary.append({
            "problem": problem, "arm": arm, "reps": len(cv.reports), "n_tasks": n_tasks,
            "mean_a_mean": cv.mean, "std_a_mean": cv.std,
            "rep_a_means": ";".join(repr(float(r.mean)) for r in cv.reports),
        })
        for r in cv.reports:
            detail.append({"arm": arm, **pio.eval_row(r, problem)})
    return summary, detail


def cmd_experiment(args) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    protocol = _experiment_protocol(args)
    workers = min(_threads(), len(args.problems))
    summary, detail = [], []

    def flush():
        pio.write_csv(out / "summary.csv", pio.SUMMARY_COLUMNS, summary)
        pio.write_csv(out / "repetitions.csv", ["arm"] + pio.EVAL_COLUMNS, detail)

    def add(result):
        s, d = experiment_rows(*result)
        summary.extend(s)
        detail.extend(d)
        flush()

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, p, protocol, args.ablate_mds) for p in args.problems]
            for f in futures:
                add(f.result())
    else:
        for p in args.problems:
            add(_run_one(p, protocol, args.ablate_mds))
    bars = [{"label": r["problem"], "group": r["arm"], "value": r["mean_a_mean"], "std": r["std_a_mean"]}
            for r in summary]
    pio.atomic_write(out / "a_mean.svg", pio.bar_chart_svg(bars))


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "tune": cmd_tune,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"pareto-choice: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, InvalidArgument) as exc:
        print(f"pareto-choice: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pio.FormatError as exc:
        print(f"pareto-choice: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"pareto-choice: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"pareto-choice: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
